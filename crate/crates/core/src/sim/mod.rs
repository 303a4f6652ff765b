//! Deterministic 2D robot arena hosting the three combinatorial tasks.
//!
//! A unicycle robot (thrust + turn rate, linear drag) moves in a square
//! arena populated with circular zones. Each task reads the zone set
//! differently:
//!
//! - `PointTsp`: visit every zone; +1 per new zone, `lambda * t_rem` on success.
//! - `TimedTsp`: as above, but each zone carries a countdown and the episode
//!   fails as soon as an unvisited zone expires.
//! - `ColourMatch`: entering a zone cycles its colour; dense reward is the
//!   change in minimum-cycle distance to a uniform colouring.

mod colour;
mod config;
mod dynamics;
mod env;
pub mod scripted;

pub use colour::{hamming_bruteforce, hamming_distance, Colour};
pub use config::ArenaConfig;
pub use dynamics::{dynamics_step, RobotState};
pub use env::{
    generate_map, observe, step, Observation, StepOutcome, TaskKind, TaskState, Zone, ZoneStatus,
    GLOBAL_DIM,
};
