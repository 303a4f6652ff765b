use serde::{Deserialize, Serialize};

use super::ArenaConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub position: [f64; 2],
    /// Radians, unwrapped.
    pub heading: f64,
    /// Signed speed along the heading.
    pub speed: f64,
}

impl RobotState {
    pub fn velocity(&self) -> [f64; 2] {
        [self.speed * self.heading.cos(), self.speed * self.heading.sin()]
    }
}

/// Advances the unicycle one tick. `action[0]` is thrust, `action[1]` turn
/// rate; both are clamped to `[-1, 1]`. Wall contact zeroes the speed.
pub fn dynamics_step(robot: &RobotState, action: [f64; 2], config: &ArenaConfig) -> RobotState {
    let thrust = clamp_unit(action[0]);
    let turn = clamp_unit(action[1]);

    let heading = robot.heading + config.max_turn_rate * turn * config.dt;
    let mut speed = (config.drag * robot.speed + config.max_accel * thrust * config.dt)
        .clamp(-config.max_speed, config.max_speed);

    let hw = config.arena_half_width;
    let raw = [
        robot.position[0] + speed * config.dt * heading.cos(),
        robot.position[1] + speed * config.dt * heading.sin(),
    ];
    let position = [raw[0].clamp(-hw, hw), raw[1].clamp(-hw, hw)];
    if position != raw {
        speed = 0.0;
    }

    RobotState {
        position,
        heading,
        speed,
    }
}

fn clamp_unit(x: f64) -> f64 {
    if x.is_nan() {
        0.0
    } else {
        x.clamp(-1.0, 1.0)
    }
}
