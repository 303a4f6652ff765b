use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use super::{dynamics_step, hamming_distance, ArenaConfig, Colour, RobotState};
use crate::error::{Error, Result};

/// Length of the global observation vector: position (2), heading cos/sin
/// (2), velocity (2), time-remaining fraction (1).
pub const GLOBAL_DIM: usize = 7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskKind {
    PointTsp,
    TimedTsp,
    ColourMatch,
}

impl TaskKind {
    pub const ALL: [TaskKind; 3] = [TaskKind::PointTsp, TaskKind::TimedTsp, TaskKind::ColourMatch];

    pub fn name(self) -> &'static str {
        match self {
            TaskKind::PointTsp => "point_tsp",
            TaskKind::TimedTsp => "timed_tsp",
            TaskKind::ColourMatch => "colour_match",
        }
    }

    pub fn parse(s: &str) -> Result<TaskKind> {
        TaskKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown task '{s}'")))
    }

    pub fn zone_count(self, config: &ArenaConfig) -> usize {
        match self {
            TaskKind::PointTsp | TaskKind::TimedTsp => config.tsp_zones,
            TaskKind::ColourMatch => config.colour_zones,
        }
    }

    /// Per-zone feature length: position (2) plus status features.
    pub fn zone_dim(self) -> usize {
        match self {
            TaskKind::PointTsp => 3,
            TaskKind::TimedTsp => 4,
            TaskKind::ColourMatch => 6,
        }
    }

    pub fn is_tsp(self) -> bool {
        matches!(self, TaskKind::PointTsp | TaskKind::TimedTsp)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ZoneStatus {
    Tsp { visited: bool },
    Timed { visited: bool, timeout: u32 },
    Colour { colour: Colour, cooldown: u32 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub position: [f64; 2],
    pub status: ZoneStatus,
    /// Robot was inside this zone after the previous tick. Entry events are
    /// edge-triggered on this flag.
    pub occupied: bool,
}

impl Zone {
    pub fn visited(&self) -> bool {
        match self.status {
            ZoneStatus::Tsp { visited } | ZoneStatus::Timed { visited, .. } => visited,
            ZoneStatus::Colour { .. } => false,
        }
    }

    pub fn colour(&self) -> Option<Colour> {
        match self.status {
            ZoneStatus::Colour { colour, .. } => Some(colour),
            _ => None,
        }
    }

    pub fn timeout(&self) -> Option<u32> {
        match self.status {
            ZoneStatus::Timed { timeout, .. } => Some(timeout),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskState {
    pub kind: TaskKind,
    pub config: ArenaConfig,
    pub seed: u64,
    pub robot: RobotState,
    pub zones: Vec<Zone>,
    pub t_elapsed: u32,
    pub rng: ChaCha8Rng,
    pub done: bool,
    pub success: bool,
}

impl TaskState {
    pub fn t_rem(&self) -> u32 {
        self.config.time_limit - self.t_elapsed
    }

    pub fn visited_count(&self) -> usize {
        self.zones.iter().filter(|z| z.visited()).count()
    }

    pub fn colours(&self) -> Vec<Colour> {
        self.zones.iter().filter_map(Zone::colour).collect()
    }

    pub fn hamming(&self) -> Option<u32> {
        (self.kind == TaskKind::ColourMatch).then(|| hamming_distance(&self.colours()))
    }

    /// Seed for the next episode drawn from this state's stream.
    pub fn next_seed(&mut self) -> u64 {
        self.rng.random()
    }

    fn solved(&self) -> bool {
        match self.kind {
            TaskKind::PointTsp | TaskKind::TimedTsp => self.zones.iter().all(Zone::visited),
            TaskKind::ColourMatch => {
                let cs = self.colours();
                cs.iter().all(|&c| c == cs[0])
            }
        }
    }
}

/// Global vector plus an unordered set of per-zone vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    pub global: Vec<f64>,
    pub zones: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub dense_component: f64,
    pub terminal_component: f64,
    pub hamming_before: Option<u32>,
    pub hamming_after: Option<u32>,
    /// Zones newly visited (TSP tasks) or cycled (ColourMatch) this tick.
    pub triggered: Vec<usize>,
    pub done: bool,
    pub success: bool,
}

/// Samples a fresh instance. Identical `(seed, kind, config)` gives a
/// bit-identical state.
pub fn generate_map(seed: u64, kind: TaskKind, config: &ArenaConfig) -> Result<TaskState> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = kind.zone_count(config);
    let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
    let start = [0.0, 0.0];

    let lim = config.arena_half_width - config.zone_radius;
    let sep2 = config.min_zone_separation * config.min_zone_separation;
    let far_enough = |p: [f64; 2], q: [f64; 2]| dist2(p, q) >= sep2;
    let mut positions: Vec<[f64; 2]> = Vec::with_capacity(n);
    for zone in 0..n {
        let mut placed = false;
        for _ in 0..config.placement_attempts {
            let p = [rng.random_range(-lim..=lim), rng.random_range(-lim..=lim)];
            if far_enough(p, start) && positions.iter().all(|&q| far_enough(p, q)) {
                positions.push(p);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::PlacementFailed {
                zone,
                total: n,
                attempts: config.placement_attempts,
            });
        }
    }

    let statuses: Vec<ZoneStatus> = match kind {
        TaskKind::PointTsp => vec![ZoneStatus::Tsp { visited: false }; n],
        TaskKind::TimedTsp => {
            let beta = Beta::new(config.timeout_beta_a, config.timeout_beta_b)
                .map_err(|e| Error::InvalidConfig(format!("beta: {e}")))?;
            let span = (config.timeout_max - config.timeout_min) as f64;
            (0..n)
                .map(|_| {
                    let frac: f64 = beta.sample(&mut rng);
                    let timeout = config.timeout_min + (span * frac).round() as u32;
                    ZoneStatus::Timed {
                        visited: false,
                        timeout: timeout.min(config.timeout_max),
                    }
                })
                .collect()
        }
        TaskKind::ColourMatch => loop {
            let colours: Vec<Colour> = (0..n).map(|_| Colour::from_index(rng.random_range(0..3))).collect();
            if colours.iter().any(|&c| c != colours[0]) {
                break colours
                    .into_iter()
                    .map(|colour| ZoneStatus::Colour { colour, cooldown: 0 })
                    .collect();
            }
        },
    };

    let zones = positions
        .into_iter()
        .zip(statuses)
        .map(|(position, status)| Zone {
            position,
            status,
            occupied: false,
        })
        .collect();

    Ok(TaskState {
        kind,
        config: config.clone(),
        seed,
        robot: RobotState {
            position: start,
            heading,
            speed: 0.0,
        },
        zones,
        t_elapsed: 0,
        rng,
        done: false,
        success: false,
        })
}

/// Advances the task by one tick.
pub fn step(state: &mut TaskState, action: [f64; 2]) -> Result<StepOutcome> {
    if state.done {
        return Err(Error::EpisodeDone);
    }
    let hamming_before = state.hamming();
    state.robot = dynamics_step(&state.robot, action, &state.config);
    state.t_elapsed += 1;

    let r2 = state.config.zone_radius * state.config.zone_radius;
    let pos = state.robot.position;
    let cooldown_len = state.config.colour_cooldown;
    let mut dense = 0.0;
    let mut triggered = Vec::new();

    // Cooldowns tick before entries so a fresh cooldown starts at its full length.
    for zone in &mut state.zones {
        if let ZoneStatus::Colour { cooldown, .. } = &mut zone.status {
            *cooldown = cooldown.saturating_sub(1);
        }
    }

    for i in 0..state.zones.len() {
        let inside = dist2(pos, state.zones[i].position) <= r2;
        let entered = inside && !state.zones[i].occupied;
        state.zones[i].occupied = inside;
        if !entered {
            continue;
        }
        match &mut state.zones[i].status {
            ZoneStatus::Tsp { visited } | ZoneStatus::Timed { visited, .. } => {
                if !*visited {
                    *visited = true;
                    dense += 1.0;
                    triggered.push(i);
                }
            }
            ZoneStatus::Colour { cooldown, .. } if *cooldown > 0 => {}
            ZoneStatus::Colour { .. } => {
                let before = hamming_distance(&state.colours()) as f64;
                if let ZoneStatus::Colour { colour, cooldown } = &mut state.zones[i].status {
                    *colour = colour.next();
                    *cooldown = cooldown_len;
                }
                dense += before - hamming_distance(&state.colours()) as f64;
                triggered.push(i);
            }
        }
    }

    if state.kind == TaskKind::TimedTsp {
        for zone in &mut state.zones {
            if let ZoneStatus::Timed { visited: false, timeout } = &mut zone.status {
                *timeout = timeout.saturating_sub(1);
            }
        }
    }

    let mut terminal = 0.0;
    if state.solved() {
        terminal = state.config.lambda * state.t_rem() as f64;
        state.done = true;
        state.success = true;
    } else if state.kind == TaskKind::TimedTsp
        && state
            .zones
            .iter()
            .any(|z| matches!(z.status, ZoneStatus::Timed { visited: false, timeout: 0 }))
    {
        state.done = true;
    } else if state.t_elapsed >= state.config.time_limit {
        state.done = true;
    }

    Ok(StepOutcome {
        observation: observe(state),
        reward: dense + terminal,
        dense_component: dense,
        terminal_component: terminal,
        hamming_before,
        hamming_after: state.hamming(),
        triggered,
        done: state.done,
        success: state.success,
    })
}

/// Pure function of the state. Zone vectors follow the internal zone order,
/// which carries no meaning.
pub fn observe(state: &TaskState) -> Observation {
    let cfg = &state.config;
    let hw = cfg.arena_half_width;
    let vel = state.robot.velocity();
    let global = vec![
        state.robot.position[0] / hw,
        state.robot.position[1] / hw,
        state.robot.heading.cos(),
        state.robot.heading.sin(),
        vel[0] / cfg.max_speed,
        vel[1] / cfg.max_speed,
        state.t_rem() as f64 / cfg.time_limit as f64,
    ];
    let zones = state
        .zones
        .iter()
        .map(|z| {
            let mut v = vec![z.position[0] / hw, z.position[1] / hw];
            match z.status {
                ZoneStatus::Tsp { visited } => v.push(flag(visited)),
                ZoneStatus::Timed { visited, timeout } => {
                    v.push(flag(visited));
                    v.push(timeout as f64 / cfg.timeout_max as f64);
                }
                ZoneStatus::Colour { colour, cooldown } => {
                    let mut onehot = [0.0; 3];
                    onehot[colour.index()] = 1.0;
                    v.extend_from_slice(&onehot);
                    v.push(cooldown as f64 / cfg.colour_cooldown.max(1) as f64);
                }
            }
            v
        })
        .collect();
    Observation { global, zones }
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

pub(crate) fn dist2(a: [f64; 2], b: [f64; 2]) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    dx * dx + dy * dy
}
