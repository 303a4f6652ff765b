//! Hand-coded controllers. Used to drive long episodes through the
//! simulator without a learned policy.

use std::f64::consts::PI;

use super::env::dist2;
use super::{ArenaConfig, Colour, RobotState, TaskKind, TaskState, ZoneStatus};

/// Steer toward `target`: turn at up to full rate, thrust when roughly
/// aligned, brake when badly misaligned.
pub fn seek(robot: &RobotState, target: [f64; 2], config: &ArenaConfig) -> [f64; 2] {
    let dx = target[0] - robot.position[0];
    let dy = target[1] - robot.position[1];
    let err = wrap_angle(dy.atan2(dx) - robot.heading);
    let turn = (err / (config.max_turn_rate * config.dt)).clamp(-1.0, 1.0);
    let thrust = if err.abs() < PI / 6.0 {
        1.0
    } else if err.abs() < PI / 2.0 {
        0.3
    } else if robot.speed > 0.1 * config.max_speed {
        -1.0
    } else {
        0.0
    };
    [thrust, turn]
}

pub fn wrap_angle(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Greedy scripted policy: nearest unvisited zone for the TSP tasks; for
/// ColourMatch, nearest zone that still needs cycling toward the cheapest
/// uniform colour, backing out of a zone when it must be re-entered.
#[derive(Clone, Debug, Default)]
pub struct GreedyController {
    exit_from: Option<usize>,
}

impl GreedyController {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn act(&mut self, state: &TaskState) -> [f64; 2] {
        let cfg = &state.config;
        let pos = state.robot.position;
        match state.kind {
            TaskKind::PointTsp | TaskKind::TimedTsp => {
                let target = state
                    .zones
                    .iter()
                    .filter(|z| !z.visited())
                    .min_by(|a, b| dist2(a.position, pos).total_cmp(&dist2(b.position, pos)));
                match target {
                    Some(z) => seek(&state.robot, z.position, cfg),
                    None => [0.0, 0.0],
                }
            }
            TaskKind::ColourMatch => self.colour_action(state),
        }
    }

    fn colour_action(&mut self, state: &TaskState) -> [f64; 2] {
        let cfg = &state.config;
        let pos = state.robot.position;
        let colours = state.colours();
        let target_colour = Colour::ALL
            .into_iter()
            .min_by_key(|&t| colours.iter().map(|c| c.steps_to(t)).sum::<u32>())
            .unwrap_or(Colour::Green);

        if let Some(i) = self.exit_from {
            let zone = &state.zones[i];
            let clear = (2.0 * cfg.zone_radius).powi(2);
            if dist2(pos, zone.position) < clear {
                // Back away toward the arena centre side of the zone.
                let away = [
                    zone.position[0] - (zone.position[0] - pos[0]).signum() * 3.0 * cfg.zone_radius,
                    zone.position[1] - (zone.position[1] - pos[1]).signum() * 3.0 * cfg.zone_radius,
                ];
                let away = [away[0] * 0.9, away[1] * 0.9];
                return seek(&state.robot, away, cfg);
            }
            self.exit_from = None;
        }

        let needs_work = |i: usize| match state.zones[i].status {
            ZoneStatus::Colour { colour, .. } => colour.steps_to(target_colour) > 0,
            _ => false,
        };
        let candidate = (0..state.zones.len())
            .filter(|&i| needs_work(i))
            .min_by(|&a, &b| {
                let key = |i: usize| {
                    let z = &state.zones[i];
                    // Occupied zones must be left first; rank them last.
                    let penalty = if z.occupied { 100.0 } else { 0.0 };
                    dist2(z.position, pos) + penalty
                };
                key(a).total_cmp(&key(b))
            });
        match candidate {
            Some(i) if state.zones[i].occupied => {
                self.exit_from = Some(i);
                self.colour_action(state)
            }
            Some(i) => seek(&state.robot, state.zones[i].position, cfg),
            None => [0.0, 0.0],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{generate_map, step};

    fn run(kind: TaskKind, seed: u64) -> bool {
        let cfg = ArenaConfig::default();
        let mut s = generate_map(seed, kind, &cfg).unwrap();
        let mut ctl = GreedyController::new();
        while !s.done {
            let a = ctl.act(&s);
            step(&mut s, a).unwrap();
        }
        s.success
    }

    #[test]
    fn greedy_usually_solves_each_task() {
        for kind in TaskKind::ALL {
            let wins = (0..40).filter(|&s| run(kind, s)).count();
            let floor = if kind == TaskKind::TimedTsp { 5 } else { 30 };
            assert!(wins >= floor, "{kind:?}: {wins}/40");
        }
    }

    #[test]
    fn wrap_angle_range() {
        for k in -20..20 {
            let a = wrap_angle(k as f64 * 0.7);
            assert!((-PI..PI).contains(&a));
        }
    }
}
