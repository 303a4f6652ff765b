use std::path::{Path, PathBuf};

use serde::Serialize;

use super::checkpoint::write_atomic;
use super::session::Learner;
use super::variance::csv_err;
use crate::error::{Error, Result};
use crate::ppo::stream_rng;
use crate::sim::{generate_map, ZoneStatus};

#[derive(Serialize)]
struct Row {
    rollout_id: usize,
    step: usize,
    robot_x: f64,
    robot_y: f64,
    reward: f64,
    done: bool,
    success: bool,
}

#[derive(Serialize)]
struct ZoneInfo {
    position: [f64; 2],
    status: ZoneStatus,
}

#[derive(Serialize)]
struct Sidecar {
    task: &'static str,
    instance_seed: u64,
    arena_half_width: f64,
    zone_radius: f64,
    robot_start: [f64; 2],
    zones: Vec<ZoneInfo>,
}

/// The JSON sidecar path written next to a trajectory CSV.
pub fn sidecar_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("json")
}

/// Writes `rollouts` stochastic episodes on one instance as CSV rows (step 0
/// is the start position) plus a JSON description of the map.
pub fn export_trajectories(learner: &Learner, instance_seed: u64, rollouts: usize, out: &Path, seed: u64) -> Result<()> {
    let state = generate_map(instance_seed, learner.task(), learner.arena())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut rng = stream_rng(seed, instance_seed);
    for id in 0..rollouts {
        let t = learner.play_from(state.clone(), &mut rng, false)?;
        let last = t.rewards.len();
        for (k, p) in t.positions.iter().enumerate() {
            w.serialize(Row {
                rollout_id: id,
                step: k,
                robot_x: p[0],
                robot_y: p[1],
                reward: if k == 0 { 0.0 } else { t.rewards[k - 1] },
                done: k == last,
                success: k == last && t.success,
            })
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Corrupt(e.to_string()))?;
    let sidecar = Sidecar {
        task: state.kind.name(),
        instance_seed,
        arena_half_width: state.config.arena_half_width,
        zone_radius: state.config.zone_radius,
        robot_start: state.robot.position,
        zones: state
            .zones
            .iter()
            .map(|z| ZoneInfo {
                position: z.position,
                status: z.status.clone(),
            })
            .collect(),
    };
    write_atomic(out, std::str::from_utf8(&bytes).map_err(|e| Error::Corrupt(e.to_string()))?)?;
    write_atomic(&sidecar_path(out), &serde_json::to_string_pretty(&sidecar)?)
}
