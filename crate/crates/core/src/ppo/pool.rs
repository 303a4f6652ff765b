use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::sim::{generate_map, observe, step, ArenaConfig, Observation, StepOutcome, TaskKind, TaskState};

/// A finished episode. `total_return` is `dense_return + terminal_return`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub seed: u64,
    pub dense_return: f64,
    pub terminal_return: f64,
    pub total_return: f64,
    pub success: bool,
    pub length: u32,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct Running {
    dense: f64,
    terminal: f64,
}

/// `N` independently seeded task instances that restart on termination.
/// Each env draws its next instance seed from its own stream.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvPool {
    pub kind: TaskKind,
    pub config: ArenaConfig,
    pub envs: Vec<TaskState>,
    running: Vec<Running>,
}

impl EnvPool {
    pub fn new(kind: TaskKind, config: ArenaConfig, num_envs: usize, seed: u64) -> Result<Self> {
        let mut seeds = ChaCha8Rng::seed_from_u64(seed);
        let envs = (0..num_envs)
            .map(|_| generate_map(seeds.random(), kind, &config))
            .collect::<Result<Vec<_>>>()?;
        Ok(EnvPool {
            kind,
            config,
            envs,
            running: vec![Running::default(); num_envs],
        })
    }

    pub fn len(&self) -> usize {
        self.envs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.envs.is_empty()
    }

    pub fn observation(&self, i: usize) -> Observation {
        observe(&self.envs[i])
    }

    pub fn observations(&self) -> Vec<Observation> {
        self.envs.iter().map(observe).collect()
    }

    /// Steps env `i`. On termination the env is replaced by a fresh instance
    /// and the finished episode is returned alongside the outcome.
    pub fn step(&mut self, i: usize, action: [f64; 2]) -> Result<(StepOutcome, Option<EpisodeSummary>)> {
        let out = step(&mut self.envs[i], action)?;
        let r = &mut self.running[i];
        r.dense += out.dense_component;
        r.terminal += out.terminal_component;
        if !out.done {
            return Ok((out, None));
        }
        let env = &mut self.envs[i];
        let r = std::mem::take(&mut self.running[i]);
        let summary = EpisodeSummary {
            seed: env.seed,
            dense_return: r.dense,
            terminal_return: r.terminal,
            total_return: r.dense + r.terminal,
            success: env.success,
            length: env.t_elapsed,
        };
        let next = env.next_seed();
        *env = generate_map(next, self.kind, &self.config)?;
        Ok((out, Some(summary)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn envs_restart_with_fresh_instances() {
        let mut pool = EnvPool::new(TaskKind::PointTsp, ArenaConfig::default(), 3, 5).unwrap();
        let seeds: Vec<u64> = pool.envs.iter().map(|e| e.seed).collect();
        assert!(seeds[0] != seeds[1] && seeds[1] != seeds[2]);
        let mut finished = 0;
        for _ in 0..2000 {
            let (_, s) = pool.step(0, [0.0, 0.0]).unwrap();
            if let Some(s) = s {
                assert_eq!(s.length, 2000);
                assert_eq!(s.seed, seeds[0]);
                finished += 1;
            }
        }
        assert_eq!(finished, 1);
        assert_ne!(pool.envs[0].seed, seeds[0]);
        assert_eq!(pool.envs[0].t_elapsed, 0);
    }

    #[test]
    fn same_seed_same_pool() {
        let a = EnvPool::new(TaskKind::ColourMatch, ArenaConfig::default(), 4, 9).unwrap();
        let b = EnvPool::new(TaskKind::ColourMatch, ArenaConfig::default(), 4, 9).unwrap();
        assert_eq!(a, b);
    }
}
