use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::agent::{Agent, UpdateStats};
use super::buffer::{RolloutBuffer, Sample, Step};
use super::config::PpoConfig;
use super::pool::{EnvPool, EpisodeSummary};
use crate::error::Result;
use crate::neural::{EncoderConfig, HeadKind};
use crate::sim::{ArenaConfig, Observation, TaskKind, GLOBAL_DIM};

/// RNG streams derived from a run seed.
pub mod streams {
    pub const ENVS: u64 = 0;
    pub const INIT: u64 = 1;
    pub const POLICY: u64 = 2;
    pub const AUX_INIT: u64 = 3;
    pub const AUX_PRIOR_INIT: u64 = 4;
    pub const AUX_UPDATE: u64 = 5;
}

/// Independent generator `stream` of a run.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Seed for the env pool of a run.
pub fn env_seed(seed: u64) -> u64 {
    use rand::Rng;
    stream_rng(seed, streams::ENVS).random()
}

/// Optimisation summary for one policy level.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LevelStats {
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub explained_variance: f64,
    pub minibatch_updates: usize,
    pub samples: usize,
}

impl LevelStats {
    pub fn from_update(u: &UpdateStats, samples: &[Sample]) -> Self {
        LevelStats {
            policy_loss: u.policy_loss,
            value_loss: u.value_loss,
            entropy: u.entropy,
            explained_variance: explained_variance(samples),
            minibatch_updates: u.minibatch_updates,
            samples: samples.len(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct IterationMetrics {
    /// Total env steps so far.
    pub frames: u64,
    pub episodes: usize,
    /// Mean undiscounted return of episodes finished this iteration; `NaN`
    /// when none finished.
    pub mean_return: f64,
    pub success_rate: f64,
    /// `(level name, stats)`; the flat learner has a single unnamed level.
    pub levels: Vec<(String, LevelStats)>,
    pub wall_time: f64,
}

impl IterationMetrics {
    pub fn episode_stats(episodes: &[EpisodeSummary]) -> (f64, f64) {
        if episodes.is_empty() {
            return (f64::NAN, f64::NAN);
        }
        let n = episodes.len() as f64;
        let ret = episodes.iter().map(|e| e.total_return).sum::<f64>() / n;
        let succ = episodes.iter().filter(|e| e.success).count() as f64 / n;
        (ret, succ)
    }
}

/// `1 - Var(target - value) / Var(target)`; zero when the targets are constant.
pub fn explained_variance(samples: &[Sample]) -> f64 {
    let n = samples.len() as f64;
    if samples.len() < 2 {
        return 0.0;
    }
    let var = |f: &dyn Fn(&Sample) -> f64| {
        let m = samples.iter().map(f).sum::<f64>() / n;
        samples.iter().map(|s| (f(s) - m).powi(2)).sum::<f64>() / n
    };
    let vy = var(&|s| s.target);
    if vy == 0.0 {
        return 0.0;
    }
    1.0 - var(&|s| s.target - s.value) / vy
}

/// Flat PPO over an env pool.
#[derive(Clone, Debug)]
pub struct PpoTrainer {
    pub agent: Agent,
    pub pool: EnvPool,
    pub rng: ChaCha8Rng,
    pub frames: u64,
    /// Report elapsed time in metrics; off for byte-reproducible logs.
    pub record_wall_time: bool,
}

impl PpoTrainer {
    pub fn new(task: TaskKind, arena: ArenaConfig, config: PpoConfig, width: usize, seed: u64) -> Result<Self> {
        let enc = EncoderConfig::new(GLOBAL_DIM, task.zone_dim(), width);
        let mut init = stream_rng(seed, streams::INIT);
        let pool = EnvPool::new(task, arena, config.num_envs, env_seed(seed))?;
        let agent = Agent::new(enc, width, HeadKind::Gaussian { dim: 2 }, config, &mut init)?;
        Ok(PpoTrainer {
            agent,
            pool,
            rng: stream_rng(seed, streams::POLICY),
            frames: 0,
            record_wall_time: true,
        })
    }

    /// Collects `T x N` transitions, then runs the PPO update.
    pub fn train_iteration(&mut self) -> Result<IterationMetrics> {
        let start = Instant::now();
        let (buffer, episodes, last_obs) = self.collect()?;
        let cfg = &self.agent.config;
        let refs: Vec<&Observation> = last_obs.iter().collect();
        let bootstrap = self.agent.values(&refs)?;
        let samples = buffer.into_samples(&bootstrap, cfg.gamma, cfg.gae_lambda)?;
        let update = self.agent.update(&samples, &mut self.rng)?;
        let (mean_return, success_rate) = IterationMetrics::episode_stats(&episodes);
        Ok(IterationMetrics {
            frames: self.frames,
            episodes: episodes.len(),
            mean_return,
            success_rate,
            levels: vec![(String::new(), LevelStats::from_update(&update, &samples))],
            wall_time: if self.record_wall_time {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            },
        })
    }

    fn collect(&mut self) -> Result<(RolloutBuffer, Vec<EpisodeSummary>, Vec<Observation>)> {
        let n = self.pool.len();
        let mut buffer = RolloutBuffer::new(n);
        let mut episodes = Vec::new();
        let mut obs = self.pool.observations();
        for _ in 0..self.agent.config.steps_per_env {
            let refs: Vec<&Observation> = obs.iter().collect();
            let decisions = self.agent.act(&refs, None, &mut self.rng, false, true)?;
            for (i, d) in decisions.into_iter().enumerate() {
                let (out, finished) = self.pool.step(i, d.action.env_action()?)?;
                let next = if finished.is_some() {
                    self.pool.observation(i)
                } else {
                    out.observation
                };
                buffer.push(
                    i,
                    Step {
                        obs: std::mem::replace(&mut obs[i], next),
                        mask: None,
                        action: d.action,
                        log_prob: d.log_prob,
                        value: d.value,
                        reward: out.reward,
                        done: out.done,
                        success: out.success,
                    },
                );
                episodes.extend(finished);
            }
            self.frames += n as u64;
        }
        Ok((buffer, episodes, obs))
    }
}
