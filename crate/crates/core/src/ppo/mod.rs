//! On-policy training: rollout collection, GAE, the clipped PPO objective
//! with point or Gaussian value losses, and Adam.

pub mod adam;
pub mod agent;
pub mod buffer;
pub mod config;
pub mod gae;
pub mod loss;
pub mod pool;
pub mod trainer;

pub use adam::{adam_step, AdamState};
pub use agent::{batch_of, normalized_advantages, ActionRecord, Agent, Decision, UpdateStats};
pub use buffer::{RolloutBuffer, Sample, Step};
pub use config::PpoConfig;
pub use gae::compute_gae;
pub use loss::{ppo_policy_loss, ppo_policy_loss_value, value_loss_gaussian_nll, value_loss_point};
pub use pool::{EnvPool, EpisodeSummary};
pub use trainer::{env_seed, explained_variance, stream_rng, streams, IterationMetrics, LevelStats, PpoTrainer};
