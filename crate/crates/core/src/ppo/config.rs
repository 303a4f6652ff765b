use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::ValueKind;
use crate::sim::TaskKind;

pub const DEFAULT_NUM_ENVS: usize = 16;
pub const STEPS_PER_UPDATE: usize = 64_000;
/// ColourMatch doubles the batch.
pub const STEPS_PER_UPDATE_COLOUR: usize = 128_000;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PpoConfig {
    pub gamma: f64,
    pub gae_lambda: f64,
    pub epochs: usize,
    pub minibatch_size: usize,
    pub clip_eps: f64,
    pub value_coef: f64,
    pub entropy_coef: f64,
    pub max_grad_norm: f64,
    pub lr: f64,
    pub num_envs: usize,
    /// Steps per env per update; `T x N` transitions are collected.
    pub steps_per_env: usize,
    pub value_mode: ValueKind,
}

impl PpoConfig {
    /// Flat PPO with a point critic.
    pub fn ppo(gamma: f64) -> Self {
        PpoConfig {
            gamma,
            gae_lambda: 0.95,
            epochs: 10,
            minibatch_size: 1600,
            clip_eps: 0.2,
            value_coef: 0.5,
            entropy_coef: 0.003,
            max_grad_norm: 0.5,
            lr: 3e-4,
            num_envs: DEFAULT_NUM_ENVS,
            steps_per_env: STEPS_PER_UPDATE / DEFAULT_NUM_ENVS,
            value_mode: ValueKind::Point,
        }
    }

    /// PPO with the Gaussian value-distribution critic.
    pub fn ppo_vd(gamma: f64) -> Self {
        PpoConfig {
            value_coef: 0.005,
            value_mode: ValueKind::Distribution,
            ..Self::ppo(gamma)
        }
    }

    /// Task-specific defaults: doubled batch on ColourMatch, and 6 epochs for
    /// the undiscounted distribution critic on PointTSP.
    pub fn for_task(mut self, task: TaskKind) -> Self {
        if task == TaskKind::ColourMatch {
            self.steps_per_env = STEPS_PER_UPDATE_COLOUR / self.num_envs;
        }
        if task == TaskKind::PointTsp && self.value_mode == ValueKind::Distribution && self.gamma == 1.0 {
            self.epochs = 6;
        }
        self
    }

    /// Low level of the two-level methods.
    pub fn hrl_low() -> Self {
        PpoConfig {
            clip_eps: 0.1,
            ..Self::ppo(0.99)
        }
    }

    /// High level of the two-level methods.
    pub fn hrl_high() -> Self {
        PpoConfig {
            epochs: 5,
            minibatch_size: 80,
            clip_eps: 0.1,
            entropy_coef: 0.01,
            ..Self::ppo(1.0)
        }
    }

    pub fn steps_per_update(&self) -> usize {
        self.steps_per_env * self.num_envs
    }

    /// Minibatches per epoch for a batch of `n` samples; a short final
    /// minibatch is kept.
    pub fn minibatches(&self, n: usize) -> usize {
        n.div_ceil(self.minibatch_size)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |v: f64| (0.0..=1.0).contains(&v);
        if !unit(self.gamma) {
            return Err(Error::InvalidConfig(format!("gamma {} outside [0, 1]", self.gamma)));
        }
        if !unit(self.gae_lambda) {
            return Err(Error::InvalidConfig(format!("gae_lambda {} outside [0, 1]", self.gae_lambda)));
        }
        if !(self.clip_eps > 0.0) {
            return Err(Error::InvalidConfig(format!("clip_eps {} must be positive", self.clip_eps)));
        }
        if self.epochs == 0 || self.minibatch_size == 0 || self.num_envs == 0 || self.steps_per_env == 0 {
            return Err(Error::InvalidConfig("epochs, minibatch size, envs and steps must be positive".into()));
        }
        if !(self.lr >= 0.0) || !(self.max_grad_norm > 0.0) || !(self.value_coef >= 0.0) || !(self.entropy_coef >= 0.0) {
            return Err(Error::InvalidConfig("lr, coefficients and grad clip must be non-negative".into()));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_defaults() {
        let c = PpoConfig::ppo(0.99);
        assert_eq!(c.steps_per_update(), 64_000);
        assert_eq!(c.minibatches(c.steps_per_update()) * c.epochs, 400);
        let c = PpoConfig::ppo_vd(1.0).for_task(TaskKind::PointTsp);
        assert_eq!((c.epochs, c.value_coef), (6, 0.005));
        let c = PpoConfig::ppo(1.0).for_task(TaskKind::ColourMatch);
        assert_eq!(c.steps_per_update(), 128_000);
        c.validate().unwrap();
    }

    #[test]
    fn invalid_values_rejected() {
        let mut c = PpoConfig::ppo(1.1);
        assert!(c.validate().is_err());
        c.gamma = 1.0;
        c.clip_eps = 0.0;
        assert!(c.validate().is_err());
        c.clip_eps = 0.2;
        c.gae_lambda = -0.1;
        assert!(c.validate().is_err());
    }
}
