use serde::{Deserialize, Serialize};

use super::agent::ActionRecord;
use super::gae::compute_gae;
use crate::error::{Error, Result};
use crate::sim::Observation;

/// One collected transition.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub obs: Observation,
    pub mask: Option<Vec<bool>>,
    pub action: ActionRecord,
    pub log_prob: f64,
    pub value: f64,
    pub reward: f64,
    pub done: bool,
    pub success: bool,
}

/// A transition ready for the update.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub obs: Observation,
    pub mask: Option<Vec<bool>>,
    pub action: ActionRecord,
    pub log_prob: f64,
    pub value: f64,
    pub advantage: f64,
    pub target: f64,
}

/// Transitions kept per environment in collection order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct RolloutBuffer {
    pub streams: Vec<Vec<Step>>,
}

impl RolloutBuffer {
    pub fn new(num_envs: usize) -> Self {
        RolloutBuffer {
            streams: vec![Vec::new(); num_envs],
        }
    }

    pub fn push(&mut self, env: usize, step: Step) {
        self.streams[env].push(step);
    }

    pub fn len(&self) -> usize {
        self.streams.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Rewards per stream, for return statistics without re-simulation.
    pub fn rewards(&self) -> Vec<Vec<f64>> {
        self.streams.iter().map(|s| s.iter().map(|t| t.reward).collect()).collect()
    }

    /// Computes advantages and targets per stream and flattens env-major.
    /// `bootstrap[n]` is the value of the state after stream `n`'s last
    /// transition.
    pub fn into_samples(self, bootstrap: &[f64], gamma: f64, gae_lambda: f64) -> Result<Vec<Sample>> {
        if bootstrap.len() != self.streams.len() {
            return Err(Error::Shape(format!(
                "{} bootstrap values for {} streams",
                bootstrap.len(),
                self.streams.len()
            )));
        }
        let mut out = Vec::with_capacity(self.len());
        for (stream, &boot) in self.streams.into_iter().zip(bootstrap) {
            let rewards: Vec<f64> = stream.iter().map(|s| s.reward).collect();
            let values: Vec<f64> = stream.iter().map(|s| s.value).collect();
            let dones: Vec<bool> = stream.iter().map(|s| s.done).collect();
            let (adv, targets) = compute_gae(&rewards, &values, &dones, boot, gamma, gae_lambda)?;
            for ((s, a), t) in stream.into_iter().zip(adv).zip(targets) {
                out.push(Sample {
                    obs: s.obs,
                    mask: s.mask,
                    action: s.action,
                    log_prob: s.log_prob,
                    value: s.value,
                    advantage: a,
                    target: t,
                });
            }
        }
        Ok(out)
    }
}
