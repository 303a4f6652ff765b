use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::registry::BestKnownRegistry;
use super::session::Learner;
use crate::error::{Error, Result};
use crate::ppo::stream_rng;
use crate::sim::TaskKind;

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
pub const CONFIDENCE: f64 = 0.9;

/// A policy to evaluate with the labels stored in the registry.
pub struct EvalPolicy<'a> {
    pub checkpoint: String,
    pub algorithm: String,
    pub learner: &'a Learner,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub checkpoint: String,
    pub instance_seed: u64,
    pub return_undiscounted: f64,
    pub return_discounted: f64,
    pub success: bool,
    pub length: u32,
    /// Return over the instance's best known; `None` when that is not
    /// positive.
    pub normalized: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub task: TaskKind,
    pub rows: Vec<EvalRow>,
    /// Mean normalized return over rows that could be normalized.
    pub mean_normalized: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Instances left unnormalized because their best known return is not
    /// positive.
    pub flagged_instances: Vec<u64>,
}

/// Percentile bootstrap interval of the mean.
pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, confidence: f64, seed: u64) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = values.len();
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| *values.choose(&mut rng).expect("non-empty")).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - confidence) / 2.0;
    let pick = |q: f64| means[((q * resamples as f64).floor() as usize).min(resamples - 1)];
    (pick(tail), pick(1.0 - tail))
}

/// Plays every policy once on every instance, offers the returns to the
/// registry, then normalizes by the updated best known values.
pub fn evaluate(
    policies: &[EvalPolicy<'_>],
    task: TaskKind,
    instance_seeds: &[u64],
    registry: &mut BestKnownRegistry,
    seed: u64,
    deterministic: bool,
    timestamp: u64,
) -> Result<EvalReport> {
    let mut sorted = instance_seeds.to_vec();
    sorted.sort_unstable();
    if sorted.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::InvalidArgument("instance seeds must be distinct".into()));
    }
    let mut rows = Vec::with_capacity(policies.len() * instance_seeds.len());
    for (p, policy) in policies.iter().enumerate() {
        if policy.learner.task() != task {
            return Err(Error::InvalidArgument(format!(
                "{} was trained on {}, not {}",
                policy.checkpoint,
                policy.learner.task().name(),
                task.name()
            )));
        }
        let mut rng = stream_rng(seed, p as u64);
        for &s in instance_seeds {
            let t = policy.learner.play_episode(s, &mut rng, deterministic)?;
            let g1 = t.discounted_return(1.0);
            registry.offer(task, s, g1, &policy.algorithm, &policy.checkpoint, timestamp);
            rows.push(EvalRow {
                checkpoint: policy.checkpoint.clone(),
                instance_seed: s,
                return_undiscounted: g1,
                return_discounted: t.discounted_return(0.99),
                success: t.success,
                length: t.length(),
                normalized: None,
            });
        }
    }
    let mut flagged = Vec::new();
    for row in &mut rows {
        match registry.get(task, row.instance_seed) {
            Some(b) if b.best_return > 0.0 => row.normalized = Some(row.return_undiscounted / b.best_return),
            _ => {
                if !flagged.contains(&row.instance_seed) {
                    flagged.push(row.instance_seed);
                }
            }
        }
    }
    let normalized: Vec<f64> = rows.iter().filter_map(|r| r.normalized).collect();
    let mean = if normalized.is_empty() {
        f64::NAN
    } else {
        normalized.iter().sum::<f64>() / normalized.len() as f64
    };
    let (ci_low, ci_high) = bootstrap_mean_ci(&normalized, BOOTSTRAP_RESAMPLES, CONFIDENCE, seed);
    Ok(EvalReport {
        task,
        rows,
        mean_normalized: mean,
        ci_low,
        ci_high,
        flagged_instances: flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_interval_brackets_the_mean() {
        let xs: Vec<f64> = (0..100).map(|i| (i % 10) as f64).collect();
        let (lo, hi) = bootstrap_mean_ci(&xs, BOOTSTRAP_RESAMPLES, CONFIDENCE, 1);
        assert!(lo < 4.5 && 4.5 < hi, "{lo} {hi}");
        // Standard error 0.29, so the 90% interval is roughly +-0.47.
        assert!((hi - lo - 0.94).abs() < 0.15, "{lo} {hi}");
        assert_eq!(bootstrap_mean_ci(&[2.0; 5], 100, 0.9, 0), (2.0, 2.0));
        assert!(bootstrap_mean_ci(&[], 100, 0.9, 0).0.is_nan());
    }
}
