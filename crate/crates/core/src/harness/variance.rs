//! Spread of truncated returns across rollouts from one initial state.

use serde::{Deserialize, Serialize};

use super::session::Learner;
use crate::error::{Error, Result};
use crate::ppo::stream_rng;

/// `sum_{i<h} gamma^i r_i`, summing whatever rewards exist when the episode
/// is shorter than `h`.
pub fn discounted_return(rewards: &[f64], gamma: f64, h: usize) -> f64 {
    let mut g = 0.0;
    let mut w = 1.0;
    for &r in rewards.iter().take(h) {
        g += w * r;
        w *= gamma;
    }
    g
}

/// Variance with the `n - 1` denominator.
pub fn unbiased_variance(xs: &[f64]) -> Result<f64> {
    if xs.len() < 2 {
        return Err(Error::InvalidArgument("variance needs at least two samples".into()));
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    Ok(xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0))
}

/// `count` strictly increasing horizons from 1 to `max`, spaced evenly in
/// log scale wherever the integer grid allows.
pub fn log_spaced_horizons(max: usize, count: usize) -> Vec<usize> {
    if max == 0 || count == 0 {
        return Vec::new();
    }
    let count = count.min(max);
    let mut out: Vec<usize> = Vec::with_capacity(count);
    for k in 0..count {
        let left = count - k;
        let prev = out.last().copied().unwrap_or(0);
        let frac = if count == 1 { 1.0 } else { k as f64 / (count - 1) as f64 };
        let ideal = (max as f64).powf(frac).round() as usize;
        // Leave room for the remaining points below `max`.
        out.push(ideal.max(prev + 1).min(max + 1 - left));
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VarianceReport {
    pub gammas: Vec<f64>,
    pub horizons: Vec<usize>,
    pub instances: usize,
    pub rollouts: usize,
    /// `[gamma][horizon]`, mean over instances of the per-instance variance.
    pub variance: Vec<Vec<f64>>,
    /// Standard error of that mean; zero with a single instance.
    pub std_error: Vec<Vec<f64>>,
    /// Set when every variance is zero, as with a deterministic policy on a
    /// deterministic env.
    pub degenerate: bool,
}

impl VarianceReport {
    pub fn at(&self, gamma: f64, h: usize) -> Option<f64> {
        let g = self.gammas.iter().position(|&x| x == gamma)?;
        let k = self.horizons.iter().position(|&x| x == h)?;
        Some(self.variance[g][k])
    }

    pub fn to_csv(&self) -> Result<String> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(["gamma", "horizon", "variance", "std_error"]).map_err(csv_err)?;
        for (g, gamma) in self.gammas.iter().enumerate() {
            for (k, h) in self.horizons.iter().enumerate() {
                w.serialize((gamma, h, self.variance[g][k], self.std_error[g][k])).map_err(csv_err)?;
            }
        }
        String::from_utf8(w.into_inner().map_err(|e| Error::Corrupt(e.to_string()))?)
            .map_err(|e| Error::Corrupt(e.to_string()))
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Corrupt(format!("csv: {e}"))
}

/// Builds the report from recorded reward sequences, `[instance][rollout]`.
pub fn variance_from_rewards(rewards: &[Vec<Vec<f64>>], gammas: &[f64], horizons: &[usize]) -> Result<VarianceReport> {
    if rewards.is_empty() {
        return Err(Error::InvalidArgument("no instances".into()));
    }
    let rollouts = rewards[0].len();
    if rollouts < 2 || rewards.iter().any(|r| r.len() != rollouts) {
        return Err(Error::InvalidArgument("every instance needs the same number (at least 2) of rollouts".into()));
    }
    let n = rewards.len() as f64;
    let mut variance = vec![vec![0.0; horizons.len()]; gammas.len()];
    let mut std_error = variance.clone();
    for (g, &gamma) in gammas.iter().enumerate() {
        for (k, &h) in horizons.iter().enumerate() {
            let per_instance = rewards
                .iter()
                .map(|rs| {
                    let returns: Vec<f64> = rs.iter().map(|r| discounted_return(r, gamma, h)).collect();
                    unbiased_variance(&returns)
                })
                .collect::<Result<Vec<f64>>>()?;
            variance[g][k] = per_instance.iter().sum::<f64>() / n;
            std_error[g][k] = if per_instance.len() > 1 {
                (unbiased_variance(&per_instance)? / n).sqrt()
            } else {
                0.0
            };
        }
    }
    let degenerate = variance.iter().flatten().all(|&v| v == 0.0);
    Ok(VarianceReport {
        gammas: gammas.to_vec(),
        horizons: horizons.to_vec(),
        instances: rewards.len(),
        rollouts,
        variance,
        std_error,
        degenerate,
    })
}

/// Rolls out `rollouts` stochastic episodes per instance from its fixed
/// initial state and reports truncated-return variances.
pub fn variance_experiment(
    learner: &Learner,
    instance_seeds: &[u64],
    rollouts: usize,
    gammas: &[f64],
    horizons: &[usize],
    seed: u64,
) -> Result<VarianceReport> {
    if rollouts < 2 {
        return Err(Error::InvalidArgument("need at least two rollouts".into()));
    }
    let mut rewards = Vec::with_capacity(instance_seeds.len());
    for (i, &s) in instance_seeds.iter().enumerate() {
        let mut rng = stream_rng(seed, i as u64);
        let per = (0..rollouts)
            .map(|_| learner.play_episode(s, &mut rng, false).map(|t| t.rewards))
            .collect::<Result<Vec<_>>>()?;
        rewards.push(per);
    }
    variance_from_rewards(&rewards, gammas, horizons)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn discounted_return_examples() {
        let r = [1.0, 2.0, 3.0];
        assert_eq!(discounted_return(&r, 1.0, 3), 6.0);
        assert_eq!(discounted_return(&r, 0.5, 3), 1.0 + 1.0 + 0.75);
        assert_eq!(discounted_return(&r, 0.0, 3), 1.0);
        assert_eq!(discounted_return(&r, 1.0, 10), 6.0);
        assert_eq!(discounted_return(&r, 1.0, 0), 0.0);
    }

    #[test]
    fn unbiased_estimator() {
        assert_eq!(unbiased_variance(&[1.0, 3.0]).unwrap(), 2.0);
        assert_eq!(unbiased_variance(&[2.0; 5]).unwrap(), 0.0);
        assert!(unbiased_variance(&[1.0]).is_err());
    }

    #[test]
    fn horizon_grid() {
        let h = log_spaced_horizons(2000, 200);
        assert_eq!(h.len(), 200);
        assert_eq!((h[0], h[199]), (1, 2000));
        assert!(h.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(log_spaced_horizons(5, 10), vec![1, 2, 3, 4, 5]);
    }

    #[test]
    fn gamma_zero_is_first_reward_variance() {
        let rewards = vec![vec![vec![1.0, 5.0, 0.0], vec![3.0, 0.0], vec![2.0, 2.0, 2.0]]];
        let rep = variance_from_rewards(&rewards, &[0.0, 1.0], &[1, 2, 3]).unwrap();
        for k in 0..3 {
            assert_eq!(rep.variance[0][k], 1.0);
        }
        // Full returns 6, 3, 6.
        assert_eq!(rep.at(1.0, 3), Some(3.0));
        assert!(!rep.degenerate);
    }

    #[test]
    fn matches_direct_recomputation() {
        let rewards: Vec<Vec<Vec<f64>>> = (0..3)
            .map(|i| (0..4).map(|j| (0..20).map(|t| ((i * 7 + j * 3 + t) % 5) as f64 - 1.0).collect()).collect())
            .collect();
        let gammas = [0.9, 1.0];
        let hs = [1, 5, 20];
        let a = variance_from_rewards(&rewards, &gammas, &hs).unwrap();
        let b = variance_from_rewards(&rewards, &gammas, &hs).unwrap();
        assert_eq!(a, b);
        for (g, &gamma) in gammas.iter().enumerate() {
            for (k, &h) in hs.iter().enumerate() {
                let mut mean_var = 0.0;
                for inst in &rewards {
                    let rets: Vec<f64> =
                        inst.iter().map(|r| (0..h).map(|t| gamma.powi(t as i32) * r[t]).sum()).collect();
                    let m = rets.iter().sum::<f64>() / 4.0;
                    mean_var += rets.iter().map(|x| (x - m).powi(2)).sum::<f64>() / 3.0 / 3.0;
                }
                assert!((a.variance[g][k] - mean_var).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn identical_rollouts_are_degenerate() {
        let rewards = vec![vec![vec![1.0, 0.0, 2.0]; 3]; 2];
        let rep = variance_from_rewards(&rewards, &[0.99, 1.0], &[1, 3]).unwrap();
        assert!(rep.degenerate);
        assert!(variance_from_rewards(&[vec![vec![1.0]]], &[1.0], &[1]).is_err());
    }
}
