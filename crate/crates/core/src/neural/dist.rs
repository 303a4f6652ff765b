//! Policy distributions: sampling on plain numbers, log-probabilities and
//! entropies on the tape.

use std::rc::Rc;

use ndarray::Array2;
use rand::Rng;
use rand_distr::StandardNormal;

use super::tape::{masked_logsumexp, Tape, Var};
use crate::error::{Error, Result};

/// `0.5 * ln(2 pi)`
pub const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianSample {
    /// Pre-clamp sample; the environment clamps to `[-1, 1]`.
    pub action: Vec<f64>,
    pub log_prob: f64,
    pub entropy: f64,
}

/// Draws from a diagonal Gaussian.
pub fn gaussian_sample<R: Rng + ?Sized>(mean: &[f64], log_std: &[f64], rng: &mut R) -> Result<GaussianSample> {
    if mean.len() != log_std.len() {
        return Err(Error::Shape("gaussian mean/log_std length".into()));
    }
    if mean.iter().any(|m| !m.is_finite()) || log_std.iter().any(|l| l.is_nan() || *l == f64::INFINITY) {
        return Err(Error::NonFinite("gaussian policy parameters".into()));
    }
    let action: Vec<f64> = mean
        .iter()
        .zip(log_std)
        .map(|(&m, &ls)| {
            let eps: f64 = rng.sample(StandardNormal);
            m + ls.exp() * eps
        })
        .collect();
    let log_prob = gaussian_log_prob_value(mean, log_std, &action);
    Ok(GaussianSample {
        action,
        log_prob,
        entropy: gaussian_entropy_value(log_std),
    })
}

pub fn gaussian_log_prob_value(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((&m, &ls), &a)| {
            let z = (a - m) * (-ls).exp();
            -0.5 * z * z - ls - HALF_LN_2PI
        })
        .sum()
}

pub fn gaussian_entropy_value(log_std: &[f64]) -> f64 {
    log_std.iter().map(|ls| ls + 0.5 + HALF_LN_2PI).sum()
}

/// Per-row log density, `[n, 1]`. `mean: [n, d]`, `log_std: [1, d]`,
/// `actions: [n, d]`.
pub fn gaussian_log_prob(tape: &mut Tape, mean: Var, log_std: Var, actions: Var) -> Var {
    let d = tape.value(mean).ncols() as f64;
    let neg = tape.neg(log_std);
    let inv_std = tape.exp(neg);
    let diff = tape.sub(actions, mean);
    let z = tape.mul(diff, inv_std);
    let z2 = tape.square(z);
    let q = tape.sum_cols(z2);
    let half_q = tape.scale(q, -0.5);
    let log_norm = tape.sum(log_std);
    let lp = tape.sub(half_q, log_norm);
    tape.add_scalar(lp, -d * HALF_LN_2PI)
}

/// Entropy of a diagonal Gaussian with state-independent `log_std: [1, d]`.
pub fn gaussian_entropy(tape: &mut Tape, log_std: Var) -> Var {
    let d = tape.value(log_std).ncols() as f64;
    let s = tape.sum(log_std);
    tape.add_scalar(s, d * (0.5 + HALF_LN_2PI))
}

/// Categorical over the entries of `logits` allowed by `mask`. Disallowed
/// entries have probability exactly zero.
#[derive(Clone, Debug, PartialEq)]
pub struct MaskedCategorical {
    log_probs: Vec<f64>,
    mask: Vec<bool>,
}

impl MaskedCategorical {
    pub fn new(logits: &[f64], mask: &[bool]) -> Result<Self> {
        if logits.len() != mask.len() {
            return Err(Error::Shape("logits/mask length".into()));
        }
        if !mask.iter().any(|&m| m) {
            return Err(Error::InvalidArgument("mask has no valid entries".into()));
        }
        if logits.iter().zip(mask).any(|(l, &m)| m && !l.is_finite()) {
            return Err(Error::NonFinite("categorical logits".into()));
        }
        let lse = masked_logsumexp(logits.iter().copied(), mask.iter().copied());
        let log_probs = logits
            .iter()
            .zip(mask)
            .map(|(&l, &m)| if m { l - lse } else { f64::NEG_INFINITY })
            .collect();
        Ok(MaskedCategorical {
            log_probs,
            mask: mask.to_vec(),
        })
    }

    pub fn unmasked(logits: &[f64]) -> Result<Self> {
        Self::new(logits, &vec![true; logits.len()])
    }

    pub fn probs(&self) -> Vec<f64> {
        self.log_probs.iter().map(|lp| lp.exp()).collect()
    }

    pub fn log_prob(&self, i: usize) -> f64 {
        self.log_probs[i]
    }

    pub fn entropy(&self) -> f64 {
        self.log_probs
            .iter()
            .zip(&self.mask)
            .filter(|(_, &m)| m)
            .map(|(&lp, _)| -lp.exp() * lp)
            .sum()
    }

    /// Inverse-CDF sample; only valid entries can be returned.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let mut last_valid = 0;
        for (i, (&lp, &m)) in self.log_probs.iter().zip(&self.mask).enumerate() {
            if !m {
                continue;
            }
            last_valid = i;
            acc += lp.exp();
            if u < acc {
                return i;
            }
        }
        last_valid
    }

    pub fn mode(&self) -> usize {
        self.log_probs
            .iter()
            .enumerate()
            .filter(|(i, _)| self.mask[*i])
            .max_by(|a, b| a.1.total_cmp(b.1))
            .map(|(i, _)| i)
            .expect("at least one valid entry")
    }
}

/// Log-probability of `actions[i]` under row `i` of the masked softmax.
pub fn categorical_log_prob(tape: &mut Tape, logits: Var, mask: Rc<Array2<bool>>, actions: Rc<[usize]>) -> Var {
    let lp = tape.masked_log_softmax(logits, mask);
    tape.gather(lp, actions)
}

pub fn categorical_entropy(tape: &mut Tape, logits: Var, mask: Rc<Array2<bool>>) -> Var {
    tape.masked_entropy(logits, mask)
}

pub fn full_mask(rows: usize, cols: usize) -> Rc<Array2<bool>> {
    Rc::new(Array2::from_elem((rows, cols), true))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::params::ParamSet;
    use std::f64::consts::PI;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_width_gaussian_returns_mean() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let s = gaussian_sample(&[0.3, -0.7], &[-1e3, -1e3], &mut rng).unwrap();
        assert_eq!(s.action, vec![0.3, -0.7]);
    }

    #[test]
    fn density_at_mode() {
        let lp = gaussian_log_prob_value(&[0.1, 0.2], &[0.0, 0.0], &[0.1, 0.2]);
        assert!((lp + (2.0 * PI).ln()).abs() < 1e-15);
    }

    #[test]
    fn entropy_matches_monte_carlo() {
        let mean = [0.2, -0.4];
        let log_std = [(0.5f64).ln(), (1.3f64).ln()];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let n = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let s = gaussian_sample(&mean, &log_std, &mut rng).unwrap();
            acc -= s.log_prob;
        }
        let mc = acc / n as f64;
        let exact = gaussian_entropy_value(&log_std);
        assert!(((mc - exact) / exact).abs() < 0.01, "{mc} vs {exact}");
    }

    #[test]
    fn non_finite_parameters_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gaussian_sample(&[f64::NAN, 0.0], &[0.0, 0.0], &mut rng).is_err());
        assert!(gaussian_sample(&[0.0, 0.0], &[f64::INFINITY, 0.0], &mut rng).is_err());
    }

    #[test]
    fn tape_log_prob_agrees_with_scalar_version() {
        let mut t = Tape::new();
        let mean = t.constant(array![[0.1, 0.2], [-0.5, 0.3]]);
        let ls = t.constant(array![[-0.3, 0.4]]);
        let a = t.constant(array![[0.0, 1.0], [0.7, -0.2]]);
        let lp = gaussian_log_prob(&mut t, mean, ls, a);
        let v = t.value(lp);
        let r0 = gaussian_log_prob_value(&[0.1, 0.2], &[-0.3, 0.4], &[0.0, 1.0]);
        let r1 = gaussian_log_prob_value(&[-0.5, 0.3], &[-0.3, 0.4], &[0.7, -0.2]);
        assert!((v[[0, 0]] - r0).abs() < 1e-14 && (v[[1, 0]] - r1).abs() < 1e-14);
        let h = gaussian_entropy(&mut t, ls);
        assert!((t.scalar(h) - gaussian_entropy_value(&[-0.3, 0.4])).abs() < 1e-14);
    }

    #[test]
    fn categorical_basics() {
        let c = MaskedCategorical::unmasked(&[0.0; 6]).unwrap();
        for p in c.probs() {
            assert!((p - 1.0 / 6.0).abs() < 1e-15);
        }
        let c = MaskedCategorical::new(&[0.3, 9.0, -2.0], &[false, false, true]).unwrap();
        assert_eq!(c.probs(), vec![0.0, 0.0, 1.0]);
        assert_eq!(c.entropy(), 0.0);
        assert!(MaskedCategorical::new(&[0.0, 0.0], &[false, false]).is_err());
    }

    #[test]
    fn masked_entries_never_sampled() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let logits: Vec<f64> = (0..15).map(|i| (i as f64 * 0.37).sin() * 3.0).collect();
        let mask: Vec<bool> = (0..15).map(|i| i % 4 != 0).collect();
        let c = MaskedCategorical::new(&logits, &mask).unwrap();
        for _ in 0..100_000 {
            assert!(mask[c.sample(&mut rng)]);
        }
    }

    #[test]
    fn masked_logit_gradient_is_exactly_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let logits: Vec<f64> = (0..15).map(|_| rng.random_range(-2.0..2.0)).collect();
        let mask_row: Vec<bool> = (0..15).map(|i| !matches!(i, 2 | 7 | 11)).collect();
        let mut p = ParamSet::new();
        let id = p.add("logits", Array2::from_shape_vec((1, 15), logits.clone()).unwrap());
        let mask = Rc::new(Array2::from_shape_vec((1, 15), mask_row.clone()).unwrap());
        let mut t = Tape::new();
        let z = t.param(&p, id);
        let lp = categorical_log_prob(&mut t, z, mask.clone(), Rc::from(vec![5]));
        let h = categorical_entropy(&mut t, z, mask);
        let both = t.add(lp, h);
        let l = t.sum(both);
        let g = t.backward(l, &p);
        for j in [2, 7, 11] {
            assert_eq!(g.get(id)[[0, j]], 0.0);
        }
        // Finite differences agree on the valid coordinates and vanish on masked ones.
        let eval = |z: &[f64]| {
            let c = MaskedCategorical::new(z, &mask_row).unwrap();
            c.log_prob(5) + c.entropy()
        };
        for j in 0..15 {
            let mut up = logits.clone();
            let mut dn = logits.clone();
            up[j] += 1e-6;
            dn[j] -= 1e-6;
            let fd = (eval(&up) - eval(&dn)) / 2e-6;
            if mask_row[j] {
                assert!((fd - g.get(id)[[0, j]]).abs() < 1e-7);
            } else {
                assert_eq!(fd, 0.0);
            }
        }
    }
}
