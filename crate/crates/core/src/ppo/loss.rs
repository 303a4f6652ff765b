//! Training objectives on the tape. Inputs are checked for finiteness before
//! any node is built.

use crate::error::{Error, Result};
use crate::neural::dist::HALF_LN_2PI;
use crate::neural::{Tape, Var};

fn check_finite(tape: &Tape, v: Var, what: &str) -> Result<()> {
    if tape.value(v).iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(what.into()))
    }
}

fn check_same_shape(tape: &Tape, a: Var, b: Var, what: &str) -> Result<()> {
    let (sa, sb) = (tape.value(a).dim(), tape.value(b).dim());
    if sa == sb {
        Ok(())
    } else {
        Err(Error::Shape(format!("{what}: {sa:?} vs {sb:?}")))
    }
}

/// Clipped surrogate with entropy bonus:
/// `-mean(min(r A, clip(r, 1-eps, 1+eps) A)) - entropy_coef * entropy`
/// where `r = exp(logp_new - logp_old)`. `entropy` is a `[1, 1]` batch mean.
pub fn ppo_policy_loss(
    tape: &mut Tape,
    logp_new: Var,
    logp_old: Var,
    advantages: Var,
    clip_eps: f64,
    entropy: Var,
    entropy_coef: f64,
) -> Result<Var> {
    check_same_shape(tape, logp_new, logp_old, "log-probs")?;
    check_same_shape(tape, logp_new, advantages, "advantages")?;
    for (v, what) in [
        (logp_new, "new log-probs"),
        (logp_old, "old log-probs"),
        (advantages, "advantages"),
        (entropy, "entropy"),
    ] {
        check_finite(tape, v, what)?;
    }
    if !(clip_eps > 0.0) {
        return Err(Error::InvalidArgument(format!("clip epsilon {clip_eps}")));
    }
    let diff = tape.sub(logp_new, logp_old);
    let ratio = tape.exp(diff);
    let s1 = tape.mul(ratio, advantages);
    let clipped = tape.clamp(ratio, 1.0 - clip_eps, 1.0 + clip_eps);
    let s2 = tape.mul(clipped, advantages);
    let m = tape.minimum(s1, s2);
    let surr = tape.mean(m);
    let neg_surr = tape.neg(surr);
    let bonus = tape.scale(entropy, -entropy_coef);
    Ok(tape.add(neg_surr, bonus))
}

/// Mean squared error.
pub fn value_loss_point(tape: &mut Tape, v_pred: Var, targets: Var) -> Result<Var> {
    check_same_shape(tape, v_pred, targets, "value targets")?;
    check_finite(tape, v_pred, "value predictions")?;
    check_finite(tape, targets, "value targets")?;
    let d = tape.sub(v_pred, targets);
    let sq = tape.square(d);
    Ok(tape.mean(sq))
}

/// Mean Gaussian negative log-likelihood of `targets` under `N(mu, sigma^2)`.
pub fn value_loss_gaussian_nll(tape: &mut Tape, mu: Var, sigma: Var, targets: Var) -> Result<Var> {
    check_same_shape(tape, mu, targets, "value targets")?;
    check_same_shape(tape, mu, sigma, "value sigma")?;
    check_finite(tape, mu, "value mean")?;
    check_finite(tape, targets, "value targets")?;
    if !tape.value(sigma).iter().all(|&s| s > 0.0 && s.is_finite()) {
        return Err(Error::InvalidArgument("value sigma must be positive".into()));
    }
    let log_sigma = tape.log(sigma);
    let neg = tape.neg(log_sigma);
    let inv = tape.exp(neg);
    let diff = tape.sub(targets, mu);
    let z = tape.mul(diff, inv);
    let z2 = tape.square(z);
    let half = tape.scale(z2, 0.5);
    let per = tape.add(log_sigma, half);
    let m = tape.mean(per);
    Ok(tape.add_scalar(m, HALF_LN_2PI))
}

/// Value-only surrogate for tests and diagnostics.
pub fn ppo_policy_loss_value(
    logp_new: &[f64],
    logp_old: &[f64],
    advantages: &[f64],
    clip_eps: f64,
    entropy: f64,
    entropy_coef: f64,
) -> f64 {
    let n = logp_new.len() as f64;
    let surr: f64 = logp_new
        .iter()
        .zip(logp_old)
        .zip(advantages)
        .map(|((&a, &b), &adv)| {
            let r = (a - b).exp();
            (r * adv).min(r.clamp(1.0 - clip_eps, 1.0 + clip_eps) * adv)
        })
        .sum();
    -surr / n - entropy_coef * entropy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::{grad_check, ParamSet, Tensor};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn col(t: &mut Tape, v: &[f64]) -> Var {
        t.constant(Tensor::from_shape_vec((v.len(), 1), v.to_vec()).unwrap())
    }

    fn scalar(t: &mut Tape, v: f64) -> Var {
        t.constant(Tensor::from_elem((1, 1), v))
    }

    #[test]
    fn equal_log_probs_give_minus_mean_advantage() {
        let mut t = Tape::new();
        let lp = col(&mut t, &[-1.0, -0.3, -2.0]);
        let adv = col(&mut t, &[0.5, -1.0, 2.0]);
        let h = scalar(&mut t, 0.0);
        let l = ppo_policy_loss(&mut t, lp, lp, adv, 0.2, h, 0.003).unwrap();
        assert!((t.scalar(l) + 0.5).abs() < 1e-15);
    }

    #[test]
    fn clip_arithmetic() {
        let mut t = Tape::new();
        let new = col(&mut t, &[2f64.ln()]);
        let old = col(&mut t, &[0.0]);
        let adv = col(&mut t, &[1.0]);
        let h = scalar(&mut t, 0.0);
        let l = ppo_policy_loss(&mut t, new, old, adv, 0.2, h, 0.0).unwrap();
        assert!((t.scalar(l) + 1.2).abs() < 1e-14);
    }

    #[test]
    fn huge_clip_is_unclipped_objective() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let n = 64;
        let new: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
        let old: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..0.0)).collect();
        let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let unclipped: f64 =
            -new.iter().zip(&old).zip(&adv).map(|((a, b), c)| (a - b).exp() * c).sum::<f64>() / n as f64;
        let mut t = Tape::new();
        let (a, b, c) = (col(&mut t, &new), col(&mut t, &old), col(&mut t, &adv));
        let h = scalar(&mut t, 1.3);
        let l = ppo_policy_loss(&mut t, a, b, c, 1e6, h, 0.1).unwrap();
        assert!((t.scalar(l) - (unclipped - 0.13)).abs() < 1e-12);
        assert!((ppo_policy_loss_value(&new, &old, &adv, 1e6, 1.3, 0.1) - t.scalar(l)).abs() < 1e-12);
    }

    #[test]
    fn non_finite_inputs_rejected() {
        let mut t = Tape::new();
        let a = col(&mut t, &[0.0, f64::NAN]);
        let b = col(&mut t, &[0.0, 0.0]);
        let h = scalar(&mut t, 0.0);
        assert!(ppo_policy_loss(&mut t, a, b, b, 0.2, h, 0.0).is_err());
        assert!(value_loss_point(&mut t, a, b).is_err());
        let s = col(&mut t, &[1.0, 0.0]);
        assert!(value_loss_gaussian_nll(&mut t, b, s, b).is_err());
    }

    #[test]
    fn mse_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let v: Vec<f64> = (0..33).map(|_| rng.random_range(-3.0..3.0)).collect();
        let g: Vec<f64> = (0..33).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut t = Tape::new();
        let (a, b) = (col(&mut t, &v), col(&mut t, &g));
        let same = value_loss_point(&mut t, a, a).unwrap();
        assert_eq!(t.scalar(same), 0.0);
        let l = value_loss_point(&mut t, a, b).unwrap();
        let hand = v.iter().zip(&g).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / 33.0;
        assert!((t.scalar(l) - hand).abs() < 1e-13);
        let shifted: Vec<f64> = v.iter().map(|x| x + 0.7).collect();
        let c = col(&mut t, &shifted);
        let l = value_loss_point(&mut t, c, a).unwrap();
        assert!((t.scalar(l) - 0.49).abs() < 1e-13);
    }

    #[test]
    fn nll_at_mean_with_unit_sigma() {
        let mut t = Tape::new();
        let mu = col(&mut t, &[0.3, -2.0]);
        let s = col(&mut t, &[1.0, 1.0]);
        let l = value_loss_gaussian_nll(&mut t, mu, s, mu).unwrap();
        assert!((t.scalar(l) - HALF_LN_2PI).abs() < 1e-15);
    }

    #[test]
    fn nll_mean_gradient_is_half_mse_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..20 {
            let n = 50;
            let mut p = ParamSet::new();
            let id = p.add("mu", Tensor::from_shape_fn((n, 1), |_| rng.random_range(-5.0..5.0)));
            let targets: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();

            let mut t = Tape::new();
            let mu = t.param(&p, id);
            let s = t.constant(Tensor::ones((n, 1)));
            let tg = col(&mut t, &targets);
            let l = value_loss_gaussian_nll(&mut t, mu, s, tg).unwrap();
            let g_nll = t.backward(l, &p);

            let mut t = Tape::new();
            let mu = t.param(&p, id);
            let tg = col(&mut t, &targets);
            let l = value_loss_point(&mut t, mu, tg).unwrap();
            let g_mse = t.backward(l, &p);
            for (a, b) in g_nll.get(id).iter().zip(g_mse.get(id)) {
                assert!((a - 0.5 * b).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn losses_pass_gradient_check() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 120;
        let mut p = ParamSet::new();
        p.add("lp", Tensor::from_shape_fn((n, 1), |_| rng.random_range(-1.5..-0.5)));
        p.add("mu", Tensor::from_shape_fn((n, 1), |_| rng.random_range(-2.0..2.0)));
        p.add("raw_sigma", Tensor::from_shape_fn((n, 1), |_| rng.random_range(-1.0..1.0)));
        p.add("h", Tensor::from_elem((1, 1), 0.8));
        // Ratios well inside or outside the clip range so the kink is not straddled.
        let old: Vec<f64> = p
            .get(p.ids().next().unwrap())
            .iter()
            .enumerate()
            .map(|(i, &v)| v - [0.0, 0.05, 0.6, -0.6][i % 4])
            .collect();
        let adv: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let tg: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();

        let r = grad_check(&p, 1e-5, 400, &mut rng, |t, p| {
            let ids: Vec<_> = p.ids().collect();
            let lp = t.param(p, ids[0]);
            let mu = t.param(p, ids[1]);
            let raw = t.param(p, ids[2]);
            let h = t.param(p, ids[3]);
            let o = col(t, &old);
            let a = col(t, &adv);
            let y = col(t, &tg);
            let pl = ppo_policy_loss(t, lp, o, a, 0.2, h, 0.01)?;
            let vl = value_loss_point(t, mu, y)?;
            let sp = t.softplus(raw);
            let s = t.add_scalar(sp, 1e-6);
            let nl = value_loss_gaussian_nll(t, mu, s, y)?;
            let a = t.add(pl, vl);
            Ok(t.add(a, nl))
        })
        .unwrap();
        assert!(r.max_rel_error < 1e-4, "{r:?}");
    }
}
