use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neural::{Grads, ParamSet};

/// Adam moments, stored flat per parameter tensor in `ParamSet` order.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(params: &ParamSet) -> Self {
        Self::with_betas(params, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(params: &ParamSet, beta1: f64, beta2: f64, eps: f64) -> Self {
        let zeros: Vec<Vec<f64>> = params.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        AdamState {
            step: 0,
            beta1,
            beta2,
            eps,
            m: zeros.clone(),
            v: zeros,
        }
    }

    fn check(&self, params: &ParamSet) -> Result<()> {
        let ok = self.m.len() == params.len()
            && self.v.len() == params.len()
            && params
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|((_, t), (m, v))| m.len() == t.len() && v.len() == t.len());
        if ok {
            Ok(())
        } else {
            Err(Error::Shape("optimizer moments do not match parameters".into()))
        }
    }
}

/// One bias-corrected Adam update. When `max_grad_norm` is set, gradients are
/// rescaled to that global norm first. Returns the pre-clip global norm.
pub fn adam_step(
    params: &mut ParamSet,
    grads: &Grads,
    state: &mut AdamState,
    lr: f64,
    max_grad_norm: Option<f64>,
) -> Result<f64> {
    state.check(params)?;
    if grads.iter().count() != params.len() || grads.iter().zip(params.iter()).any(|(g, (_, p))| g.dim() != p.dim()) {
        return Err(Error::Shape("gradients do not match parameters".into()));
    }
    let norm = grads.global_norm();
    if !norm.is_finite() {
        return Err(Error::NonFinite("gradient".into()));
    }
    let scale = match max_grad_norm {
        Some(max) if norm > max => max / norm,
        _ => 1.0,
    };
    state.step += 1;
    let (b1, b2) = (state.beta1, state.beta2);
    let c1 = 1.0 - b1.powi(state.step as i32);
    let c2 = 1.0 - b2.powi(state.step as i32);
    for (((p, g), m), v) in params.values_mut().zip(grads.iter()).zip(&mut state.m).zip(&mut state.v) {
        for (((pi, &gi), mi), vi) in p.iter_mut().zip(g.iter()).zip(m.iter_mut()).zip(v.iter_mut()) {
            let gi = gi * scale;
            *mi = b1 * *mi + (1.0 - b1) * gi;
            *vi = b2 * *vi + (1.0 - b2) * gi * gi;
            let m_hat = *mi / c1;
            let v_hat = *vi / c2;
            *pi -= lr * m_hat / (v_hat.sqrt() + state.eps);
        }
    }
    Ok(norm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::Tensor;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn setup(rng: &mut ChaCha8Rng) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("w", Tensor::from_shape_fn((3, 4), |_| rng.random_range(-1.0..1.0)));
        p.add("b", Tensor::from_shape_fn((1, 4), |_| rng.random_range(-1.0..1.0)));
        p
    }

    fn grads_from(p: &ParamSet, vals: &[f64]) -> Grads {
        let mut g = Grads::zeros_like(p);
        let mut k = 0;
        for t in g.iter_mut() {
            for x in t.iter_mut() {
                *x = vals[k];
                k += 1;
            }
        }
        g
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut p = setup(&mut rng);
        let before = p.clone();
        let mut s = AdamState::new(&p);
        let g = Grads::zeros_like(&p);
        adam_step(&mut p, &g, &mut s, 3e-4, Some(0.5)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn first_step_moves_each_coordinate_by_lr() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut p = setup(&mut rng);
        let before = p.flatten();
        let mut s = AdamState::new(&p);
        let g: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 0.37 } else { -2.5 }).collect();
        let grads = grads_from(&p, &g);
        adam_step(&mut p, &grads, &mut s, 1e-3, None).unwrap();
        for ((a, b), gi) in p.flatten().iter().zip(&before).zip(&g) {
            let step = b - a;
            assert!((step.abs() - 1e-3).abs() < 1e-9);
            assert_eq!(step.signum(), gi.signum());
        }
    }

    #[test]
    fn matches_reference_recurrence() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut p = setup(&mut rng);
        let mut s = AdamState::new(&p);
        let mut theta = p.flatten();
        let n = theta.len();
        let (mut m, mut v) = (vec![0.0; n], vec![0.0; n]);
        let lr = 1e-2;
        for step in 1..=100 {
            let g: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let grads = grads_from(&p, &g);
            adam_step(&mut p, &grads, &mut s, lr, None).unwrap();
            for k in 0..n {
                m[k] = 0.9 * m[k] + 0.1 * g[k];
                v[k] = 0.999 * v[k] + 0.001 * g[k] * g[k];
                let mh = m[k] / (1.0 - 0.9f64.powi(step));
                let vh = v[k] / (1.0 - 0.999f64.powi(step));
                theta[k] -= lr * mh / (vh.sqrt() + 1e-8);
            }
        }
        for (a, b) in p.flatten().iter().zip(&theta) {
            assert!((a - b).abs() <= 1e-10);
        }
    }

    #[test]
    fn clipping_bounds_global_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut p = setup(&mut rng);
        let mut clipped = p.clone();
        let g: Vec<f64> = (0..16).map(|_| rng.random_range(-10.0..10.0)).collect();
        let grads = grads_from(&p, &g);
        let mut s1 = AdamState::new(&p);
        let mut s2 = AdamState::new(&p);
        let norm = adam_step(&mut clipped, &grads, &mut s1, 1e-3, Some(0.5)).unwrap();
        assert!(norm > 0.5);
        let mut scaled = grads.clone();
        scaled.scale(0.5 / norm);
        adam_step(&mut p, &scaled, &mut s2, 1e-3, None).unwrap();
        assert_eq!(p, clipped);
    }

    #[test]
    fn mismatched_state_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut p = setup(&mut rng);
        let mut other = ParamSet::new();
        other.add("x", Tensor::zeros((2, 2)));
        let mut s = AdamState::new(&other);
        assert!(adam_step(&mut p.clone(), &Grads::zeros_like(&p), &mut s, 1e-3, None).is_err());
        let mut s = AdamState::new(&p);
        assert!(adam_step(&mut p, &Grads::zeros_like(&other), &mut s, 1e-3, None).is_err());
    }
}
