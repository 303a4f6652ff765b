use rand::Rng;

use super::params::ParamSet;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Gradients smaller than this are compared on an absolute scale.
pub const REL_FLOOR: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_coord: usize,
    pub coords_checked: usize,
}

/// Compares the tape gradient of `loss` against central finite differences
/// on `coords` randomly chosen coordinates (all of them if there are fewer).
///
/// Relative error per coordinate is `|a - n| / max(|a|, |n|, REL_FLOOR)`.
pub fn grad_check<R, F>(params: &ParamSet, epsilon: f64, coords: usize, rng: &mut R, loss: F) -> Result<GradCheckReport>
where
    R: Rng + ?Sized,
    F: Fn(&mut Tape, &ParamSet) -> Result<Var>,
{
    let value = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::new();
        let l = loss(&mut tape, p)?;
        let v = tape.scalar(l);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::NonFinite("loss".into()))
        }
    };

    let mut tape = Tape::new();
    let l = loss(&mut tape, params)?;
    if !tape.scalar(l).is_finite() {
        return Err(Error::NonFinite("loss".into()));
    }
    let analytic = tape.backward(l, params).flatten();

    let total = params.count();
    let picked: Vec<usize> = if total <= coords {
        (0..total).collect()
    } else {
        rand::seq::index::sample(rng, total, coords).into_vec()
    };

    let mut work = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_coord: picked.first().copied().unwrap_or(0),
        coords_checked: picked.len(),
    };
    for &k in &picked {
        let orig = work.coord(k);
        work.set_coord(k, orig + epsilon);
        let up = value(&work)?;
        work.set_coord(k, orig - epsilon);
        let down = value(&work)?;
        work.set_coord(k, orig);
        let numeric = (up - down) / (2.0 * epsilon);
        let a = analytic[k];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > report.max_rel_error {
            report.max_rel_error = rel;
            report.worst_coord = k;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::tape::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_params(rng: &mut ChaCha8Rng, n: usize) -> ParamSet {
        let mut p = ParamSet::new();
        p.add("a", Tensor::from_shape_fn((n, 3), |_| rng.random_range(-1.0..1.0)));
        p.add("b", Tensor::from_shape_fn((1, 3), |_| rng.random_range(-1.0..1.0)));
        p
    }

    #[test]
    fn quadratic_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let p = random_params(&mut rng, 80);
        // Central differences are exact for quadratics at any step; a wider
        // step keeps cancellation error in the summed loss out of the way.
        let r = grad_check(&p, 1e-3, 200, &mut rng, |t, p| {
            let ids: Vec<_> = p.ids().collect();
            let a = t.param(p, ids[0]);
            let b = t.param(p, ids[1]);
            let a2 = t.square(a);
            let b2 = t.square(b);
            let sa = t.sum(a2);
            let sb = t.sum(b2);
            Ok(t.add(sa, sb))
        })
        .unwrap();
        assert_eq!(r.coords_checked, 200);
        assert!(r.max_rel_error < 1e-8, "{r:?}");
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_params(&mut rng, 4);
        let r = grad_check(&p, 1e-5, 200, &mut rng, |t, _| Ok(t.constant(Tensor::from_elem((1, 1), 3.0)))).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
        assert_eq!(r.coords_checked, 15);
    }

    #[test]
    fn non_finite_loss_is_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_params(&mut rng, 2);
        let r = grad_check(&p, 1e-5, 10, &mut rng, |t, _| Ok(t.constant(Tensor::from_elem((1, 1), f64::NAN))));
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }
}
