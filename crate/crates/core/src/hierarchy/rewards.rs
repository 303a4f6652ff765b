use rand::Rng;

use crate::error::Result;
use crate::neural::MaskedCategorical;

/// Task reward plus the scaled skill-identifiability bonus.
pub fn diayn_bonus(reward: f64, log_q: f64, log_p: f64, alpha: f64) -> f64 {
    reward + alpha * (log_q - log_p)
}

/// Decrease in Euclidean distance to `goal` over one step.
pub fn goal_shaping(prev_pos: [f64; 2], new_pos: [f64; 2], goal: [f64; 2]) -> f64 {
    let d = |p: [f64; 2]| (p[0] - goal[0]).hypot(p[1] - goal[1]);
    d(prev_pos) - d(new_pos)
}

/// Samples a zone from the masked softmax over `scores`.
pub fn select_zone_goal<R: Rng + ?Sized>(scores: &[f64], valid: &[bool], rng: &mut R) -> Result<usize> {
    Ok(MaskedCategorical::new(scores, valid)?.sample(rng))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn bonus_examples() {
        assert_eq!(diayn_bonus(0.7, -0.1, -3.0, 0.0), 0.7);
        assert_eq!(diayn_bonus(0.7, -1.2, -1.2, 0.01), 0.7);
        let r = diayn_bonus(1.0, -0.2, (0.2f64).ln(), 0.01);
        assert!((r - 1.0141).abs() < 1e-4);
    }

    #[test]
    fn shaping_examples() {
        let g = [0.5, -0.2];
        assert_eq!(goal_shaping([0.1, 0.1], [0.1, 0.1], g), 0.0);
        let r = goal_shaping([0.0, 0.0], [0.01, 0.0], [1.0, 0.0]);
        assert!((r - 0.01).abs() < 1e-15);
    }

    #[test]
    fn shaping_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let g = [0.3, 0.7];
        let mut path: Vec<[f64; 2]> = (0..50).map(|_| [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]).collect();
        let total: f64 = path.windows(2).map(|w| goal_shaping(w[0], w[1], g)).sum();
        let d = |p: [f64; 2]| (p[0] - g[0]).hypot(p[1] - g[1]);
        assert!((total - (d(path[0]) - d(path[49]))).abs() < 1e-12);
        path.push(path[0]);
        let closed: f64 = path.windows(2).map(|w| goal_shaping(w[0], w[1], g)).sum();
        assert!(closed.abs() < 1e-12);
    }

    #[test]
    fn zone_selection() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut valid = vec![false; 15];
        valid[6] = true;
        for _ in 0..100 {
            assert_eq!(select_zone_goal(&[0.3; 15], &valid, &mut rng).unwrap(), 6);
        }
        let c = MaskedCategorical::unmasked(&[0.0; 15]).unwrap();
        assert!(c.probs().iter().all(|p| (p - 1.0 / 15.0).abs() < 1e-15));
        let valid: Vec<bool> = (0..15).map(|i| i % 3 != 1).collect();
        let scores: Vec<f64> = (0..15).map(|i| i as f64 * 0.2).collect();
        for _ in 0..100_000 {
            assert!(valid[select_zone_goal(&scores, &valid, &mut rng).unwrap()]);
        }
        assert!(select_zone_goal(&[0.0; 3], &[false; 3], &mut rng).is_err());
    }
}
