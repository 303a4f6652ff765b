use serde::{Deserialize, Serialize};

/// Per zone count `i` (1-based, index `i - 1`), how long trajectories took to
/// reach `i` distinct zones.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VisitTimes {
    /// Mean over all trajectories; those that never reached `i` count as
    /// their episode length plus the penalty.
    pub mean: Vec<f64>,
    /// Mean over the trajectories that did reach `i`; `None` if none did.
    pub mean_complete: Vec<Option<f64>>,
    /// Trajectories that never reached `i`.
    pub incomplete: Vec<usize>,
    pub trajectories: usize,
}

/// `trajectories` are `(episode length, visit steps)` pairs, with the step
/// count at which each new zone was reached in order.
pub fn cumulative_visit_times(trajectories: &[(u32, Vec<u32>)], zones: usize, penalty: u32) -> VisitTimes {
    let n = trajectories.len();
    let mut sums = vec![0.0; zones];
    let mut complete_sums = vec![0.0; zones];
    let mut incomplete = vec![0; zones];
    for (length, visits) in trajectories {
        for i in 0..zones {
            match visits.get(i) {
                Some(&t) => {
                    sums[i] += t as f64;
                    complete_sums[i] += t as f64;
                }
                None => {
                    sums[i] += (*length + penalty) as f64;
                    incomplete[i] += 1;
                }
            }
        }
    }
    VisitTimes {
        mean: sums.iter().map(|s| if n == 0 { f64::NAN } else { s / n as f64 }).collect(),
        mean_complete: complete_sums
            .iter()
            .zip(&incomplete)
            .map(|(s, &miss)| (n > miss).then(|| s / (n - miss) as f64))
            .collect(),
        incomplete,
        trajectories: n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn regular_visits() {
        let t = (1500, (1..=15).map(|i| 100 * i).collect());
        let v = cumulative_visit_times(&[t], 15, 0);
        for i in 0..15 {
            assert_eq!(v.mean[i], 100.0 * (i + 1) as f64);
            assert_eq!(v.incomplete[i], 0);
        }
    }

    #[test]
    fn partial_trajectories_are_flagged() {
        let v = cumulative_visit_times(&[(2000, vec![10, 20, 30])], 15, 0);
        assert_eq!(&v.incomplete[..3], &[0, 0, 0]);
        assert!(v.incomplete[3..].iter().all(|&c| c == 1));
        assert_eq!(v.mean_complete[3], None);
        assert_eq!(v.mean[3], 2000.0);
    }

    #[test]
    fn hand_computed_batch() {
        let trajs = [(300, vec![50, 120, 300]), (400, vec![80, 200]), (400, vec![30])];
        let v = cumulative_visit_times(&trajs, 3, 100);
        assert_eq!(v.mean[0], (50.0 + 80.0 + 30.0) / 3.0);
        assert_eq!(v.mean[1], (120.0 + 200.0 + 500.0) / 3.0);
        assert_eq!(v.mean[2], (300.0 + 500.0 + 500.0) / 3.0);
        assert_eq!(v.mean_complete[1], Some(160.0));
        assert_eq!(v.mean_complete[2], Some(300.0));
        assert_eq!(v.incomplete, vec![0, 1, 2]);
    }
}
