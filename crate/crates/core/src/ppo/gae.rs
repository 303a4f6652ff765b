use crate::error::{Error, Result};

/// Generalised advantage estimates for one environment's transition stream.
///
/// `rewards[t]` is the reward received after acting in state `t`, `values[t]`
/// the critic's estimate for state `t`, and `dones[t]` marks that the episode
/// ended on that transition. `bootstrap_value` is the estimate for the state
/// following the last transition; it is ignored when that transition is
/// terminal. Returns `(advantages, value_targets)` with
/// `target = value + advantage`.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    gae_lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::Shape(format!(
            "gae: {} rewards, {} values, {} dones",
            n,
            values.len(),
            dones.len()
        )));
    }
    let mut adv = vec![0.0; n];
    let mut running = 0.0;
    for t in (0..n).rev() {
        let (next_value, carry) = if dones[t] {
            (0.0, 0.0)
        } else if t + 1 < n {
            (values[t + 1], 1.0)
        } else {
            (bootstrap_value, 1.0)
        };
        // Past the end of the buffer there is nothing to carry.
        let carry = if t + 1 == n { 0.0 } else { carry };
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * gae_lambda * carry * running;
        adv[t] = running;
    }
    let targets = values.iter().zip(&adv).map(|(v, a)| v + a).collect();
    Ok((adv, targets))
}
