//! Generalized advantage estimation.

/// Computes GAE advantages and returns for one environment's step sequence.
///
/// `values[t]` is the critic estimate of the state the action at `t` was
/// taken in; `bootstrap_value` estimates the state after the final step and
/// only contributes when the sequence did not end in a terminal (`dones`
/// masks it out). Returns are `advantage + value`, the value-function
/// regression targets.
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> (Vec<f64>, Vec<f64>) {
    let t_len = rewards.len();
    assert_eq!(values.len(), t_len);
    assert_eq!(dones.len(), t_len);
    let mut advantages = vec![0.0; t_len];
    let mut carry = 0.0;
    for t in (0..t_len).rev() {
        let next_value = if t + 1 < t_len {
            values[t + 1]
        } else {
            bootstrap_value
        };
        let not_done = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * next_value * not_done - values[t];
        carry = delta + gamma * lambda * not_done * carry;
        advantages[t] = carry;
    }
    let returns = advantages
        .iter()
        .zip(values)
        .map(|(a, v)| a + v)
        .collect();
    (advantages, returns)
}
