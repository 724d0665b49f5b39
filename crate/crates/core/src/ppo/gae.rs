//! Generalized advantage estimation over one agent trajectory.

/// Advantages and value targets for rewards `r_t`, values `V(s_t)` and a
/// bootstrap value for the state after the last step (ignored when
/// `terminal`).
pub fn gae(rewards: &[f64], values: &[f64], last_value: f64, terminal: bool, gamma: f64, lambda: f64) -> (Vec<f64>, Vec<f64>) {
    assert_eq!(rewards.len(), values.len());
    let n = rewards.len();
    let mut adv = vec![0.0; n];
    let mut next_adv = 0.0;
    let mut next_value = if terminal { 0.0 } else { last_value };
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        next_adv = delta + gamma * lambda * next_adv;
        adv[t] = next_adv;
        next_value = values[t];
    }
    let returns = adv.iter().zip(values).map(|(a, v)| a + v).collect();
    (adv, returns)
}
