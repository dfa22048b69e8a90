use super::RlError;

/// Generalized advantage estimates and value targets for one trajectory
/// segment. `bootstrap_value` is the value of the state after the last step
/// (0 when the segment ended in a true terminal state).
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    bootstrap_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>), RlError> {
    if rewards.len() != values.len() {
        return Err(RlError::LengthMismatch(format!(
            "{} rewards vs {} values",
            rewards.len(),
            values.len()
        )));
    }
    let n = rewards.len();
    let mut advantages = vec![0.0; n];
    let mut running = 0.0;
    let mut next_value = bootstrap_value;
    for t in (0..n).rev() {
        let delta = rewards[t] + gamma * next_value - values[t];
        running = delta + gamma * lambda * running;
        advantages[t] = running;
        next_value = values[t];
    }
    let targets = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, targets))
}
