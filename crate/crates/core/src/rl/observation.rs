use ndarray::Array2;

/// `[previous prices (R), own previous efforts (R), previous summed reward]`.
pub fn build_harvester_observation(prev_prices: &[f64], prev_efforts: &[f64], prev_reward: f64) -> Vec<f64> {
    let mut obs = Vec::with_capacity(prev_prices.len() + prev_efforts.len() + 1);
    obs.extend_from_slice(prev_prices);
    obs.extend_from_slice(prev_efforts);
    obs.push(prev_reward);
    obs
}

/// `[effective efforts (N x R, agent-major), stocks (R), budgets (B),
/// observed valuations (B x R, buyer-major)]`.
pub fn build_policymaker_observation(
    effective_efforts: &Array2<f64>,
    stocks: &[f64],
    budgets: &[f64],
    observed_valuations: &Array2<f64>,
) -> Vec<f64> {
    let mut obs = Vec::with_capacity(effective_efforts.len() + stocks.len() + budgets.len() + observed_valuations.len());
    obs.extend(effective_efforts.iter());
    obs.extend_from_slice(stocks);
    obs.extend_from_slice(budgets);
    obs.extend(observed_valuations.iter());
    obs
}

pub fn policymaker_observation_len(harvesters: usize, resources: usize, buyers: usize) -> usize {
    harvesters * resources + resources + buyers + buyers * resources
}
