use rand::Rng;
use rand_distr::StandardNormal;

use super::{PpoConfig, RlError};
use crate::nn::Mlp;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Per-dimension action bounds `[low, high]`.
pub type Bounds = Vec<(f64, f64)>;

/// Diagonal Gaussian policy with a state-independent log standard deviation
/// and a separate value network.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPolicy {
    pub mean_net: Mlp,
    pub value_net: Mlp,
    pub log_std: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    /// Raw action clipped to the bounds; what the environment receives.
    pub env_action: Vec<f64>,
    pub raw_action: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_prob: f64,
    pub value: f64,
}

/// Log density of `action` under `N(mean, exp(log_std)^2)`.
pub fn gaussian_log_prob(mean: &[f64], log_std: &[f64], action: &[f64]) -> f64 {
    mean.iter()
        .zip(log_std)
        .zip(action)
        .map(|((m, ls), a)| {
            let z = (a - m) / ls.exp();
            -0.5 * z * z - ls - 0.5 * LN_2PI
        })
        .sum()
}

impl GaussianPolicy {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, action_dim: usize, config: &PpoConfig, rng: &mut R) -> Self {
        let mut mean_net = Mlp::two_hidden(obs_dim, action_dim, rng);
        // near-zero initial means
        mean_net.scale_output_layer(0.01);
        let value_net = Mlp::two_hidden(obs_dim, 1, rng);
        Self { mean_net, value_net, log_std: vec![config.initial_log_std; action_dim] }
    }

    pub fn obs_dim(&self) -> usize {
        self.mean_net.input_size()
    }

    pub fn action_dim(&self) -> usize {
        self.log_std.len()
    }

    fn check_obs(&self, observation: &[f64]) -> Result<(), RlError> {
        if observation.len() != self.obs_dim() {
            return Err(RlError::ObservationSize { got: observation.len(), expected: self.obs_dim() });
        }
        Ok(())
    }

    pub fn value(&self, observation: &[f64]) -> Result<f64, RlError> {
        self.check_obs(observation)?;
        let v = self.value_net.forward(observation)?[0];
        if !v.is_finite() {
            return Err(RlError::NonFiniteOutput);
        }
        Ok(v)
    }

    pub fn mean(&self, observation: &[f64]) -> Result<Vec<f64>, RlError> {
        self.check_obs(observation)?;
        let m = self.mean_net.forward(observation)?;
        if m.iter().any(|x| !x.is_finite()) {
            return Err(RlError::NonFiniteOutput);
        }
        Ok(m)
    }

    /// Samples an action. The log-probability is of the raw, unclipped
    /// sample.
    pub fn act<R: Rng + ?Sized>(
        &self,
        observation: &[f64],
        rng: &mut R,
        bounds: &[(f64, f64)],
    ) -> Result<ActionSample, RlError> {
        if bounds.len() != self.action_dim() {
            return Err(RlError::LengthMismatch(format!(
                "{} bounds for {} action dimensions",
                bounds.len(),
                self.action_dim()
            )));
        }
        let mean = self.mean(observation)?;
        let raw_action: Vec<f64> = mean
            .iter()
            .zip(&self.log_std)
            .map(|(m, ls)| {
                let z: f64 = rng.sample(StandardNormal);
                m + ls.exp() * z
            })
            .collect();
        let env_action = raw_action.iter().zip(bounds).map(|(a, (lo, hi))| a.clamp(*lo, *hi)).collect();
        let log_prob = gaussian_log_prob(&mean, &self.log_std, &raw_action);
        let value = self.value(observation)?;
        Ok(ActionSample { env_action, raw_action, mean, log_prob, value })
    }

    pub fn all_finite(&self) -> bool {
        self.mean_net.all_finite() && self.value_net.all_finite() && self.log_std.iter().all(|x| x.is_finite())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn policy(seed: u64) -> GaussianPolicy {
        GaussianPolicy::new(3, 2, &PpoConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed))
    }

    #[test]
    fn degenerate_std_returns_clipped_mean() {
        let mut p = policy(1);
        p.log_std = vec![-20.0, -20.0];
        let obs = [0.2, -0.4, 1.0];
        let mean = p.mean(&obs).unwrap();
        let s = p.act(&obs, &mut ChaCha8Rng::seed_from_u64(2), &[(0.0, 1.0), (-1.0, 1.0)]).unwrap();
        assert!((s.env_action[0] - mean[0].clamp(0.0, 1.0)).abs() < 1e-7);
        assert!((s.env_action[1] - mean[1].clamp(-1.0, 1.0)).abs() < 1e-7);
    }

    #[test]
    fn mean_above_bound_clips_to_high() {
        let mut p = policy(1);
        p.log_std = vec![-20.0, -20.0];
        // push the output bias far up
        let n = p.mean_net.params().len();
        p.mean_net.params_mut()[n - 2] = 50.0;
        p.mean_net.params_mut()[n - 1] = 50.0;
        let s = p.act(&[0.0; 3], &mut ChaCha8Rng::seed_from_u64(2), &[(0.0, 1.0), (0.0, 10.0)]).unwrap();
        assert_eq!(s.env_action, vec![1.0, 10.0]);
    }

    #[test]
    fn log_prob_matches_closed_form_density() {
        let p = policy(3);
        let s = p.act(&[0.1, 0.2, 0.3], &mut ChaCha8Rng::seed_from_u64(4), &[(0.0, 1.0); 2]).unwrap();
        let density: f64 = s
            .raw_action
            .iter()
            .zip(&s.mean)
            .zip(&p.log_std)
            .map(|((a, m), ls)| {
                let sd = ls.exp();
                (-(a - m).powi(2) / (2.0 * sd * sd)).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
            })
            .product();
        assert!((s.log_prob - density.ln()).abs() < 1e-10);
    }

    #[test]
    fn rejects_wrong_observation_size() {
        let p = policy(5);
        assert!(matches!(
            p.act(&[0.0; 2], &mut ChaCha8Rng::seed_from_u64(0), &[(0.0, 1.0); 2]),
            Err(RlError::ObservationSize { got: 2, expected: 3 })
        ));
    }

    #[test]
    fn non_finite_output_detected() {
        let mut p = policy(6);
        p.mean_net.params_mut()[0] = f64::NAN;
        assert!(matches!(p.mean(&[1.0, 1.0, 1.0]), Err(RlError::NonFiniteOutput)));
    }
}
