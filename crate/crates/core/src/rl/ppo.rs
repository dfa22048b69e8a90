use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::Rng;

use super::{GaussianPolicy, PpoConfig, RlError};
use crate::nn::AdamState;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Flattened on-policy samples for one update.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub observations: Array2<f64>,
    pub actions: Array2<f64>,
    /// Action means of the policy that generated the data.
    pub old_means: Array2<f64>,
    pub old_log_std: Vec<f64>,
    pub old_log_probs: Array1<f64>,
    /// Value predictions recorded when the data was collected.
    pub old_values: Array1<f64>,
    pub advantages: Array1<f64>,
    pub value_targets: Array1<f64>,
}

impl SampleBatch {
    pub fn len(&self) -> usize {
        self.observations.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy with advantages shifted to mean 0 and scaled to unit standard
    /// deviation.
    pub fn with_normalized_advantages(&self) -> Self {
        let mut out = self.clone();
        if out.is_empty() {
            return out;
        }
        let mean = out.advantages.mean().unwrap_or(0.0);
        let std = out.advantages.std(0.0);
        out.advantages.mapv_inplace(|a| (a - mean) / (std + 1e-8));
        out
    }

    fn select(&self, idx: &[usize]) -> Self {
        Self {
            observations: self.observations.select(Axis(0), idx),
            actions: self.actions.select(Axis(0), idx),
            old_means: self.old_means.select(Axis(0), idx),
            old_log_std: self.old_log_std.clone(),
            old_log_probs: self.old_log_probs.select(Axis(0), idx),
            old_values: self.old_values.select(Axis(0), idx),
            advantages: self.advantages.select(Axis(0), idx),
            value_targets: self.value_targets.select(Axis(0), idx),
        }
    }
}

/// `min(r·A, clip(r, 1−ε, 1+ε)·A)`.
pub fn clipped_surrogate(ratio: f64, advantage: f64, clip: f64) -> f64 {
    (ratio * advantage).min(ratio.clamp(1.0 - clip, 1.0 + clip) * advantage)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub kl: f64,
    pub entropy: f64,
    pub mean_grad: Vec<f64>,
    pub value_grad: Vec<f64>,
    pub log_std_grad: Vec<f64>,
    pub ratios: Vec<f64>,
    pub clip_fraction: f64,
}

/// Total loss on a minibatch and its gradients with respect to every
/// parameter group:
/// `mean(−surrogate + kl_coeff·KL(old‖new) + vf_coeff·vf − ent_coeff·H)` where
/// `vf = max((V−T)², (V_old + clip(V−V_old, ±vf_clip) − T)²)`.
pub fn minibatch_loss(policy: &GaussianPolicy, batch: &SampleBatch, kl_coeff: f64, config: &PpoConfig) -> Result<LossOutput, RlError> {
    let n = batch.len();
    let d = policy.action_dim();
    if n == 0 {
        return Err(RlError::BatchTooSmall { got: 0, needed: 1 });
    }
    if batch.actions.ncols() != d || batch.old_log_std.len() != d || batch.old_means.ncols() != d {
        return Err(RlError::LengthMismatch("batch action dimension differs from policy".into()));
    }
    let inv_n = 1.0 / n as f64;
    let mean_cache = policy.mean_net.forward_batch(batch.observations.view())?;
    let value_cache = policy.value_net.forward_batch(batch.observations.view())?;
    let mu = &mean_cache.output;
    let values = value_cache.output.column(0);

    let sigma: Vec<f64> = policy.log_std.iter().map(|l| l.exp()).collect();
    let var_old: Vec<f64> = batch.old_log_std.iter().map(|l| (2.0 * l).exp()).collect();

    let mut d_mu = Array2::<f64>::zeros((n, d));
    let mut d_v = Array2::<f64>::zeros((n, 1));
    let mut d_log_std = vec![0.0; d];
    let (mut policy_loss, mut value_loss, mut kl_sum) = (0.0, 0.0, 0.0);
    let mut ratios = Vec::with_capacity(n);
    let mut clipped = 0usize;

    for i in 0..n {
        let mut logp = 0.0;
        for k in 0..d {
            let z = (batch.actions[[i, k]] - mu[[i, k]]) / sigma[k];
            logp += -0.5 * z * z - policy.log_std[k] - 0.5 * LN_2PI;
        }
        let ratio = (logp - batch.old_log_probs[i]).exp();
        ratios.push(ratio);
        let adv = batch.advantages[i];
        let unclipped = ratio * adv;
        let bounded = ratio.clamp(1.0 - config.clip_param, 1.0 + config.clip_param) * adv;
        if (ratio - 1.0).abs() > config.clip_param {
            clipped += 1;
        }
        // derivative of the surrogate with respect to the ratio
        let ds_dr = if unclipped <= bounded { adv } else { 0.0 };
        policy_loss -= unclipped.min(bounded);
        let coef = -ds_dr * ratio; // d(-s)/d(logp)

        for k in 0..d {
            let diff = batch.actions[[i, k]] - mu[[i, k]];
            let var = sigma[k] * sigma[k];
            let dmean = batch.old_means[[i, k]] - mu[[i, k]];
            kl_sum += policy.log_std[k] - batch.old_log_std[k] + (var_old[k] + dmean * dmean) / (2.0 * var) - 0.5;
            d_mu[[i, k]] = (coef * diff / var + kl_coeff * (-dmean) / var) * inv_n;
            d_log_std[k] += (coef * (diff * diff / var - 1.0) + kl_coeff * (1.0 - (var_old[k] + dmean * dmean) / var)) * inv_n;
        }

        let target = batch.value_targets[i];
        let v_old = batch.old_values[i];
        let err = values[i] - target;
        let unclipped_sq = err * err;
        let shift = values[i] - v_old;
        let clip_active = shift.abs() > config.vf_clip_param;
        let clipped_sq = (v_old + shift.clamp(-config.vf_clip_param, config.vf_clip_param) - target).powi(2);
        if !clip_active || unclipped_sq >= clipped_sq {
            value_loss += unclipped_sq;
            d_v[[i, 0]] = config.vf_loss_coeff * 2.0 * err * inv_n;
        } else {
            // NaN lands here too and propagates
            value_loss += clipped_sq;
        }
    }
    let entropy: f64 = policy.log_std.iter().map(|l| l + 0.5 * (LN_2PI + 1.0)).sum();
    for g in &mut d_log_std {
        *g -= config.entropy_coeff;
    }

    let policy_loss = policy_loss * inv_n;
    let value_loss = value_loss * inv_n;
    let kl = kl_sum * inv_n;
    let loss = policy_loss + kl_coeff * kl + config.vf_loss_coeff * value_loss - config.entropy_coeff * entropy;

    let mean_grad = policy.mean_net.backward(&mean_cache, d_mu.view())?;
    let value_grad = policy.value_net.backward(&value_cache, d_v.view())?;
    Ok(LossOutput {
        loss,
        policy_loss,
        value_loss,
        kl,
        entropy,
        mean_grad,
        value_grad,
        log_std_grad: d_log_std,
        ratios,
        clip_fraction: clipped as f64 / n as f64,
    })
}

/// Adam state for each parameter group of a [`GaussianPolicy`].
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyOptimizer {
    pub mean: AdamState,
    pub value: AdamState,
    pub log_std: AdamState,
}

impl PolicyOptimizer {
    pub fn new(policy: &GaussianPolicy, learning_rate: f64) -> Self {
        Self {
            mean: AdamState::new(policy.mean_net.params().len(), learning_rate),
            value: AdamState::new(policy.value_net.params().len(), learning_rate),
            log_std: AdamState::new(policy.log_std.len(), learning_rate),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UpdateDiagnostics {
    /// KL between the data-generating policy and the updated one over the
    /// whole batch.
    pub mean_kl: f64,
    /// Clip fraction averaged over all minibatches.
    pub clip_fraction: f64,
    pub value_loss: f64,
    pub policy_loss: f64,
    pub kl_coeff: f64,
    pub first_minibatch_max_ratio_deviation: f64,
    pub first_minibatch_clip_fraction: f64,
    pub minibatches: usize,
}

/// Runs `sgd_iterations` epochs of shuffled minibatch Adam steps on the
/// batch, then adapts `kl_coeff`. On a non-finite loss the policy and
/// optimizer are restored to their state before the call.
pub fn ppo_update<R: Rng + ?Sized>(
    policy: &mut GaussianPolicy,
    optimizer: &mut PolicyOptimizer,
    kl_coeff: &mut f64,
    batch: &SampleBatch,
    config: &PpoConfig,
    rng: &mut R,
) -> Result<UpdateDiagnostics, RlError> {
    if batch.len() < config.minibatch_size {
        return Err(RlError::BatchTooSmall { got: batch.len(), needed: config.minibatch_size });
    }
    let batch = batch.with_normalized_advantages();
    let saved = (policy.clone(), optimizer.clone());
    let mut order: Vec<usize> = (0..batch.len()).collect();
    let (mut clip_sum, mut value_sum, mut policy_sum) = (0.0, 0.0, 0.0);
    let mut count = 0usize;
    let mut first = None;

    for epoch in 0..config.sgd_iterations {
        order.shuffle(rng);
        for (mb, idx) in order.chunks(config.minibatch_size).enumerate() {
            let minibatch = batch.select(idx);
            let out = minibatch_loss(policy, &minibatch, *kl_coeff, config)?;
            let grads_finite = out.mean_grad.iter().chain(&out.value_grad).chain(&out.log_std_grad).all(|g| g.is_finite());
            if !out.loss.is_finite() || !grads_finite {
                *policy = saved.0;
                *optimizer = saved.1;
                return Err(RlError::NonFiniteLoss { epoch, minibatch: mb });
            }
            if first.is_none() {
                let dev = out.ratios.iter().map(|r| (r - 1.0).abs()).fold(0.0, f64::max);
                first = Some((dev, out.clip_fraction));
            }
            clip_sum += out.clip_fraction;
            value_sum += out.value_loss;
            policy_sum += out.policy_loss;
            count += 1;
            optimizer.mean.step(policy.mean_net.params_mut(), &out.mean_grad);
            optimizer.value.step(policy.value_net.params_mut(), &out.value_grad);
            optimizer.log_std.step(&mut policy.log_std, &out.log_std_grad);
        }
    }

    let mean_kl = minibatch_loss(policy, &batch, 0.0, config)?.kl;
    if mean_kl > 2.0 * config.kl_target {
        *kl_coeff *= 1.5;
    } else if mean_kl < 0.5 * config.kl_target {
        *kl_coeff *= 0.5;
    }
    let (dev, clip0) = first.unwrap_or((0.0, 0.0));
    Ok(UpdateDiagnostics {
        mean_kl,
        clip_fraction: clip_sum / count as f64,
        value_loss: value_sum / count as f64,
        policy_loss: policy_sum / count as f64,
        kl_coeff: *kl_coeff,
        first_minibatch_max_ratio_deviation: dev,
        first_minibatch_clip_fraction: clip0,
        minibatches: count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rl::gaussian_log_prob;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Uniform};

    pub(crate) fn random_batch(policy: &GaussianPolicy, n: usize, seed: u64) -> SampleBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = Uniform::new(-1.0, 1.0).unwrap();
        let (od, ad) = (policy.obs_dim(), policy.action_dim());
        let observations = Array2::from_shape_fn((n, od), |_| u.sample(&mut rng));
        let mut actions = Array2::zeros((n, ad));
        let mut old_means = Array2::zeros((n, ad));
        let mut old_log_probs = Array1::zeros(n);
        let mut old_values = Array1::zeros(n);
        for i in 0..n {
            let obs = observations.row(i).to_vec();
            let s = policy.act(&obs, &mut rng, &vec![(-5.0, 5.0); ad]).unwrap();
            for k in 0..ad {
                actions[[i, k]] = s.raw_action[k];
                old_means[[i, k]] = s.mean[k];
            }
            old_log_probs[i] = s.log_prob;
            old_values[i] = s.value;
        }
        SampleBatch {
            observations,
            actions,
            old_means,
            old_log_std: policy.log_std.clone(),
            old_log_probs,
            old_values,
            advantages: Array1::from_shape_fn(n, |_| 2.0 * u.sample(&mut rng) + 0.3),
            value_targets: Array1::from_shape_fn(n, |_| 2.0 * u.sample(&mut rng)),
        }
    }

    #[test]
    fn surrogate_clips_large_ratio() {
        assert!((clipped_surrogate(2.0, 1.5, 0.3) - 1.3 * 1.5).abs() < 1e-15);
        assert_eq!(clipped_surrogate(2.0, -1.0, 0.3), -2.0);
        assert!((clipped_surrogate(0.5, -1.0, 0.3) + 0.7).abs() < 1e-15);
        assert_eq!(clipped_surrogate(1.1, 2.0, 0.3), 2.2);
    }

    #[test]
    fn first_minibatch_ratios_are_one() {
        let policy = GaussianPolicy::new(4, 2, &PpoConfig::default(), &mut ChaCha8Rng::seed_from_u64(9));
        let batch = random_batch(&policy, 64, 10);
        let out = minibatch_loss(&policy, &batch, 0.2, &PpoConfig::default()).unwrap();
        assert!(out.ratios.iter().all(|r| (r - 1.0).abs() < 1e-12));
        assert_eq!(out.clip_fraction, 0.0);
        assert!(out.kl.abs() < 1e-12);
    }

    fn perturbed(seed: u64) -> (GaussianPolicy, SampleBatch) {
        let config = PpoConfig::default();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut policy = GaussianPolicy::new(3, 2, &config, &mut rng);
        let batch = random_batch(&policy, 12, seed + 100);
        // move away from the data-generating policy so every term is active
        let u = Uniform::new(-0.05, 0.05).unwrap();
        for p in policy.mean_net.params_mut() {
            *p += u.sample(&mut rng);
        }
        for p in policy.value_net.params_mut() {
            *p += u.sample(&mut rng);
        }
        policy.log_std = vec![-0.1, 0.15];
        (policy, batch)
    }

    fn total_loss(policy: &GaussianPolicy, batch: &SampleBatch, config: &PpoConfig) -> f64 {
        // independent evaluation straight from the definitions
        let n = batch.len();
        let mut sum = 0.0;
        for i in 0..n {
            let obs = batch.observations.row(i).to_vec();
            let mu = policy.mean_net.forward(&obs).unwrap();
            let a = batch.actions.row(i).to_vec();
            let ratio = (gaussian_log_prob(&mu, &policy.log_std, &a) - batch.old_log_probs[i]).exp();
            let s = clipped_surrogate(ratio, batch.advantages[i], config.clip_param);
            let mut kl = 0.0;
            for k in 0..mu.len() {
                let (so, sn) = (batch.old_log_std[k].exp(), policy.log_std[k].exp());
                let dm = batch.old_means[[i, k]] - mu[k];
                kl += (sn / so).ln() + (so * so + dm * dm) / (2.0 * sn * sn) - 0.5;
            }
            let v = policy.value_net.forward(&obs).unwrap()[0];
            let (t, vo) = (batch.value_targets[i], batch.old_values[i]);
            let vc = vo + (v - vo).clamp(-config.vf_clip_param, config.vf_clip_param);
            let vf = (v - t).powi(2).max((vc - t).powi(2));
            let ent: f64 = policy.log_std.iter().map(|l| l + 0.5 * (LN_2PI + 1.0)).sum();
            sum += -s + 0.2 * kl + config.vf_loss_coeff * vf - config.entropy_coeff * ent;
        }
        sum / n as f64
    }

    #[test]
    fn loss_gradient_matches_finite_differences() {
        for seed in 0..6 {
            // odd seeds use a tight value clip so the clipped branch is exercised
            let vf_clip_param = if seed % 2 == 0 { 10.0 } else { 0.01 };
            let config = PpoConfig { entropy_coeff: 0.01, vf_clip_param, ..PpoConfig::default() };
            let (policy, batch) = perturbed(seed);
            let out = minibatch_loss(&policy, &batch, 0.2, &config).unwrap();
            assert!((out.loss - total_loss(&policy, &batch, &config)).abs() < 1e-10);
            let h = 1e-6;
            let mut worst: f64 = 0.0;
            let mut check = |analytic: f64, plus: GaussianPolicy, minus: GaussianPolicy| {
                let fd = (total_loss(&plus, &batch, &config) - total_loss(&minus, &batch, &config)) / (2.0 * h);
                let rel = (analytic - fd).abs() / fd.abs().max(analytic.abs()).max(1e-4);
                worst = worst.max(rel);
            };
            for j in (0..policy.mean_net.params().len()).step_by(7) {
                let (mut p, mut m) = (policy.clone(), policy.clone());
                p.mean_net.params_mut()[j] += h;
                m.mean_net.params_mut()[j] -= h;
                check(out.mean_grad[j], p, m);
            }
            for j in (0..policy.value_net.params().len()).step_by(7) {
                let (mut p, mut m) = (policy.clone(), policy.clone());
                p.value_net.params_mut()[j] += h;
                m.value_net.params_mut()[j] -= h;
                check(out.value_grad[j], p, m);
            }
            for k in 0..2 {
                let (mut p, mut m) = (policy.clone(), policy.clone());
                p.log_std[k] += h;
                m.log_std[k] -= h;
                check(out.log_std_grad[k], p, m);
            }
            assert!(worst < 1e-3, "seed {seed}: relative error {worst}");
        }
    }

    #[test]
    fn normalized_advantages_give_parallel_gradient() {
        let config = PpoConfig { vf_loss_coeff: 0.0, ..PpoConfig::default() };
        let policy = GaussianPolicy::new(4, 2, &config, &mut ChaCha8Rng::seed_from_u64(21));
        let mut batch = random_batch(&policy, 256, 22);
        let mean = batch.advantages.mean().unwrap();
        batch.advantages.mapv_inplace(|a| 3.0 * (a - mean));
        let raw = minibatch_loss(&policy, &batch, 0.2, &config).unwrap();
        let norm = minibatch_loss(&policy, &batch.with_normalized_advantages(), 0.2, &config).unwrap();
        let flat = |o: &LossOutput| o.mean_grad.iter().chain(&o.log_std_grad).copied().collect::<Vec<_>>();
        let (a, b) = (flat(&raw), flat(&norm));
        let dot: f64 = a.iter().zip(&b).map(|(x, y)| x * y).sum();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot / (na * nb) > 0.999);
    }

    #[test]
    fn normalization_gives_zero_mean_unit_std() {
        let policy = GaussianPolicy::new(2, 1, &PpoConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
        let b = random_batch(&policy, 50, 2).with_normalized_advantages();
        assert!(b.advantages.mean().unwrap().abs() < 1e-12);
        assert!((b.advantages.std(0.0) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn update_reports_first_minibatch_and_adapts_kl() {
        let config = PpoConfig { minibatch_size: 32, sgd_iterations: 3, learning_rate: 1e-3, ..PpoConfig::default() };
        let mut policy = GaussianPolicy::new(3, 1, &config, &mut ChaCha8Rng::seed_from_u64(3));
        let batch = random_batch(&policy, 100, 4);
        let mut opt = PolicyOptimizer::new(&policy, config.learning_rate);
        let mut kl = 0.2;
        let before = policy.clone();
        let d = ppo_update(&mut policy, &mut opt, &mut kl, &batch, &config, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert!(d.first_minibatch_max_ratio_deviation < 1e-12);
        assert_eq!(d.first_minibatch_clip_fraction, 0.0);
        assert_eq!(d.minibatches, 3 * 4);
        assert_ne!(policy, before);
        let expected = if d.mean_kl > 0.02 { 0.3 } else if d.mean_kl < 0.005 { 0.1 } else { 0.2 };
        assert!((kl - expected).abs() < 1e-15);
    }

    #[test]
    fn update_rejects_small_batch() {
        let config = PpoConfig::default();
        let mut policy = GaussianPolicy::new(3, 1, &config, &mut ChaCha8Rng::seed_from_u64(3));
        let batch = random_batch(&policy, 10, 4);
        let mut opt = PolicyOptimizer::new(&policy, 1e-4);
        let r = ppo_update(&mut policy, &mut opt, &mut 0.2, &batch, &config, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(matches!(r, Err(RlError::BatchTooSmall { got: 10, needed: 128 })));
    }

    #[test]
    fn non_finite_loss_restores_policy() {
        let config = PpoConfig { minibatch_size: 8, sgd_iterations: 1, ..PpoConfig::default() };
        let mut policy = GaussianPolicy::new(3, 1, &config, &mut ChaCha8Rng::seed_from_u64(3));
        let mut batch = random_batch(&policy, 16, 4);
        batch.value_targets[3] = f64::NAN;
        let before = policy.clone();
        let mut opt = PolicyOptimizer::new(&policy, 1e-4);
        let r = ppo_update(&mut policy, &mut opt, &mut 0.2, &batch, &config, &mut ChaCha8Rng::seed_from_u64(5));
        assert!(matches!(r, Err(RlError::NonFiniteLoss { epoch: 0, .. })));
        assert_eq!(policy, before);
    }
}
