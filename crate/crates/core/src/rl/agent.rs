use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::ppo::PolicyOptimizer;
use super::{gae, ppo_update, ActionSample, GaussianPolicy, PpoConfig, RlError, SampleBatch, UpdateDiagnostics};

/// One step of experience.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub observation: Vec<f64>,
    pub raw_action: Vec<f64>,
    pub mean: Vec<f64>,
    pub log_prob: f64,
    pub reward: f64,
    pub value: f64,
    pub done: bool,
}

impl Transition {
    pub fn new(observation: Vec<f64>, sample: &ActionSample, reward: f64, done: bool) -> Self {
        Self {
            observation,
            raw_action: sample.raw_action.clone(),
            mean: sample.mean.clone(),
            log_prob: sample.log_prob,
            reward,
            value: sample.value,
            done,
        }
    }
}

/// A single independent learner: its policy, optimizer state, private RNG
/// and on-policy buffer.
#[derive(Debug, Clone)]
pub struct PpoAgent {
    pub id: String,
    pub policy: GaussianPolicy,
    pub config: PpoConfig,
    pub bounds: Vec<(f64, f64)>,
    pub kl_coeff: f64,
    optimizer: PolicyOptimizer,
    rng: ChaCha8Rng,
    episode: Vec<Transition>,
    // finished segments: transitions plus advantages and value targets
    collected: Vec<(Transition, f64, f64)>,
    /// Data-generating log std; fixed between updates.
    behaviour_log_std: Vec<f64>,
    pub updates: usize,
}

impl PpoAgent {
    pub fn new(id: impl Into<String>, obs_dim: usize, bounds: Vec<(f64, f64)>, config: PpoConfig, seed: u64) -> Result<Self, RlError> {
        config.validate()?;
        for (lo, hi) in &bounds {
            if !(lo <= hi) {
                return Err(RlError::InvalidConfig(format!("action bound [{lo}, {hi}] is empty")));
            }
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let policy = GaussianPolicy::new(obs_dim, bounds.len(), &config, &mut rng);
        let optimizer = PolicyOptimizer::new(&policy, config.learning_rate);
        let behaviour_log_std = policy.log_std.clone();
        Ok(Self {
            id: id.into(),
            kl_coeff: config.kl_coeff_init,
            policy,
            config,
            bounds,
            optimizer,
            rng,
            episode: Vec::new(),
            collected: Vec::new(),
            behaviour_log_std,
            updates: 0,
        })
    }

    pub fn with_policy(mut self, policy: GaussianPolicy) -> Self {
        self.optimizer = PolicyOptimizer::new(&policy, self.config.learning_rate);
        self.behaviour_log_std = policy.log_std.clone();
        self.policy = policy;
        self
    }

    pub fn act(&mut self, observation: &[f64]) -> Result<ActionSample, RlError> {
        self.policy.act(observation, &mut self.rng, &self.bounds)
    }

    /// Deterministic action: the clipped mean.
    pub fn act_greedy(&self, observation: &[f64]) -> Result<Vec<f64>, RlError> {
        let mean = self.policy.mean(observation)?;
        Ok(mean.iter().zip(&self.bounds).map(|(m, (lo, hi))| m.clamp(*lo, *hi)).collect())
    }

    pub fn record(&mut self, transition: Transition) {
        self.episode.push(transition);
    }

    /// Closes the current trajectory. `next_observation` is used to bootstrap
    /// when the episode was truncated rather than terminated; pass `None`
    /// on a true terminal state.
    pub fn finish_episode(&mut self, next_observation: Option<&[f64]>) -> Result<(), RlError> {
        if self.episode.is_empty() {
            return Ok(());
        }
        let bootstrap = match next_observation {
            Some(obs) => self.policy.value(obs)?,
            None => 0.0,
        };
        let rewards: Vec<f64> = self.episode.iter().map(|t| t.reward).collect();
        let values: Vec<f64> = self.episode.iter().map(|t| t.value).collect();
        let (adv, targets) = gae(&rewards, &values, bootstrap, self.config.gamma, self.config.gae_lambda)?;
        for ((t, a), v) in self.episode.drain(..).zip(adv).zip(targets) {
            self.collected.push((t, a, v));
        }
        Ok(())
    }

    pub fn collected_steps(&self) -> usize {
        self.collected.len()
    }

    pub fn ready_to_train(&self) -> bool {
        self.collected.len() >= self.config.train_batch_size
    }

    fn take_batch(&mut self) -> SampleBatch {
        let n = self.collected.len();
        let od = self.policy.obs_dim();
        let ad = self.policy.action_dim();
        let mut observations = Array2::zeros((n, od));
        let mut actions = Array2::zeros((n, ad));
        let mut old_means = Array2::zeros((n, ad));
        let mut old_log_probs = Array1::zeros(n);
        let mut old_values = Array1::zeros(n);
        let mut advantages = Array1::zeros(n);
        let mut value_targets = Array1::zeros(n);
        for (i, (t, a, v)) in self.collected.drain(..).enumerate() {
            observations.row_mut(i).assign(&Array1::from(t.observation));
            actions.row_mut(i).assign(&Array1::from(t.raw_action));
            old_means.row_mut(i).assign(&Array1::from(t.mean));
            old_log_probs[i] = t.log_prob;
            old_values[i] = t.value;
            advantages[i] = a;
            value_targets[i] = v;
        }
        SampleBatch {
            observations,
            actions,
            old_means,
            old_log_std: self.behaviour_log_std.clone(),
            old_log_probs,
            old_values,
            advantages,
            value_targets,
        }
    }

    /// Trains on everything collected so far and clears the buffer.
    pub fn train(&mut self) -> Result<UpdateDiagnostics, RlError> {
        let batch = self.take_batch();
        let diag = ppo_update(&mut self.policy, &mut self.optimizer, &mut self.kl_coeff, &batch, &self.config, &mut self.rng)?;
        if !self.policy.all_finite() {
            return Err(RlError::NonFiniteOutput);
        }
        self.behaviour_log_std = self.policy.log_std.clone();
        self.updates += 1;
        Ok(diag)
    }

    /// Trains if enough steps have been collected.
    pub fn maybe_train(&mut self) -> Result<Option<UpdateDiagnostics>, RlError> {
        if self.ready_to_train() {
            self.train().map(Some)
        } else {
            Ok(None)
        }
    }
}
