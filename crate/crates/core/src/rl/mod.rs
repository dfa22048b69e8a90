//! Independent-learner PPO over continuous actions.

mod agent;
mod checkpoint;
mod gae;
mod observation;
mod policy;
mod ppo;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use agent::{PpoAgent, Transition};
pub use checkpoint::{load_checkpoint, save_checkpoint, AgentManifest, CheckpointManifest};
pub use gae::gae;
pub use observation::{build_harvester_observation, build_policymaker_observation, policymaker_observation_len};
pub use policy::{gaussian_log_prob, ActionSample, Bounds, GaussianPolicy};
pub use ppo::{clipped_surrogate, minibatch_loss, ppo_update, LossOutput, PolicyOptimizer, SampleBatch, UpdateDiagnostics};

#[derive(Debug, Error)]
pub enum RlError {
    #[error("observation has {got} entries, policy expects {expected}")]
    ObservationSize { got: usize, expected: usize },
    #[error("non-finite policy output; training has diverged")]
    NonFiniteOutput,
    #[error("non-finite loss in epoch {epoch}, minibatch {minibatch}; update aborted")]
    NonFiniteLoss { epoch: usize, minibatch: usize },
    #[error("batch of {got} samples is smaller than one minibatch of {needed}")]
    BatchTooSmall { got: usize, needed: usize },
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("invalid PPO configuration: {0}")]
    InvalidConfig(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Nn(#[from] crate::nn::NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// PPO hyper-parameters. Defaults follow the standard RLlib PPO settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PpoConfig {
    pub learning_rate: f64,
    pub clip_param: f64,
    pub vf_clip_param: f64,
    pub kl_target: f64,
    pub kl_coeff_init: f64,
    pub gamma: f64,
    pub gae_lambda: f64,
    pub vf_loss_coeff: f64,
    pub entropy_coeff: f64,
    pub train_batch_size: usize,
    pub minibatch_size: usize,
    pub sgd_iterations: usize,
    pub initial_log_std: f64,
}

impl Default for PpoConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-4,
            clip_param: 0.3,
            vf_clip_param: 10.0,
            kl_target: 0.01,
            kl_coeff_init: 0.2,
            gamma: 0.99,
            gae_lambda: 1.0,
            vf_loss_coeff: 1.0,
            entropy_coeff: 0.0,
            train_batch_size: 4000,
            minibatch_size: 128,
            sgd_iterations: 30,
            initial_log_std: 0.0,
        }
    }
}

impl PpoConfig {
    pub fn validate(&self) -> Result<(), RlError> {
        let bad = |m: &str| Err(RlError::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad("gamma must be in (0, 1]");
        }
        if !(0.0..=1.0).contains(&self.gae_lambda) {
            return bad("gae_lambda must be in [0, 1]");
        }
        if !(self.clip_param > 0.0) {
            return bad("clip_param must be positive");
        }
        if !(self.learning_rate > 0.0) || !(self.vf_clip_param > 0.0) || !(self.kl_target > 0.0) {
            return bad("learning_rate, vf_clip_param and kl_target must be positive");
        }
        if self.kl_coeff_init < 0.0 || self.vf_loss_coeff < 0.0 || self.entropy_coeff < 0.0 {
            return bad("loss coefficients must be non-negative");
        }
        if self.train_batch_size == 0 || self.minibatch_size == 0 || self.sgd_iterations == 0 {
            return bad("batch sizes and SGD iterations must be positive");
        }
        Ok(())
    }
}
