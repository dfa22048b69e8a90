//! Episode orchestration: harvesters act, the fishery responds, buyers
//! arrive, prices are set, and everyone is paid.

mod config;
mod episode;
mod experiment;
mod metrics;

use ndarray::Array2;
use rand::Rng;
use thiserror::Error;

pub use config::{InterventionReference, PricingMode, ScenarioConfig, Scenario};
pub use episode::{EpisodeLog, HarvesterController, PriceSetter, StepRecord, Trial};
pub use experiment::{relative_difference, run_experiment, run_experiment_with, ExperimentResult, TrialSummary};
pub use metrics::EpisodeMetrics;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Fishery(#[from] crate::fishery::FisheryError),
    #[error(transparent)]
    Market(#[from] crate::market::MarketError),
    #[error(transparent)]
    Objective(#[from] crate::objectives::ObjectiveError),
    #[error(transparent)]
    Rl(#[from] crate::rl::RlError),
}

/// Independent random streams derived from the master seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum SeedPurpose {
    /// Buyer budgets and valuations; index = episode.
    Buyers = 1,
    /// Valuation obfuscation noise; index = episode.
    Obfuscation = 2,
    /// Network initialization, action sampling and minibatch shuffling;
    /// index = agent (harvesters `0..N`, policymaker `N`).
    Agent = 3,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// `splitmix64` chained over `(master, trial, index, purpose)`.
pub fn derive_seed(master: u64, trial: u64, index: u64, purpose: SeedPurpose) -> u64 {
    let mut h = splitmix64(master);
    for v in [trial, index, purpose as u64] {
        h = splitmix64(h ^ v);
    }
    h
}

/// Budgets (`B` draws) then valuations (`B x R`, buyer-major), all
/// `U[0, 1)`.
pub fn sample_buyers<R: Rng + ?Sized>(buyers: usize, resources: usize, rng: &mut R) -> (Vec<f64>, Array2<f64>) {
    let budgets = (0..buyers).map(|_| rng.random::<f64>()).collect();
    let valuations = Array2::from_shape_simple_fn((buyers, resources), || rng.random::<f64>());
    (budgets, valuations)
}

/// `N x R` skills: `specialty` where `n ≡ r (mod R)`, `base` elsewhere.
pub fn build_skills(harvesters: usize, resources: usize, base: f64, specialty: f64) -> Array2<f64> {
    Array2::from_shape_fn((harvesters, resources), |(n, r)| if n % resources == r { specialty } else { base })
}
