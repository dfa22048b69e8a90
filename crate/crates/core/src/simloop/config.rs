use serde::{Deserialize, Serialize};

use super::SimError;
use crate::fishery::equilibrium_stock;
use crate::objectives::{FairnessIndex, ObfuscationSpec, ObjectiveWeights};
use crate::rl::PpoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum PricingMode {
    #[default]
    MarketEquilibrium,
    Policymaker,
    /// Constant prices from `fixed_prices`.
    Fixed,
}

/// Prices the intervention term is measured against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum InterventionReference {
    /// Market-equilibrium prices for the same step.
    #[default]
    Equilibrium,
    /// The prices posted in the previous step.
    PreviousStep,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    Plentiful,
    Scarce,
}

impl Scenario {
    pub fn scarcity(self) -> f64 {
        match self {
            Scenario::Plentiful => 0.8,
            Scenario::Scarce => 0.45,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub harvesters: usize,
    pub resources: usize,
    pub buyers: usize,
    /// Multiplier `M_s` on the equilibrium stock.
    pub scarcity: f64,
    pub growth_rate: f64,
    pub max_effort: f64,
    pub max_steps: usize,
    pub depletion_threshold: f64,
    pub base_skill: f64,
    pub specialty_skill: f64,
    pub harvest_cost: f64,
    pub pricing_mode: PricingMode,
    pub fixed_prices: Vec<f64>,
    pub max_price: f64,
    pub fairness: FairnessIndex,
    pub intervention_reference: InterventionReference,
    /// Compute reference prices every policymaker step even when the
    /// intervention weight is zero, so the price gap can be reported.
    pub track_reference_prices: bool,
    /// When false agents act but never update.
    pub learning: bool,
    pub episodes: usize,
    pub trials: usize,
    pub seed: u64,
    /// Trailing episodes averaged in trial summaries.
    pub summary_window: usize,
    pub market_tolerance: f64,
    pub market_max_iterations: usize,
    pub weights: ObjectiveWeights,
    pub obfuscation: ObfuscationSpec,
    pub ppo: PpoConfig,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            harvesters: 8,
            resources: 4,
            buyers: 8,
            scarcity: 0.8,
            growth_rate: 1.0,
            max_effort: 1.0,
            max_steps: 500,
            depletion_threshold: 1e-4,
            base_skill: 0.5,
            specialty_skill: 1.0,
            harvest_cost: 0.0,
            pricing_mode: PricingMode::MarketEquilibrium,
            fixed_prices: Vec::new(),
            max_price: 10.0,
            fairness: FairnessIndex::Jain,
            intervention_reference: InterventionReference::Equilibrium,
            track_reference_prices: true,
            learning: true,
            episodes: 2400,
            trials: 8,
            seed: 0,
            summary_window: 400,
            market_tolerance: crate::market::DEFAULT_TOLERANCE,
            market_max_iterations: crate::market::DEFAULT_MAX_ITERATIONS,
            weights: ObjectiveWeights::default(),
            obfuscation: ObfuscationSpec::Identity,
            ppo: PpoConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn scenario(scenario: Scenario) -> Self {
        Self { scarcity: scenario.scarcity(), ..Self::default() }
    }

    /// `S_eq = M_s K N`, shared by every resource.
    pub fn equilibrium_stock(&self) -> f64 {
        equilibrium_stock(self.scarcity, self.harvesters, self.growth_rate, self.max_effort)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.harvesters == 0 || self.resources == 0 || self.buyers == 0 {
            return bad("harvesters, resources and buyers must all be at least 1".into());
        }
        let positive = [
            ("scarcity", self.scarcity),
            ("growth_rate", self.growth_rate),
            ("max_effort", self.max_effort),
            ("depletion_threshold", self.depletion_threshold),
            ("max_price", self.max_price),
            ("market_tolerance", self.market_tolerance),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.seed > i64::MAX as u64 {
            return bad(format!("seed must be below 2^63 so it can be stored in a config file, got {}", self.seed));
        }
        if self.max_steps == 0 || self.trials == 0 || self.summary_window == 0 || self.market_max_iterations == 0 {
            return bad("max_steps, trials, summary_window and market_max_iterations must be positive".into());
        }
        for (name, v) in [("base_skill", self.base_skill), ("specialty_skill", self.specialty_skill)] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        if !(self.harvest_cost >= 0.0 && self.harvest_cost.is_finite()) {
            return bad(format!("harvest_cost must be non-negative, got {}", self.harvest_cost));
        }
        if self.pricing_mode == PricingMode::Fixed {
            if self.fixed_prices.len() != self.resources {
                return bad(format!("{} fixed prices for {} resources", self.fixed_prices.len(), self.resources));
            }
            if self.fixed_prices.iter().any(|p| !(*p >= 0.0 && p.is_finite())) {
                return bad("fixed prices must be finite and non-negative".into());
            }
        }
        self.weights.validate().map_err(SimError::Config)?;
        self.obfuscation.validate()?;
        self.ppo.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        ScenarioConfig::default().validate().unwrap();
        let c = ScenarioConfig::scenario(Scenario::Scarce);
        assert_eq!(c.scarcity, 0.45);
        assert!((c.equilibrium_stock() - 0.45 * 8.0 * 0.790_988_2).abs() < 1e-6);
    }

    #[test]
    fn toml_round_trip_and_partial_files() {
        let c = ScenarioConfig { pricing_mode: PricingMode::Policymaker, obfuscation: ObfuscationSpec::Bins { k: 5 }, ..Default::default() };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(toml::from_str::<ScenarioConfig>(&text).unwrap(), c);
        let partial: ScenarioConfig = toml::from_str("harvesters = 4\n[ppo]\nsgd_iterations = 5\n").unwrap();
        assert_eq!(partial.harvesters, 4);
        assert_eq!(partial.ppo.sgd_iterations, 5);
        assert_eq!(partial.ppo.clip_param, 0.3);
        assert!(toml::from_str::<ScenarioConfig>("harvestrs = 4").is_err());
        assert!(toml::from_str::<ScenarioConfig>("[ppo]\nclip = 0.2\n").is_err());
        assert!(toml::from_str::<ScenarioConfig>("[weights]\nsustain = 2.0\n").is_err());
        let partial: ScenarioConfig = toml::from_str("[weights]\nintervention = 100.0\n").unwrap();
        assert_eq!(partial.weights, ObjectiveWeights { intervention: 100.0, ..ObjectiveWeights::default() });
    }

    #[test]
    fn shipped_configs_parse() {
        let default: ScenarioConfig = toml::from_str(include_str!("../../../../configs/default.toml")).unwrap();
        assert_eq!(default, ScenarioConfig::default());
        let small: ScenarioConfig = toml::from_str(include_str!("../../../../configs/scarce_small.toml")).unwrap();
        small.validate().unwrap();
        assert_eq!(small.scarcity, Scenario::Scarce.scarcity());
    }

    #[test]
    fn rejects_invalid() {
        for c in [
            ScenarioConfig { resources: 0, ..Default::default() },
            ScenarioConfig { scarcity: 0.0, ..Default::default() },
            ScenarioConfig { max_steps: 0, ..Default::default() },
            ScenarioConfig { pricing_mode: PricingMode::Fixed, ..Default::default() },
        ] {
            assert!(c.validate().is_err());
        }
    }
}
