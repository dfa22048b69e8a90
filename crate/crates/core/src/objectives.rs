//! Policymaker objectives: fairness indices, sustainability, valuation
//! obfuscation, the composite reward, and per-step market waste metrics.

use ndarray::Array2;
use rand::distr::{Distribution, Open01};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObjectiveError {
    #[error("fairness index undefined for an all-zero vector")]
    AllZero,
    #[error("empty input vector")]
    Empty,
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("intervention weight is positive but no reference prices were given")]
    MissingReferencePrices,
    #[error("invalid obfuscation: {0}")]
    InvalidObfuscation(String),
    #[error("total supply is zero")]
    ZeroSupply,
    #[error("total budget is zero")]
    ZeroBudget,
}

fn check_nonzero(values: &[f64]) -> Result<f64, ObjectiveError> {
    if values.is_empty() {
        return Err(ObjectiveError::Empty);
    }
    let sum: f64 = values.iter().sum();
    if sum <= 0.0 {
        return Err(ObjectiveError::AllZero);
    }
    Ok(sum)
}

/// Jain index `(sum x)^2 / (N sum x^2)`; 1 means perfect equality.
pub fn jain(values: &[f64]) -> Result<f64, ObjectiveError> {
    let sum = check_nonzero(values)?;
    let sq: f64 = values.iter().map(|x| x * x).sum();
    Ok(sum * sum / (values.len() as f64 * sq))
}

/// Gini coefficient from the mean absolute pairwise difference; 0 means
/// perfect equality.
pub fn gini(values: &[f64]) -> Result<f64, ObjectiveError> {
    let sum = check_nonzero(values)?;
    let pairwise: f64 = values
        .iter()
        .map(|a| values.iter().map(|b| (a - b).abs()).sum::<f64>())
        .sum();
    Ok(pairwise / (2.0 * values.len() as f64 * sum))
}

/// Atkinson index with inequality aversion 1: one minus the ratio of the
/// geometric to the arithmetic mean.
pub fn atkinson(values: &[f64]) -> Result<f64, ObjectiveError> {
    let sum = check_nonzero(values)?;
    let n = values.len() as f64;
    if values.iter().any(|&x| x <= 0.0) {
        return Ok(1.0);
    }
    let log_mean = values.iter().map(|x| x.ln()).sum::<f64>() / n;
    Ok(1.0 - log_mean.exp() / (sum / n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FairnessIndex {
    #[default]
    Jain,
    Gini,
    Atkinson,
}

impl FairnessIndex {
    pub fn index(&self, values: &[f64]) -> Result<f64, ObjectiveError> {
        match self {
            FairnessIndex::Jain => jain(values),
            FairnessIndex::Gini => gini(values),
            FairnessIndex::Atkinson => atkinson(values),
        }
    }

    /// Index oriented so that larger is fairer and 1 is perfect equality.
    pub fn score(&self, values: &[f64]) -> Result<f64, ObjectiveError> {
        let clamped: Vec<f64> = values.iter().map(|v| v.max(0.0)).collect();
        let i = self.index(&clamped)?;
        Ok(match self {
            FairnessIndex::Jain => i,
            FairnessIndex::Gini | FairnessIndex::Atkinson => 1.0 - i,
        })
    }
}

/// Most negative shortfall of any stock below its equilibrium, or 0.
pub fn sustainability_term(stocks: &[f64], equilibrium_stocks: &[f64]) -> Result<f64, ObjectiveError> {
    if stocks.len() != equilibrium_stocks.len() {
        return Err(ObjectiveError::LengthMismatch(format!(
            "{} stocks vs {} equilibrium stocks",
            stocks.len(),
            equilibrium_stocks.len()
        )));
    }
    Ok(stocks
        .iter()
        .zip(equilibrium_stocks)
        .map(|(s, eq)| (s - eq).min(0.0))
        .fold(0.0, f64::min))
}

/// How buyer valuations are distorted before the policymaker sees them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObfuscationSpec {
    #[default]
    Identity,
    /// Midpoint of the enclosing bin among `k` equal-width bins of `[0, 1]`.
    Bins { k: u32 },
    /// Adds noise drawn from `U(0, y)`.
    UniformNoise { y: f64 },
}

impl ObfuscationSpec {
    pub fn validate(&self) -> Result<(), ObjectiveError> {
        match *self {
            ObfuscationSpec::Identity => Ok(()),
            ObfuscationSpec::Bins { k } if k >= 1 => Ok(()),
            ObfuscationSpec::Bins { k } => Err(ObjectiveError::InvalidObfuscation(format!("bin count {k}"))),
            ObfuscationSpec::UniformNoise { y } if y > 0.0 && y.is_finite() => Ok(()),
            ObfuscationSpec::UniformNoise { y } => {
                Err(ObjectiveError::InvalidObfuscation(format!("noise magnitude {y}")))
            }
        }
    }
}

fn bin_midpoint(v: f64, k: u32) -> f64 {
    let k = k as f64;
    // last bin is closed at 1
    let idx = (v * k).floor().clamp(0.0, k - 1.0);
    (idx + 0.5) / k
}

/// Applies the obfuscation to every valuation. Noise outputs are not clamped.
pub fn obfuscate<R: Rng + ?Sized>(
    valuations: &Array2<f64>,
    spec: &ObfuscationSpec,
    rng: &mut R,
) -> Result<Array2<f64>, ObjectiveError> {
    spec.validate()?;
    Ok(match *spec {
        ObfuscationSpec::Identity => valuations.clone(),
        ObfuscationSpec::Bins { k } => valuations.mapv(|v| bin_midpoint(v, k)),
        ObfuscationSpec::UniformNoise { y } => valuations.mapv(|v| {
            let u: f64 = Open01.sample(rng);
            v + y * u
        }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveWeights {
    pub harvesters: f64,
    pub buyers: f64,
    pub sustainability: f64,
    pub fairness: f64,
    pub intervention: f64,
}

impl Default for ObjectiveWeights {
    /// Every objective weighted 1, no intervention penalty.
    fn default() -> Self {
        Self {
            harvesters: 1.0,
            buyers: 1.0,
            sustainability: 1.0,
            fairness: 1.0,
            intervention: 0.0,
        }
    }
}

impl ObjectiveWeights {
    pub fn zero() -> Self {
        Self {
            harvesters: 0.0,
            buyers: 0.0,
            sustainability: 0.0,
            fairness: 0.0,
            intervention: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let all = [self.harvesters, self.buyers, self.sustainability, self.fairness, self.intervention];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(format!("weights must be finite and non-negative: {self:?}"));
        }
        Ok(())
    }
}

/// Everything the composite reward looks at for one step.
#[derive(Debug, Clone, Copy)]
pub struct RewardInputs<'a> {
    pub harvester_revenues: &'a [f64],
    pub buyer_utilities: &'a [f64],
    pub stocks: &'a [f64],
    pub equilibrium_stocks: &'a [f64],
    pub prices: &'a [f64],
    /// Prices the intervention term measures distance from.
    pub reference_prices: Option<&'a [f64]>,
    /// Score an all-zero side as perfectly equal instead of failing.
    pub all_zero_is_equal: bool,
}

/// Weighted components of the policymaker reward.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RewardBreakdown {
    pub harvester_welfare: f64,
    pub buyer_welfare: f64,
    pub sustainability: f64,
    pub fairness: f64,
    pub price_gap: f64,
    pub total: f64,
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Mean fairness score over harvester revenues and buyer utilities.
pub fn fairness_term(
    harvester_revenues: &[f64],
    buyer_utilities: &[f64],
    index: FairnessIndex,
    all_zero_is_equal: bool,
) -> Result<f64, ObjectiveError> {
    let side = |v: &[f64]| match index.score(v) {
        Err(ObjectiveError::AllZero) if all_zero_is_equal => Ok(1.0),
        other => other,
    };
    Ok(0.5 * (side(harvester_revenues)? + side(buyer_utilities)?))
}

/// `w_h mean(revenue) + w_b mean(utility) + w_s sustainability + w_f fairness
/// - w_i sum |p - p_ref|`.
pub fn policymaker_reward(
    inputs: &RewardInputs<'_>,
    weights: &ObjectiveWeights,
    fairness: FairnessIndex,
) -> Result<RewardBreakdown, ObjectiveError> {
    let harvester_welfare = mean(inputs.harvester_revenues);
    let buyer_welfare = mean(inputs.buyer_utilities);
    let sustainability = sustainability_term(inputs.stocks, inputs.equilibrium_stocks)?;
    let fair = if weights.fairness > 0.0 {
        fairness_term(inputs.harvester_revenues, inputs.buyer_utilities, fairness, inputs.all_zero_is_equal)?
    } else {
        0.0
    };
    let price_gap = match inputs.reference_prices {
        Some(reference) => {
            if reference.len() != inputs.prices.len() {
                return Err(ObjectiveError::LengthMismatch(format!(
                    "{} prices vs {} reference prices",
                    inputs.prices.len(),
                    reference.len()
                )));
            }
            inputs.prices.iter().zip(reference).map(|(p, q)| (p - q).abs()).sum()
        }
        None if weights.intervention > 0.0 => return Err(ObjectiveError::MissingReferencePrices),
        None => 0.0,
    };
    let total = weights.harvesters * harvester_welfare
        + weights.buyers * buyer_welfare
        + weights.sustainability * sustainability
        + weights.fairness * fair
        - weights.intervention * price_gap;
    Ok(RewardBreakdown {
        harvester_welfare,
        buyer_welfare,
        sustainability,
        fairness: fair,
        price_gap,
        total,
    })
}

/// Fraction of the total supply left unsold.
pub fn wasted_fraction(allocation: &Array2<f64>, supplies: &[f64]) -> Result<f64, ObjectiveError> {
    if allocation.ncols() != supplies.len() {
        return Err(ObjectiveError::LengthMismatch(format!(
            "{} goods in allocation vs {} supplies",
            allocation.ncols(),
            supplies.len()
        )));
    }
    let total: f64 = supplies.iter().sum();
    if total <= 0.0 {
        return Err(ObjectiveError::ZeroSupply);
    }
    let sold: f64 = allocation.sum();
    Ok(((total - sold) / total).clamp(0.0, 1.0))
}

/// Fraction of the total budget left unspent.
pub fn leftover_budget_fraction(
    allocation: &Array2<f64>,
    prices: &[f64],
    budgets: &[f64],
) -> Result<f64, ObjectiveError> {
    if allocation.ncols() != prices.len() || allocation.nrows() != budgets.len() {
        return Err(ObjectiveError::LengthMismatch(format!(
            "allocation {:?} vs {} prices and {} budgets",
            allocation.dim(),
            prices.len(),
            budgets.len()
        )));
    }
    let total: f64 = budgets.iter().sum();
    if total <= 0.0 {
        return Err(ObjectiveError::ZeroBudget);
    }
    let spent: f64 = allocation
        .outer_iter()
        .map(|row| row.iter().zip(prices).map(|(x, p)| x * p).sum::<f64>())
        .sum();
    Ok(((total - spent) / total).clamp(0.0, 1.0))
}
