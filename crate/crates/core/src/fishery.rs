//! Bio-economic dynamics of a multi-resource common fishery.
//!
//! Each resource has a stock that is harvested in proportion to a
//! stock-dependent catchability and the total effective effort applied to
//! it, and then regrows through a Ricker-type spawner-recruit map whose
//! fixed point is the equilibrium stock.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FisheryError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

/// Biological parameters of one resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResourceParams {
    pub equilibrium_stock: f64,
    pub growth_rate: f64,
    pub initial_stock: f64,
}

impl ResourceParams {
    /// Resource that starts at its equilibrium stock.
    pub fn at_equilibrium(equilibrium_stock: f64, growth_rate: f64) -> Result<Self, FisheryError> {
        Self::new(equilibrium_stock, growth_rate, equilibrium_stock)
    }

    pub fn new(
        equilibrium_stock: f64,
        growth_rate: f64,
        initial_stock: f64,
    ) -> Result<Self, FisheryError> {
        if !(equilibrium_stock > 0.0 && equilibrium_stock.is_finite()) {
            return Err(FisheryError::InvalidParameter(format!(
                "equilibrium stock must be positive, got {equilibrium_stock}"
            )));
        }
        if !(growth_rate > 0.0 && growth_rate.is_finite()) {
            return Err(FisheryError::InvalidParameter(format!(
                "growth rate must be positive, got {growth_rate}"
            )));
        }
        if !(initial_stock >= 0.0 && initial_stock.is_finite()) {
            return Err(FisheryError::InvalidParameter(format!(
                "initial stock must be non-negative, got {initial_stock}"
            )));
        }
        Ok(Self {
            equilibrium_stock,
            growth_rate,
            initial_stock,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceState {
    pub stocks: Vec<f64>,
    pub time_step: usize,
}

impl ResourceState {
    pub fn initial(params: &[ResourceParams]) -> Self {
        Self {
            stocks: params.iter().map(|p| p.initial_stock).collect(),
            time_step: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarvesterParams {
    /// Skill per resource, each in `[0, 1]`.
    pub skills: Vec<f64>,
    pub cost_per_step: f64,
}

impl HarvesterParams {
    pub fn new(skills: Vec<f64>, cost_per_step: f64) -> Result<Self, FisheryError> {
        if let Some(s) = skills.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(FisheryError::InvalidParameter(format!(
                "skill {s} outside [0, 1]"
            )));
        }
        if !(cost_per_step >= 0.0 && cost_per_step.is_finite()) {
            return Err(FisheryError::InvalidParameter(format!(
                "cost must be non-negative, got {cost_per_step}"
            )));
        }
        Ok(Self {
            skills,
            cost_per_step,
        })
    }
}

/// Result of one harvesting round, before regrowth.
#[derive(Debug, Clone, PartialEq)]
pub struct HarvestOutcome {
    /// `N x R` harvest per agent and resource.
    pub individual_harvest: Array2<f64>,
    pub total_harvest: Array1<f64>,
    /// `N x R` effort times skill.
    pub effective_efforts: Array2<f64>,
    pub total_efforts: Array1<f64>,
}

/// Stock-dependent catchability coefficient, saturating at 1 above twice the
/// equilibrium stock.
pub fn catchability(stock: f64, params: &ResourceParams) -> f64 {
    let cap = 2.0 * params.equilibrium_stock;
    if stock <= cap {
        stock / cap
    } else {
        1.0
    }
}

/// Total harvest from `total_effort` effective effort, capped at the stock.
pub fn total_harvest(total_effort: f64, stock: f64, params: &ResourceParams) -> f64 {
    let h = catchability(stock, params) * total_effort;
    if h <= stock {
        h
    } else {
        stock
    }
}

/// Ricker spawner-recruit map `x * exp(g * (1 - x / S_eq))`.
pub fn spawner_recruit(escapement: f64, params: &ResourceParams) -> f64 {
    escapement * (params.growth_rate * (1.0 - escapement / params.equilibrium_stock)).exp()
}

/// Constant `K` such that `S_eq = M_s * K * N` keeps a stock alive under full
/// effort when `M_s = 1`.
pub fn sustainability_constant(growth_rate: f64, max_effort: f64) -> f64 {
    let eg = growth_rate.exp();
    eg * max_effort / (2.0 * (eg - 1.0))
}

/// Equilibrium stock for `n_harvesters` at scarcity multiplier `scarcity`.
pub fn equilibrium_stock(scarcity: f64, n_harvesters: usize, growth_rate: f64, max_effort: f64) -> f64 {
    scarcity * sustainability_constant(growth_rate, max_effort) * n_harvesters as f64
}

/// Advances every resource by one harvest-and-regrow step.
pub fn step(
    state: &ResourceState,
    efforts: &Array2<f64>,
    harvesters: &[HarvesterParams],
    params: &[ResourceParams],
) -> Result<(ResourceState, HarvestOutcome), FisheryError> {
    let (n, r) = efforts.dim();
    if harvesters.len() != n {
        return Err(FisheryError::DimensionMismatch(format!(
            "effort matrix has {n} rows but {} harvesters were given",
            harvesters.len()
        )));
    }
    if params.len() != r || state.stocks.len() != r {
        return Err(FisheryError::DimensionMismatch(format!(
            "effort matrix has {r} columns, {} resource params, {} stocks",
            params.len(),
            state.stocks.len()
        )));
    }
    if let Some(h) = harvesters.iter().find(|h| h.skills.len() != r) {
        return Err(FisheryError::DimensionMismatch(format!(
            "harvester has {} skills, expected {r}",
            h.skills.len()
        )));
    }

    let effective = Array2::from_shape_fn((n, r), |(i, j)| efforts[[i, j]] * harvesters[i].skills[j]);
    let total_efforts = effective.sum_axis(ndarray::Axis(0));
    let mut individual = Array2::zeros((n, r));
    let mut totals = Array1::zeros(r);
    let mut next = Vec::with_capacity(r);

    for j in 0..r {
        let stock = state.stocks[j];
        let e_total = total_efforts[j];
        let harvest = total_harvest(e_total, stock, &params[j]);
        totals[j] = harvest;
        if e_total > 0.0 {
            for i in 0..n {
                individual[[i, j]] = effective[[i, j]] / e_total * harvest;
            }
        }
        let escapement = (stock - harvest).max(0.0);
        next.push(spawner_recruit(escapement, &params[j]));
    }

    Ok((
        ResourceState {
            stocks: next,
            time_step: state.time_step + 1,
        },
        HarvestOutcome {
            individual_harvest: individual,
            total_harvest: totals,
            effective_efforts: effective,
            total_efforts,
        },
    ))
}

/// Per-agent revenue summed over resources, with the per-step cost charged
/// once.
pub fn revenue(
    prices: &[f64],
    outcome: &HarvestOutcome,
    harvesters: &[HarvesterParams],
) -> Result<Vec<f64>, FisheryError> {
    let (n, r) = outcome.individual_harvest.dim();
    if prices.len() != r || harvesters.len() != n {
        return Err(FisheryError::DimensionMismatch(format!(
            "{} prices and {} harvesters for a {n}x{r} harvest",
            prices.len(),
            harvesters.len()
        )));
    }
    Ok(outcome
        .individual_harvest
        .outer_iter()
        .zip(harvesters)
        .map(|(row, h)| {
            row.iter().zip(prices).map(|(q, p)| q * p).sum::<f64>() - h.cost_per_step
        })
        .collect())
}

/// True when any stock has fallen strictly below `threshold`.
pub fn is_depleted(state: &ResourceState, threshold: f64) -> bool {
    state.stocks.iter().any(|&s| s < threshold)
}
