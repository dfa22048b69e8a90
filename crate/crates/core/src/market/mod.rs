//! Linear Fisher market: equilibrium computation and welfare-maximizing
//! allocation at externally posted prices.

mod allocation;
mod equilibrium;
pub mod lp;

use ndarray::Array2;
use thiserror::Error;

pub use allocation::{allocate_at_prices, allocate_with_duals, allocation_program};
pub use equilibrium::{
    solve_equilibrium, verify_equilibrium, EquilibriumResiduals, DEFAULT_MAX_ITERATIONS,
    DEFAULT_TOLERANCE,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MarketError {
    #[error("invalid market instance: {0}")]
    InvalidInstance(String),
    #[error("equilibrium solver did not converge after {iterations} iterations (max bid change {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("buyer {buyer} has zero utility; objective is -infinity")]
    ZeroUtility { buyer: usize },
    #[error("buyer {buyer} values no good")]
    DegenerateBuyer { buyer: usize },
    #[error(transparent)]
    Lp(#[from] lp::LpError),
}

/// One time-step's buyers and supplies.
#[derive(Debug, Clone, PartialEq)]
pub struct MarketInstance {
    pub budgets: Vec<f64>,
    /// `B x R` per-unit valuations.
    pub valuations: Array2<f64>,
    pub supplies: Vec<f64>,
}

impl MarketInstance {
    pub fn new(budgets: Vec<f64>, valuations: Array2<f64>, supplies: Vec<f64>) -> Result<Self, MarketError> {
        let inst = Self { budgets, valuations, supplies };
        inst.validate()?;
        Ok(inst)
    }

    pub fn buyers(&self) -> usize {
        self.budgets.len()
    }

    pub fn goods(&self) -> usize {
        self.supplies.len()
    }

    pub fn validate(&self) -> Result<(), MarketError> {
        let (b, r) = self.valuations.dim();
        if b != self.budgets.len() || r != self.supplies.len() {
            return Err(MarketError::InvalidInstance(format!(
                "valuations are {b}x{r} but there are {} budgets and {} supplies",
                self.budgets.len(),
                self.supplies.len()
            )));
        }
        if self.budgets.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(MarketError::InvalidInstance("budgets must be finite and non-negative".into()));
        }
        if self.valuations.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(MarketError::InvalidInstance("valuations must be finite and non-negative".into()));
        }
        if self.supplies.iter().any(|&x| !(x >= 0.0 && x.is_finite())) {
            return Err(MarketError::InvalidInstance("supplies must be finite and non-negative".into()));
        }
        Ok(())
    }

    /// Linear utility of every buyer under `allocation`.
    pub fn utilities(&self, allocation: &Array2<f64>) -> Vec<f64> {
        self.valuations
            .outer_iter()
            .zip(allocation.outer_iter())
            .map(|(v, x)| v.dot(&x))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarketOutcome {
    pub prices: Vec<f64>,
    /// `B x R` quantities.
    pub allocation: Array2<f64>,
    pub buyer_utilities: Vec<f64>,
}

impl MarketOutcome {
    pub fn empty(instance: &MarketInstance) -> Self {
        Self {
            prices: vec![0.0; instance.goods()],
            allocation: Array2::zeros((instance.buyers(), instance.goods())),
            buyer_utilities: vec![0.0; instance.buyers()],
        }
    }

    /// Money spent by every buyer.
    pub fn spending(&self) -> Vec<f64> {
        self.allocation
            .outer_iter()
            .map(|row| row.iter().zip(&self.prices).map(|(x, p)| x * p).sum())
            .collect()
    }

    /// Quantity of every good sold.
    pub fn sold(&self) -> Vec<f64> {
        self.allocation.sum_axis(ndarray::Axis(0)).to_vec()
    }
}

/// Eisenberg-Gale objective `sum_b budget_b * log(u_b)`.
pub fn eg_objective(allocation: &Array2<f64>, instance: &MarketInstance) -> Result<f64, MarketError> {
    let mut total = 0.0;
    for (buyer, u) in instance.utilities(allocation).into_iter().enumerate() {
        if u <= 0.0 {
            return Err(MarketError::ZeroUtility { buyer });
        }
        total += instance.budgets[buyer] * u.ln();
    }
    Ok(total)
}

/// Sum of buyer utilities, the welfare the allocation program maximizes.
pub fn buyer_welfare(outcome: &MarketOutcome) -> f64 {
    outcome.buyer_utilities.iter().sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn eg_objective_values() {
        let inst = MarketInstance::new(vec![1.0, 1.0], array![[1.0], [1.0]], vec![2.5]).unwrap();
        assert_eq!(eg_objective(&array![[1.0], [1.0]], &inst).unwrap(), 0.0);
        assert!(eg_objective(&array![[2.0], [0.5]], &inst).unwrap().abs() < 1e-15);

        let single = MarketInstance::new(vec![2.0], array![[1.0]], vec![5.0]).unwrap();
        let e = std::f64::consts::E;
        assert!((eg_objective(&array![[e]], &single).unwrap() - 2.0).abs() < 1e-15);
    }

    #[test]
    fn eg_objective_zero_utility_is_distinct() {
        let inst = MarketInstance::new(vec![1.0, 1.0], array![[1.0], [1.0]], vec![1.0]).unwrap();
        assert_eq!(
            eg_objective(&array![[1.0], [0.0]], &inst),
            Err(MarketError::ZeroUtility { buyer: 1 })
        );
    }

    #[test]
    fn instance_validation() {
        assert!(MarketInstance::new(vec![1.0], array![[1.0, 2.0]], vec![1.0]).is_err());
        assert!(MarketInstance::new(vec![1.0], array![[-1.0]], vec![1.0]).is_err());
        assert!(MarketInstance::new(vec![f64::NAN], array![[1.0]], vec![1.0]).is_err());
    }
}
