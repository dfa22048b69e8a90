use ndarray::Array2;

use super::lp::{lp_solve, Constraint, LinearProgram, LpSolution};
use super::{MarketError, MarketInstance, MarketOutcome};

/// Welfare-maximization program at fixed prices. Variable `b * R + r` is the
/// quantity of good `r` given to buyer `b`; the first `B` constraints are
/// budgets, the next `R` are supplies.
pub fn allocation_program(instance: &MarketInstance, prices: &[f64]) -> LinearProgram {
    let (nb, ng) = (instance.buyers(), instance.goods());
    let nvars = nb * ng;
    let objective = instance.valuations.iter().copied().collect();
    let mut constraints = Vec::with_capacity(nb + ng);
    for b in 0..nb {
        let mut row = vec![0.0; nvars];
        row[b * ng..(b + 1) * ng].copy_from_slice(prices);
        constraints.push(Constraint::le(row, instance.budgets[b]));
    }
    for r in 0..ng {
        let mut row = vec![0.0; nvars];
        for b in 0..nb {
            row[b * ng + r] = 1.0;
        }
        constraints.push(Constraint::le(row, instance.supplies[r]));
    }
    LinearProgram { objective, constraints }
}

/// Allocates supply to buyers at the given prices, maximizing total buyer
/// utility under per-buyer budgets.
pub fn allocate_at_prices(instance: &MarketInstance, prices: &[f64]) -> Result<MarketOutcome, MarketError> {
    allocate_with_duals(instance, prices).map(|(o, _)| o)
}

pub fn allocate_with_duals(
    instance: &MarketInstance,
    prices: &[f64],
) -> Result<(MarketOutcome, LpSolution), MarketError> {
    instance.validate()?;
    if prices.len() != instance.goods() {
        return Err(MarketError::InvalidInstance(format!(
            "{} prices for {} goods",
            prices.len(),
            instance.goods()
        )));
    }
    if prices.iter().any(|&p| !(p >= 0.0 && p.is_finite())) {
        return Err(MarketError::InvalidInstance("prices must be finite and non-negative".into()));
    }
    let lp = allocation_program(instance, prices);
    let sol = lp_solve(&lp)?;
    let allocation = Array2::from_shape_vec((instance.buyers(), instance.goods()), sol.x.clone())
        .expect("allocation shape");
    let buyer_utilities = instance.utilities(&allocation);
    Ok((
        MarketOutcome {
            prices: prices.to_vec(),
            allocation,
            buyer_utilities,
        },
        sol,
    ))
}
