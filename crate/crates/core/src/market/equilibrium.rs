//! Market equilibrium of a linear Fisher market via proportional-response
//! bid dynamics.
//!
//! Every buyer splits its budget into bids on goods; a good's price is the
//! money bid on it per unit of supply, and each bidder receives supply in
//! proportion to its bid.
//! Bids are then re-split in proportion to the utility each good contributed.
//! Budgets are spent and goods clear at every iterate by construction, so
//! only bang-per-buck optimality needs to converge.

use ndarray::Array2;

use super::lp::{lp_solve, Constraint, LinearProgram};
use super::{MarketError, MarketInstance, MarketOutcome};

pub const DEFAULT_TOLERANCE: f64 = 1e-8;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;

/// Computes equilibrium prices and allocation.
///
/// Goods with zero supply, or that no funded buyer values, are removed and
/// priced at 0. Buyers with zero budget or no positive valuation on a
/// remaining good are dropped and get empty bundles.
pub fn solve_equilibrium(
    instance: &MarketInstance,
    tolerance: f64,
    max_iterations: usize,
) -> Result<MarketOutcome, MarketError> {
    instance.validate()?;
    // goods in supply that some funded buyer wants
    let goods: Vec<usize> = (0..instance.goods())
        .filter(|&r| {
            instance.supplies[r] > 0.0
                && (0..instance.buyers()).any(|b| instance.budgets[b] > 0.0 && instance.valuations[[b, r]] > 0.0)
        })
        .collect();
    let buyers: Vec<usize> = (0..instance.buyers())
        .filter(|&b| instance.budgets[b] > 0.0 && goods.iter().any(|&r| instance.valuations[[b, r]] > 0.0))
        .collect();

    let mut outcome = MarketOutcome::empty(instance);
    if goods.is_empty() || buyers.is_empty() {
        return Ok(outcome);
    }

    let (nb, ng) = (buyers.len(), goods.len());
    let val = Array2::from_shape_fn((nb, ng), |(i, j)| instance.valuations[[buyers[i], goods[j]]]);
    let budget: Vec<f64> = buyers.iter().map(|&b| instance.budgets[b]).collect();
    let supply: Vec<f64> = goods.iter().map(|&r| instance.supplies[r]).collect();

    let mut bids = Array2::<f64>::zeros((nb, ng));
    for i in 0..nb {
        let total: f64 = val.row(i).sum();
        for j in 0..ng {
            bids[[i, j]] = budget[i] * val[[i, j]] / total;
        }
    }

    let reduced = Reduced { val, budget, supply };
    let mut prices = vec![0.0; ng];
    let mut next = Array2::<f64>::zeros((nb, ng));
    let mut change = f64::INFINITY;
    let mut was_settled = false;
    for iteration in 0..max_iterations {
        change = reduced.respond(&bids, &mut next, &mut prices);
        std::mem::swap(&mut bids, &mut next);
        let settled = change < tolerance;
        let newly_settled = settled && !was_settled;
        was_settled = settled;
        if newly_settled || iteration % POLISH_EVERY == POLISH_EVERY - 1 {
            reduced.unit_prices(&bids, &mut prices);
            let solution = reduced
                .polish(&prices, iteration >= SEARCH_AFTER)
                .or_else(|| (settled && reduced.bang_per_buck_gap(&bids, &prices, tolerance) < tolerance).then(|| bids.clone()));
            if let Some(spend) = solution {
                reduced.unit_prices(&spend, &mut prices);
                for (j, &r) in goods.iter().enumerate() {
                    outcome.prices[r] = prices[j];
                    if prices[j] > 0.0 {
                        for (i, &b) in buyers.iter().enumerate() {
                            outcome.allocation[[b, r]] = spend[[i, j]] / prices[j];
                        }
                    }
                }
                outcome.buyer_utilities = instance.utilities(&outcome.allocation);
                return Ok(outcome);
            }
        }
    }
    Err(MarketError::NotConverged { iterations: max_iterations, residual: change })
}

/// Proportional-response iterations run this often between attempts to read
/// off the exact equilibrium.
const POLISH_EVERY: usize = 256;

/// After this many iterations a failed support guess is followed by a search
/// over subsets of each buyer's near-best goods.
const SEARCH_AFTER: usize = 4 * POLISH_EVERY;

/// Upper bound on candidate supports tried in one search.
const MAX_SUPPORTS: u64 = 4096;

/// Relative bang-per-buck slack thresholds tried when guessing which goods
/// each buyer is indifferent between.
const SUPPORT_THRESHOLDS: [f64; 8] = [1e-2, 1e-3, 1e-4, 1e-5, 1e-6, 1e-7, 1e-8, 1e-10];

/// Instance restricted to participating buyers and goods in supply.
struct Reduced {
    val: Array2<f64>,
    budget: Vec<f64>,
    supply: Vec<f64>,
}

impl Reduced {
    /// One proportional-response round; returns the largest bid change.
    fn respond(&self, bids: &Array2<f64>, next: &mut Array2<f64>, spent: &mut [f64]) -> f64 {
        let (nb, ng) = bids.dim();
        for (j, p) in spent.iter_mut().enumerate() {
            *p = bids.column(j).sum();
        }
        let mut change: f64 = 0.0;
        for i in 0..nb {
            let mut utility = 0.0;
            for j in 0..ng {
                let contrib = if spent[j] > 0.0 {
                    self.val[[i, j]] * bids[[i, j]] * self.supply[j] / spent[j]
                } else {
                    0.0
                };
                next[[i, j]] = contrib;
                utility += contrib;
            }
            for j in 0..ng {
                let b = self.budget[i] * next[[i, j]] / utility;
                change = change.max((b - bids[[i, j]]).abs());
                next[[i, j]] = b;
            }
        }
        change
    }

    fn unit_prices(&self, bids: &Array2<f64>, prices: &mut [f64]) {
        for (j, p) in prices.iter_mut().enumerate() {
            *p = bids.column(j).sum() / self.supply[j];
        }
    }

    fn bang_per_buck_gap(&self, bids: &Array2<f64>, prices: &[f64], tolerance: f64) -> f64 {
        let (nb, ng) = bids.dim();
        let mut gap: f64 = 0.0;
        for i in 0..nb {
            let ratio = |j: usize| if prices[j] > 0.0 { self.val[[i, j]] / prices[j] } else { f64::INFINITY };
            let best = (0..ng).map(ratio).fold(0.0, f64::max);
            for j in 0..ng {
                if prices[j] > 0.0 && bids[[i, j]] / prices[j] > tolerance {
                    gap = gap.max(best - ratio(j));
                }
            }
        }
        gap
    }

    /// Tries to recover the exact equilibrium spending from approximate
    /// prices by guessing the maximum bang-per-buck graph. With `search`,
    /// a rejected guess is followed by trying every sub-support in which
    /// each buyer keeps at least one of its candidate goods; this resolves
    /// near-ties that would otherwise need PR to converge to within the tie.
    fn polish(&self, approx_prices: &[f64], search: bool) -> Option<Array2<f64>> {
        if approx_prices.iter().any(|&p| !(p > 0.0)) {
            return None;
        }
        let (nb, ng) = self.val.dim();
        let mut last: Option<Vec<Vec<usize>>> = None;
        for theta in SUPPORT_THRESHOLDS {
            let candidates: Vec<Vec<usize>> = (0..nb)
                .map(|i| {
                    let best = (0..ng).map(|j| self.val[[i, j]] / approx_prices[j]).fold(0.0, f64::max);
                    (0..ng)
                        .filter(|&j| self.val[[i, j]] > 0.0 && self.val[[i, j]] / approx_prices[j] >= (1.0 - theta) * best)
                        .collect()
                })
                .collect();
            if last.as_ref() == Some(&candidates) {
                continue;
            }
            if let Some(spend) = self.solve_on_support(&support_edges(&candidates, None)) {
                return Some(spend);
            }
            if search {
                if let Some(spend) = self.search_supports(&candidates) {
                    return Some(spend);
                }
            }
            last = Some(candidates);
        }
        None
    }

    fn search_supports(&self, candidates: &[Vec<usize>]) -> Option<Array2<f64>> {
        let mut count: u64 = 1;
        for c in candidates {
            count = count.saturating_mul((1u64 << c.len().min(63)) - 1);
        }
        if count <= 1 || count > MAX_SUPPORTS {
            return None;
        }
        // mixed-radix walk over non-empty subsets per buyer
        let mut masks = vec![1u64; candidates.len()];
        loop {
            if let Some(spend) = self.solve_on_support(&support_edges(candidates, Some(&masks))) {
                return Some(spend);
            }
            let mut i = 0;
            loop {
                if i == masks.len() {
                    return None;
                }
                masks[i] += 1;
                if masks[i] < 1u64 << candidates[i].len() {
                    break;
                }
                masks[i] = 1;
                i += 1;
            }
        }
    }

    /// Exact prices and spending when buyers only buy along `edges`, or
    /// `None` if that support is not an equilibrium.
    fn solve_on_support(&self, edges: &[(usize, usize)]) -> Option<Array2<f64>> {
        let (nb, ng) = self.val.dim();
        let mut buyer_adj = vec![Vec::new(); nb];
        let mut good_adj = vec![Vec::new(); ng];
        for &(i, j) in edges {
            buyer_adj[i].push(j);
            good_adj[j].push(i);
        }
        if buyer_adj.iter().any(Vec::is_empty) {
            return None;
        }

        // Relative prices within each connected component from v_ij / p_j
        // being constant across a buyer's edges; then scale so money clears.
        let mut price = vec![f64::NAN; ng];
        let mut per_util = vec![f64::NAN; nb];
        for root in 0..ng {
            if !price[root].is_nan() {
                continue;
            }
            if good_adj[root].is_empty() {
                // nobody wants it at these prices; fine only if nobody values it
                if (0..nb).any(|i| self.val[[i, root]] > 0.0) {
                    return None;
                }
                price[root] = 0.0;
                continue;
            }
            let mut comp_goods = vec![root];
            let mut comp_buyers = Vec::new();
            price[root] = 1.0;
            let mut stack = vec![root];
            while let Some(j) = stack.pop() {
                for &i in &good_adj[j] {
                    let alpha = self.val[[i, j]] / price[j];
                    if per_util[i].is_nan() {
                        per_util[i] = alpha;
                        comp_buyers.push(i);
                        for &k in &buyer_adj[i] {
                            let pk = self.val[[i, k]] / alpha;
                            if price[k].is_nan() {
                                price[k] = pk;
                                comp_goods.push(k);
                                stack.push(k);
                            } else if (price[k] - pk).abs() > 1e-9 * price[k] {
                                return None;
                            }
                        }
                    } else if (per_util[i] - alpha).abs() > 1e-9 * alpha {
                        return None;
                    }
                }
            }
            let money: f64 = comp_buyers.iter().map(|&i| self.budget[i]).sum();
            let worth: f64 = comp_goods.iter().map(|&k| price[k] * self.supply[k]).sum();
            let scale = money / worth;
            for &k in &comp_goods {
                price[k] *= scale;
            }
            for &i in &comp_buyers {
                per_util[i] /= scale;
            }
        }

        // every buyer must be spending on a maximum bang-per-buck good
        for i in 0..nb {
            for j in 0..ng {
                let ratio = if price[j] > 0.0 {
                    self.val[[i, j]] / price[j]
                } else if self.val[[i, j]] > 0.0 {
                    return None;
                } else {
                    0.0
                };
                if ratio > per_util[i] * (1.0 + 1e-12) {
                    return None;
                }
            }
        }

        // spending along edges: budgets spent, goods paid for in full
        let n = edges.len();
        let mut constraints = Vec::with_capacity(nb + ng);
        for i in 0..nb {
            let coeffs = edges.iter().map(|&(a, _)| if a == i { 1.0 } else { 0.0 }).collect();
            constraints.push(Constraint::eq(coeffs, self.budget[i]));
        }
        for j in 0..ng {
            if price[j] > 0.0 {
                let coeffs = edges.iter().map(|&(_, g)| if g == j { 1.0 } else { 0.0 }).collect();
                constraints.push(Constraint::eq(coeffs, price[j] * self.supply[j]));
            }
        }
        let flow = lp_solve(&LinearProgram { objective: vec![0.0; n], constraints }).ok()?;
        let mut spend = Array2::zeros((nb, ng));
        for (&(i, j), &b) in edges.iter().zip(&flow.x) {
            spend[[i, j]] = b;
        }
        // exact budget balance per buyer; the LP is feasible only up to round-off
        for i in 0..nb {
            let total: f64 = spend.row(i).sum();
            if (total - self.budget[i]).abs() > 1e-9 * self.budget[i].max(1.0) {
                return None;
            }
        }
        Some(spend)
    }
}

fn support_edges(candidates: &[Vec<usize>], masks: Option<&[u64]>) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for (i, goods) in candidates.iter().enumerate() {
        for (k, &j) in goods.iter().enumerate() {
            if masks.is_none_or(|m| m[i] >> k & 1 == 1) {
                edges.push((i, j));
            }
        }
    }
    edges
}

/// Worst violation of each equilibrium condition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumResiduals {
    /// `|sum_b x_br - e_r|` over goods with a positive price, plus any
    /// over-allocation of free goods.
    pub clearance: f64,
    /// `|spend_b - budget_b|` over participating buyers.
    pub budget: f64,
    /// Shortfall of bang-per-buck on purchased goods versus the buyer's best.
    pub bang_per_buck: f64,
}

impl EquilibriumResiduals {
    pub fn max(&self) -> f64 {
        self.clearance.max(self.budget).max(self.bang_per_buck)
    }
}

/// Residuals of `outcome` against the equilibrium conditions. Buyers dropped
/// by the solver (zero budget or no valued good in supply) are exempt from the
/// budget condition.
pub fn verify_equilibrium(instance: &MarketInstance, outcome: &MarketOutcome, tolerance: f64) -> EquilibriumResiduals {
    let sold = outcome.sold();
    let mut clearance: f64 = 0.0;
    for r in 0..instance.goods() {
        let gap = sold[r] - instance.supplies[r];
        if outcome.prices[r] > 0.0 {
            clearance = clearance.max(gap.abs());
        } else {
            clearance = clearance.max(gap.max(0.0));
        }
    }

    let spending = outcome.spending();
    let mut budget: f64 = 0.0;
    let mut bpb: f64 = 0.0;
    for b in 0..instance.buyers() {
        let participates = instance.budgets[b] > 0.0
            && (0..instance.goods()).any(|r| instance.supplies[r] > 0.0 && instance.valuations[[b, r]] > 0.0);
        if !participates {
            continue;
        }
        budget = budget.max((spending[b] - instance.budgets[b]).abs());
        let ratio = |r: usize| {
            let v = instance.valuations[[b, r]];
            let p = outcome.prices[r];
            if p > 0.0 {
                v / p
            } else if v > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        };
        let best = (0..instance.goods())
            .filter(|&r| instance.supplies[r] > 0.0)
            .map(ratio)
            .fold(0.0, f64::max);
        for r in 0..instance.goods() {
            if outcome.allocation[[b, r]] > tolerance {
                bpb = bpb.max(best - ratio(r));
            }
        }
    }
    EquilibriumResiduals { clearance, budget, bang_per_buck: bpb }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    fn solve(inst: &MarketInstance) -> MarketOutcome {
        solve_equilibrium(inst, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS).unwrap()
    }

    #[test]
    fn single_buyer_single_good() {
        let inst = MarketInstance::new(vec![1.0], array![[0.7]], vec![1.0]).unwrap();
        let out = solve(&inst);
        assert!((out.prices[0] - 1.0).abs() < 1e-12);
        assert!((out.allocation[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((out.buyer_utilities[0] - 0.7).abs() < 1e-12);
    }

    #[test]
    fn two_symmetric_buyers_split() {
        let inst = MarketInstance::new(vec![1.0, 1.0], array![[1.0], [1.0]], vec![2.0]).unwrap();
        let out = solve(&inst);
        assert!((out.prices[0] - 1.0).abs() < 1e-12);
        assert!((out.allocation[[0, 0]] - 1.0).abs() < 1e-12);
        assert!((out.allocation[[1, 0]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn diagonal_valuations() {
        let inst = MarketInstance::new(vec![1.0, 2.0], array![[1.0, 0.0], [0.0, 1.0]], vec![1.0, 1.0]).unwrap();
        let out = solve(&inst);
        assert!((out.prices[0] - 1.0).abs() < 1e-9);
        assert!((out.prices[1] - 2.0).abs() < 1e-9);
        assert!((out.allocation[[0, 0]] - 1.0).abs() < 1e-9);
        assert!((out.allocation[[1, 1]] - 1.0).abs() < 1e-9);
        assert!(out.allocation[[0, 1]].abs() < 1e-9 && out.allocation[[1, 0]].abs() < 1e-9);
    }

    #[test]
    fn zero_supply_goods_priced_at_zero() {
        let inst = MarketInstance::new(vec![1.0, 1.0], array![[0.5, 1.0], [0.3, 0.2]], vec![1.0, 0.0]).unwrap();
        let out = solve(&inst);
        assert_eq!(out.prices[1], 0.0);
        assert!(out.allocation.column(1).iter().all(|&x| x == 0.0));
        assert!((out.prices[0] - 2.0).abs() < 1e-9);
        assert!(verify_equilibrium(&inst, &out, 1e-8).max() < 1e-8);
    }

    #[test]
    fn zero_valuation_buyer_dropped() {
        let inst = MarketInstance::new(vec![1.0, 1.0], array![[0.5], [0.0]], vec![1.0]).unwrap();
        let out = solve(&inst);
        assert_eq!(out.allocation[[1, 0]], 0.0);
        assert!((out.prices[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn all_supply_zero_skips_solve() {
        let inst = MarketInstance::new(vec![1.0], array![[0.5, 0.5]], vec![0.0, 0.0]).unwrap();
        let out = solve(&inst);
        assert_eq!(out, MarketOutcome::empty(&inst));
    }

    #[test]
    fn non_convergence_reports_residual() {
        let inst = MarketInstance::new(vec![1.0, 0.5], array![[1.0, 0.3], [0.2, 1.0]], vec![1.0, 1.0]).unwrap();
        match solve_equilibrium(&inst, 1e-300, 3) {
            Err(MarketError::NotConverged { iterations, residual }) => {
                assert_eq!(iterations, 3);
                assert!(residual > 0.0);
            }
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }
}
