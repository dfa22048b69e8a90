//! Dense two-phase tableau simplex with Bland's rule.
//!
//! Sized for the welfare-allocation programs of the market (at most a few
//! hundred variables), so everything is a plain row-major tableau.

use thiserror::Error;

const PIVOT_EPS: f64 = 1e-11;
const FEASIBILITY_EPS: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constraint {
    pub coeffs: Vec<f64>,
    pub sense: Sense,
    pub rhs: f64,
}

impl Constraint {
    pub fn le(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, sense: Sense::Le, rhs }
    }

    pub fn ge(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, sense: Sense::Ge, rhs }
    }

    pub fn eq(coeffs: Vec<f64>, rhs: f64) -> Self {
        Self { coeffs, sense: Sense::Eq, rhs }
    }
}

/// `maximize objective . x` subject to the constraints and `x >= 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProgram {
    pub objective: Vec<f64>,
    pub constraints: Vec<Constraint>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// One multiplier per constraint: `>= 0` for `Le`, `<= 0` for `Ge`, free
    /// for `Eq`.
    pub duals: Vec<f64>,
    pub pivots: usize,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LpError {
    #[error("linear program is infeasible (phase-one residual {0:e})")]
    Infeasible(f64),
    #[error("linear program is unbounded")]
    Unbounded,
    #[error("constraint {index} has {got} coefficients, expected {expected}")]
    Shape { index: usize, got: usize, expected: usize },
    #[error("non-finite input in linear program")]
    NonFinite,
    #[error("simplex exceeded {0} pivots")]
    IterationLimit(usize),
}

struct Tableau {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
    rhs: Vec<f64>,
    basis: Vec<usize>,
}

impl Tableau {
    fn at(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    fn pivot(&mut self, row: usize, col: usize) {
        let cols = self.cols;
        let p = self.data[row * cols + col];
        for j in 0..cols {
            self.data[row * cols + j] /= p;
        }
        self.rhs[row] /= p;
        self.data[row * cols + col] = 1.0;
        for i in 0..self.rows {
            if i == row {
                continue;
            }
            let f = self.data[i * cols + col];
            if f == 0.0 {
                continue;
            }
            for j in 0..cols {
                self.data[i * cols + j] -= f * self.data[row * cols + j];
            }
            self.data[i * cols + col] = 0.0;
            self.rhs[i] -= f * self.rhs[row];
        }
        self.basis[row] = col;
    }

    /// Runs Bland's-rule simplex maximizing `cost` over columns allowed by
    /// `allowed`.
    fn optimize(
        &mut self,
        cost: &[f64],
        allowed: &dyn Fn(usize) -> bool,
        pivots: &mut usize,
        limit: usize,
    ) -> Result<(), LpError> {
        loop {
            // reduced cost c_j - c_B . column_j
            let entering = (0..self.cols).filter(|&j| allowed(j)).find(|&j| {
                let zj: f64 = (0..self.rows).map(|i| cost[self.basis[i]] * self.at(i, j)).sum();
                cost[j] - zj > PIVOT_EPS
            });
            let Some(col) = entering else {
                return Ok(());
            };
            let mut leave: Option<(usize, f64)> = None;
            for i in 0..self.rows {
                let a = self.at(i, col);
                if a > PIVOT_EPS {
                    let ratio = self.rhs[i] / a;
                    leave = match leave {
                        None => Some((i, ratio)),
                        Some((k, best)) => {
                            if ratio < best - 1e-12
                                || (ratio <= best + 1e-12 && self.basis[i] < self.basis[k])
                            {
                                Some((i, ratio))
                            } else {
                                Some((k, best))
                            }
                        }
                    };
                }
            }
            let Some((row, _)) = leave else {
                return Err(LpError::Unbounded);
            };
            self.pivot(row, col);
            *pivots += 1;
            if *pivots > limit {
                return Err(LpError::IterationLimit(limit));
            }
        }
    }
}

/// Solves the program with the two-phase method; returns primal values and
/// constraint multipliers.
pub fn lp_solve(lp: &LinearProgram) -> Result<LpSolution, LpError> {
    let n = lp.objective.len();
    let m = lp.constraints.len();
    for (index, c) in lp.constraints.iter().enumerate() {
        if c.coeffs.len() != n {
            return Err(LpError::Shape { index, got: c.coeffs.len(), expected: n });
        }
        if !c.rhs.is_finite() || c.coeffs.iter().any(|v| !v.is_finite()) {
            return Err(LpError::NonFinite);
        }
    }
    if lp.objective.iter().any(|v| !v.is_finite()) {
        return Err(LpError::NonFinite);
    }

    // Normalize to non-negative right-hand sides.
    let mut sign = vec![1.0; m];
    let mut senses = Vec::with_capacity(m);
    for (i, c) in lp.constraints.iter().enumerate() {
        let mut s = c.sense;
        if c.rhs < 0.0 {
            sign[i] = -1.0;
            s = match s {
                Sense::Le => Sense::Ge,
                Sense::Ge => Sense::Le,
                Sense::Eq => Sense::Eq,
            };
        }
        senses.push(s);
    }

    let n_slack = senses.iter().filter(|s| **s != Sense::Eq).count();
    let n_art = senses.iter().filter(|s| **s != Sense::Le).count();
    let art_start = n + n_slack;
    let cols = art_start + n_art;

    let mut data = vec![0.0; m * cols];
    let mut rhs = vec![0.0; m];
    let mut basis = vec![0; m];
    let mut identity_col = vec![0; m];
    let (mut next_slack, mut next_art) = (n, art_start);
    for (i, c) in lp.constraints.iter().enumerate() {
        for j in 0..n {
            data[i * cols + j] = sign[i] * c.coeffs[j];
        }
        rhs[i] = sign[i] * c.rhs;
        match senses[i] {
            Sense::Le => {
                data[i * cols + next_slack] = 1.0;
                basis[i] = next_slack;
                identity_col[i] = next_slack;
                next_slack += 1;
            }
            Sense::Ge => {
                data[i * cols + next_slack] = -1.0;
                next_slack += 1;
                data[i * cols + next_art] = 1.0;
                basis[i] = next_art;
                identity_col[i] = next_art;
                next_art += 1;
            }
            Sense::Eq => {
                data[i * cols + next_art] = 1.0;
                basis[i] = next_art;
                identity_col[i] = next_art;
                next_art += 1;
            }
        }
    }

    let mut t = Tableau { rows: m, cols, data, rhs, basis };
    let limit = 50_000 + 100 * cols * (m + 1);
    let mut pivots = 0;

    if n_art > 0 {
        let mut phase1 = vec![0.0; cols];
        for c in phase1.iter_mut().skip(art_start) {
            *c = -1.0;
        }
        t.optimize(&phase1, &|_| true, &mut pivots, limit)?;
        let residual: f64 = (0..m)
            .filter(|&i| t.basis[i] >= art_start)
            .map(|i| t.rhs[i])
            .sum();
        if residual > FEASIBILITY_EPS * (1.0 + lp.constraints.iter().map(|c| c.rhs.abs()).sum::<f64>()) {
            return Err(LpError::Infeasible(residual));
        }
        // Drive zero-level artificials out of the basis where possible.
        for i in 0..m {
            if t.basis[i] >= art_start {
                if let Some(j) = (0..art_start).find(|&j| t.at(i, j).abs() > 1e-9) {
                    t.pivot(i, j);
                }
            }
        }
    }

    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&lp.objective);
    t.optimize(&cost, &|j| j < art_start, &mut pivots, limit)?;

    let mut x = vec![0.0; n];
    for i in 0..m {
        if t.basis[i] < n {
            x[t.basis[i]] = t.rhs[i].max(0.0);
        }
    }
    let objective = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
    let duals = (0..m)
        .map(|i| {
            let y: f64 = (0..m).map(|k| cost[t.basis[k]] * t.at(k, identity_col[i])).sum();
            sign[i] * y
        })
        .collect();
    Ok(LpSolution { x, objective, duals, pivots })
}

/// Residuals of an (x, y) pair against the program's optimality conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Certificate {
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub duality_gap: f64,
    pub complementary_slackness: f64,
}

impl Certificate {
    pub fn max_residual(&self) -> f64 {
        self.primal_infeasibility
            .max(self.dual_infeasibility)
            .max(self.duality_gap)
            .max(self.complementary_slackness)
    }
}

/// Checks primal feasibility, dual feasibility, the duality gap and
/// complementary slackness for a candidate solution.
pub fn certify(lp: &LinearProgram, x: &[f64], duals: &[f64]) -> Certificate {
    let mut primal: f64 = x.iter().map(|v| (-v).max(0.0)).fold(0.0, f64::max);
    let mut dual_inf: f64 = 0.0;
    let mut cs: f64 = 0.0;
    for (c, &y) in lp.constraints.iter().zip(duals) {
        let ax: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
        let (viol, wrong_sign) = match c.sense {
            Sense::Le => ((ax - c.rhs).max(0.0), (-y).max(0.0)),
            Sense::Ge => ((c.rhs - ax).max(0.0), y.max(0.0)),
            Sense::Eq => ((ax - c.rhs).abs(), 0.0),
        };
        primal = primal.max(viol);
        dual_inf = dual_inf.max(wrong_sign);
        cs = cs.max((y * (c.rhs - ax)).abs());
    }
    for (j, &cj) in lp.objective.iter().enumerate() {
        let aty: f64 = lp.constraints.iter().zip(duals).map(|(c, y)| c.coeffs[j] * y).sum();
        dual_inf = dual_inf.max((cj - aty).max(0.0));
        cs = cs.max((x[j] * (aty - cj)).abs());
    }
    let primal_obj: f64 = lp.objective.iter().zip(x).map(|(c, v)| c * v).sum();
    let dual_obj: f64 = lp.constraints.iter().zip(duals).map(|(c, y)| c.rhs * y).sum();
    Certificate {
        primal_infeasibility: primal,
        dual_infeasibility: dual_inf,
        duality_gap: (primal_obj - dual_obj).abs(),
        complementary_slackness: cs,
    }
}
