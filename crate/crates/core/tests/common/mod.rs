//! Brute-force oracles shared by the integration and acceptance suites.
//! Nothing here calls into the solvers it is used to check.

#![allow(dead_code)]

use fishmarket::market::lp::{Constraint, LinearProgram, Sense};
use fishmarket::market::MarketInstance;
use ndarray::Array2;
use rand::Rng;

/// Random instance with entries on a 0.1 grid; every buyer values at least
/// one good.
pub fn grid_instance<R: Rng>(rng: &mut R, buyers: usize, goods: usize) -> MarketInstance {
    let tick = |rng: &mut R, lo: u32| f64::from(rng.random_range(lo..=10)) / 10.0;
    let budgets = (0..buyers).map(|_| tick(rng, 1)).collect();
    let supplies = (0..goods).map(|_| tick(rng, 1)).collect();
    let mut valuations = Array2::from_shape_fn((buyers, goods), |_| tick(rng, 0));
    for b in 0..buyers {
        if valuations.row(b).iter().all(|&v| v == 0.0) {
            let r = rng.random_range(0..goods);
            valuations[[b, r]] = tick(rng, 1);
        }
    }
    MarketInstance::new(budgets, valuations, supplies).unwrap()
}

/// Continuous random instance like the simulation's buyers: budgets and
/// valuations uniform on (0, 1], supplies uniform on [0.01, 2].
pub fn uniform_instance<R: Rng>(rng: &mut R, buyers: usize, goods: usize) -> MarketInstance {
    let budgets = (0..buyers).map(|_| 1.0 - rng.random::<f64>()).collect();
    let supplies = (0..goods).map(|_| rng.random_range(0.01..2.0)).collect();
    let valuations = Array2::from_shape_fn((buyers, goods), |_| 1.0 - rng.random::<f64>());
    MarketInstance::new(budgets, valuations, supplies).unwrap()
}

fn eg_value(inst: &MarketInstance, shares: &[f64]) -> f64 {
    // shares[r * (B - 1) + k] is buyer k's fraction of good r; the last buyer
    // receives the remainder.
    let (nb, ng) = (inst.buyers(), inst.goods());
    let mut utils = vec![0.0; nb];
    for r in 0..ng {
        let mut rest = 1.0;
        for b in 0..nb {
            let f = if b + 1 < nb { shares[r * (nb - 1) + b] } else { rest };
            if b + 1 < nb {
                rest -= f;
            }
            if f < -1e-15 || rest < -1e-12 {
                return f64::NEG_INFINITY;
            }
            utils[b] += inst.valuations[[b, r]] * f.max(0.0) * inst.supplies[r];
        }
    }
    utils
        .iter()
        .zip(&inst.budgets)
        .map(|(u, beta)| if *u > 0.0 { beta * u.ln() } else { f64::NEG_INFINITY })
        .sum()
}

/// Maximizes the Eisenberg-Gale objective by zooming grid search over the
/// per-good split fractions: evaluate every point of a `3^d` stencil around
/// the incumbent, move to the best, halve the step when the incumbent wins.
pub fn grid_eg_max(inst: &MarketInstance) -> f64 {
    let (nb, ng) = (inst.buyers(), inst.goods());
    let d = ng * (nb - 1);
    if d == 0 {
        return eg_value(inst, &[]);
    }
    // coarse exhaustive start
    let coarse = 10;
    let mut best = vec![0.0; d];
    let mut best_val = f64::NEG_INFINITY;
    let mut idx = vec![0usize; d];
    loop {
        let point: Vec<f64> = idx.iter().map(|&i| i as f64 / coarse as f64).collect();
        let v = eg_value(inst, &point);
        if v > best_val {
            best_val = v;
            best = point;
        }
        let mut k = 0;
        while k < d {
            idx[k] += 1;
            if idx[k] <= coarse {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }

    let mut step = 0.5 / coarse as f64;
    let stencil = 3usize.pow(d as u32);
    while step > 1e-9 {
        let mut cand_best = best.clone();
        let mut cand_val = best_val;
        for code in 0..stencil {
            let mut c = code;
            let point: Vec<f64> = best
                .iter()
                .map(|&x| {
                    let o = (c % 3) as f64 - 1.0;
                    c /= 3;
                    x + o * step
                })
                .collect();
            let v = eg_value(inst, &point);
            if v > cand_val + 1e-15 {
                cand_val = v;
                cand_best = point;
            }
        }
        if cand_val > best_val {
            best = cand_best;
            best_val = cand_val;
        } else {
            step *= 0.5;
        }
    }
    best_val
}

fn solve_square(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[piv][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in 0..n {
            if row != col {
                let f = a[row][col] / a[col][col];
                if f != 0.0 {
                    for k in col..n {
                        a[row][k] -= f * a[col][k];
                    }
                    b[row] -= f * b[col];
                }
            }
        }
    }
    Some((0..n).map(|i| b[i] / a[i][i]).collect())
}

/// Maximum of an LP with `x >= 0` by enumerating every basic solution: pick
/// `n` of the `m + n` constraint hyperplanes, solve, keep feasible points.
/// Returns `None` when no vertex is feasible.
pub fn vertex_enumeration_max(lp: &LinearProgram) -> Option<f64> {
    let n = lp.objective.len();
    let mut planes: Vec<(Vec<f64>, f64)> = lp.constraints.iter().map(|c| (c.coeffs.clone(), c.rhs)).collect();
    for j in 0..n {
        let mut e = vec![0.0; n];
        e[j] = 1.0;
        planes.push((e, 0.0));
    }
    let total = planes.len();
    let feasible = |x: &[f64]| {
        x.iter().all(|&v| v >= -1e-9)
            && lp.constraints.iter().all(|c| {
                let ax: f64 = c.coeffs.iter().zip(x).map(|(a, v)| a * v).sum();
                match c.sense {
                    Sense::Le => ax <= c.rhs + 1e-9,
                    Sense::Ge => ax >= c.rhs - 1e-9,
                    Sense::Eq => (ax - c.rhs).abs() <= 1e-9,
                }
            })
    };
    let mut best: Option<f64> = None;
    let mut choose: Vec<usize> = (0..n).collect();
    loop {
        let a = choose.iter().map(|&i| planes[i].0.clone()).collect();
        let b = choose.iter().map(|&i| planes[i].1).collect();
        if let Some(x) = solve_square(a, b) {
            if feasible(&x) {
                let v: f64 = lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
                best = Some(best.map_or(v, |b: f64| b.max(v)));
            }
        }
        // next combination
        let mut i = n;
        loop {
            if i == 0 {
                return best;
            }
            i -= 1;
            if choose[i] < total - n + i {
                choose[i] += 1;
                for k in i + 1..n {
                    choose[k] = choose[k - 1] + 1;
                }
                break;
            }
        }
    }
}

pub fn le(coeffs: Vec<f64>, rhs: f64) -> Constraint {
    Constraint::le(coeffs, rhs)
}
