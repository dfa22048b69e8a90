//! Quick built-in checks run by `fishmarket verify`. These exercise the
//! installed binary against closed-form values; the full oracle suites
//! live in the test targets.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::stats::{t_test, two_sided_p};
use crate::fishery::{self, HarvesterParams, ResourceParams, ResourceState};
use crate::market::{solve_equilibrium, verify_equilibrium, MarketInstance, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use crate::objectives::{atkinson, gini, jain};
use crate::rl::gae;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, passed: bool, detail: String) -> CheckResult {
    CheckResult { name, passed, detail }
}

pub fn self_check(seed: u64) -> Vec<CheckResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![fishery_dynamics(&mut rng), market_residuals(&mut rng), gae_identity(&mut rng), fairness_values(), t_test_values()]
}

fn fishery_dynamics(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut violations = 0;
    for _ in 0..1000 {
        let (n, r) = (rng.random_range(1..5), rng.random_range(1..4));
        let s_eq = rng.random_range(0.1..5.0);
        let params = vec![ResourceParams::new(s_eq, 1.0, rng.random_range(0.0..3.0 * s_eq)).unwrap(); r];
        let harvesters: Vec<_> =
            (0..n).map(|_| HarvesterParams::new((0..r).map(|_| rng.random::<f64>()).collect(), 0.0).unwrap()).collect();
        let efforts = Array2::from_shape_simple_fn((n, r), || rng.random::<f64>());
        let state = ResourceState::initial(&params);
        let Ok((next, out)) = fishery::step(&state, &efforts, &harvesters, &params) else {
            violations += 1;
            continue;
        };
        for j in 0..r {
            let escapement = state.stocks[j] - out.total_harvest[j];
            if out.total_harvest[j] > state.stocks[j] || next.stocks[j] < 0.0 {
                violations += 1;
            }
            worst = worst.max((next.stocks[j] - fishery::spawner_recruit(escapement, &params[j])).abs());
        }
    }
    check("fishery dynamics", violations == 0 && worst == 0.0, format!("1000 random steps, {violations} violations, max regrowth error {worst:e}"))
}

fn market_residuals(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for _ in 0..200 {
        let (b, r) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let budgets = (0..b).map(|_| rng.random_range(0.01..1.0)).collect();
        let valuations = Array2::from_shape_simple_fn((b, r), || rng.random::<f64>());
        let supplies = (0..r).map(|_| rng.random_range(0.01..2.0)).collect();
        let instance = MarketInstance::new(budgets, valuations, supplies).unwrap();
        match solve_equilibrium(&instance, DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS) {
            Ok(out) => worst = worst.max(verify_equilibrium(&instance, &out, 1e-9).max()),
            Err(_) => failures += 1,
        }
    }
    check("market equilibrium", failures == 0 && worst < 1e-6, format!("200 random markets up to 8x8, {failures} failures, max residual {worst:e}"))
}

fn gae_identity(rng: &mut ChaCha8Rng) -> CheckResult {
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let len = rng.random_range(1..60);
        let rewards: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let values: Vec<f64> = (0..len).map(|_| rng.random_range(-1.0..1.0)).collect();
        let boot = rng.random_range(-1.0..1.0);
        let Ok((adv, _)) = gae(&rewards, &values, boot, 0.99, 1.0) else {
            return check("advantage estimation", false, "gae returned an error".into());
        };
        let mut ret = boot;
        for t in (0..len).rev() {
            ret = rewards[t] + 0.99 * ret;
            worst = worst.max((adv[t] - (ret - values[t])).abs());
        }
    }
    check("advantage estimation", worst < 1e-12, format!("lambda=1 advantages vs returns minus values, max error {worst:e}"))
}

fn fairness_values() -> CheckResult {
    let got = [jain(&[1.0, 0.0, 0.0, 0.0]), gini(&[0.0, 1.0]), atkinson(&[1.0, 4.0])];
    let want = [0.25, 0.5, 0.2];
    let ok = got.iter().zip(want).all(|(g, w)| matches!(g, Ok(v) if (v - w).abs() < 1e-12));
    check("fairness indices", ok, format!("Jain/Gini/Atkinson = {got:?}"))
}

fn t_test_values() -> CheckResult {
    let tail = two_sided_p(-1.549, 6.0).unwrap_or(f64::NAN);
    let p = t_test(&[1.0, 2.0, 3.0, 4.0], &[2.0, 3.0, 4.0, 5.0]).unwrap_or(f64::NAN);
    let same = t_test(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap_or(f64::NAN);
    let ok = (tail - 0.172).abs() < 1e-3 && (p - 0.315_333_6).abs() < 1e-6 && same == 1.0;
    check("t-test", ok, format!("P(|t6| > 1.549) = {tail:.4}, (1,2,3,4) vs (2,3,4,5) p = {p:.4}, identical p = {same}"))
}
