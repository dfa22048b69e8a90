use statrs::distribution::{ContinuousCDF, StudentsT};

use super::HarnessError;

/// Two-sample, two-sided Student's t-test with pooled variance.
///
/// With zero pooled variance the test degenerates: equal means give
/// `p = 1`, different means `p = 0`.
pub fn t_test(a: &[f64], b: &[f64]) -> Result<f64, HarnessError> {
    if a.len() < 2 || b.len() < 2 {
        return Err(HarnessError::Stats(format!("t-test needs at least 2 values per sample, got {} and {}", a.len(), b.len())));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(HarnessError::Stats("t-test samples must be finite".into()));
    }
    let (ma, va) = mean_var(a);
    let (mb, vb) = mean_var(b);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let df = na + nb - 2.0;
    let pooled = ((na - 1.0) * va + (nb - 1.0) * vb) / df;
    // |ma - mb| keeps the statistic, and therefore p, symmetric in (a, b)
    let diff = (ma - mb).abs();
    if diff == 0.0 {
        return Ok(1.0);
    }
    if pooled == 0.0 {
        return Ok(0.0);
    }
    two_sided_p(diff / (pooled * (1.0 / na + 1.0 / nb)).sqrt(), df)
}

/// `P(|T| >= |t|)` for `T ~ t(df)`.
pub fn two_sided_p(t: f64, df: f64) -> Result<f64, HarnessError> {
    let dist = StudentsT::new(0.0, 1.0, df).map_err(|e| HarnessError::Stats(e.to_string()))?;
    Ok((2.0 * dist.cdf(-t.abs())).clamp(0.0, 1.0))
}

/// Sample mean and unbiased variance.
pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    if x.len() < 2 {
        return (mean, 0.0);
    }
    let var = x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var)
}
