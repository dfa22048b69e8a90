use std::fmt::Write as _;
use std::path::Path;

use serde::Serialize;

use super::stats::{mean_var, t_test};
use super::HarnessError;
use crate::simloop::{relative_difference, EpisodeMetrics, TrialSummary};

pub const COMPARISON_FILE: &str = "comparison.csv";

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricComparison {
    pub metric: String,
    pub baseline_mean: f64,
    pub treatment_mean: f64,
    /// `100 (treatment - baseline) / baseline`; exactly 0 when the means
    /// are equal or both undefined.
    pub relative_difference: f64,
    /// Pooled t-test over per-trial means; `None` with fewer than two
    /// defined trial means on either side.
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonReport {
    pub baseline_trials: usize,
    pub treatment_trials: usize,
    pub metrics: Vec<MetricComparison>,
}

fn trial_means(summaries: &[TrialSummary], metric: &str) -> Vec<f64> {
    summaries.iter().map(|s| s.mean(metric)).filter(|v| v.is_finite()).collect()
}

fn grand_mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        f64::NAN
    } else {
        mean_var(values).0
    }
}

/// Compares every episode metric (the `depleted` row is the depletion
/// frequency) between two sets of trial summaries.
pub fn compare(baseline: &[TrialSummary], treatment: &[TrialSummary]) -> ComparisonReport {
    let metrics = EpisodeMetrics::NAMES
        .iter()
        .skip(1)
        .map(|&name| {
            let a = trial_means(baseline, name);
            let b = trial_means(treatment, name);
            let (ma, mb) = (grand_mean(&a), grand_mean(&b));
            let relative = if ma == mb || (ma.is_nan() && mb.is_nan()) { 0.0 } else { relative_difference(mb, ma) };
            MetricComparison {
                metric: name.to_string(),
                baseline_mean: ma,
                treatment_mean: mb,
                relative_difference: relative,
                p_value: t_test(&a, &b).ok(),
            }
        })
        .collect();
    ComparisonReport { baseline_trials: baseline.len(), treatment_trials: treatment.len(), metrics }
}

impl ComparisonReport {
    pub fn get(&self, metric: &str) -> Option<&MetricComparison> {
        self.metrics.iter().find(|m| m.metric == metric)
    }

    /// Fixed-width text table for terminals.
    pub fn to_table(&self) -> String {
        let mut out = format!("baseline trials: {}, treatment trials: {}\n", self.baseline_trials, self.treatment_trials);
        let _ = writeln!(out, "{:<28} {:>14} {:>14} {:>12} {:>10}", "metric", "baseline", "treatment", "rel. diff %", "p");
        for m in &self.metrics {
            let p = m.p_value.map_or("-".to_string(), |p| format!("{p:.4}"));
            let _ = writeln!(
                out,
                "{:<28} {:>14.6} {:>14.6} {:>12.3} {:>10}",
                m.metric, m.baseline_mean, m.treatment_mean, m.relative_difference, p
            );
        }
        out
    }

    /// CSV with one row per metric; an undefined p-value is written as
    /// `NaN`.
    pub fn write_csv(&self, path: &Path) -> Result<(), HarnessError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
        let header =
            ["metric", "baseline_mean", "treatment_mean", "relative_difference_pct", "p_value", "baseline_trials", "treatment_trials"];
        w.write_record(header).map_err(|e| HarnessError::csv(path, e))?;
        for m in &self.metrics {
            let record = [
                m.metric.clone(),
                m.baseline_mean.to_string(),
                m.treatment_mean.to_string(),
                m.relative_difference.to_string(),
                m.p_value.unwrap_or(f64::NAN).to_string(),
                self.baseline_trials.to_string(),
                self.treatment_trials.to_string(),
            ];
            w.write_record(&record).map_err(|e| HarnessError::csv(path, e))?;
        }
        w.flush().map_err(|e| HarnessError::io(path, e))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn summary(trial: u64, welfare: f64, depletion: f64) -> TrialSummary {
        let mut means: BTreeMap<String, f64> = EpisodeMetrics::NAMES.iter().skip(1).map(|n| (n.to_string(), 1.0)).collect();
        means.insert("harvester_welfare".into(), welfare);
        means.insert("depleted".into(), depletion);
        means.insert("price_gap".into(), f64::NAN);
        TrialSummary {
            trial,
            episodes: 10,
            window: 10,
            means,
            depletion_frequency: depletion,
            min_episode_length: 1,
            market_failures: 0,
        }
    }

    #[test]
    fn self_comparison_is_null() {
        let a = vec![summary(0, 3.0, 0.1), summary(1, 5.0, 0.3), summary(2, 4.5, 0.0)];
        let report = compare(&a, &a);
        for m in &report.metrics {
            assert_eq!(m.relative_difference, 0.0, "{}", m.metric);
            if m.metric != "price_gap" {
                assert_eq!(m.p_value, Some(1.0), "{}", m.metric);
            }
        }
        assert_eq!(report.get("price_gap").unwrap().p_value, None);
    }

    #[test]
    fn relative_difference_and_p() {
        let a = vec![summary(0, 1.0, 0.0), summary(1, 2.0, 0.0), summary(2, 3.0, 0.0), summary(3, 4.0, 0.0)];
        let b = vec![summary(0, 2.0, 0.0), summary(1, 3.0, 0.0), summary(2, 4.0, 0.0), summary(3, 5.0, 0.0)];
        let report = compare(&a, &b);
        let w = report.get("harvester_welfare").unwrap();
        assert_eq!(w.baseline_mean, 2.5);
        assert_eq!(w.treatment_mean, 3.5);
        assert!((w.relative_difference - 40.0).abs() < 1e-12);
        assert!((w.p_value.unwrap() - 0.315_333_596).abs() < 1e-8);
        assert!(report.to_table().contains("harvester_welfare"));
    }

    #[test]
    fn csv_output_has_one_row_per_metric() {
        let a = vec![summary(0, 1.0, 0.0), summary(1, 2.0, 0.5)];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(COMPARISON_FILE);
        compare(&a, &a).write_csv(&path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().count(), 1 + EpisodeMetrics::NAMES.len() - 1);
    }
}
