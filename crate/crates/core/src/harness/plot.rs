use super::stats::mean_var;
use super::tables::Table;
use crate::simloop::EpisodeMetrics;

pub const PLOT_FILE: &str = "plot_data.csv";

/// Learning curves: for each episode index, the mean and sample standard
/// deviation of every metric across trials. The std column is 0 for a
/// single trial. Rows stop at the shortest trial; NaN entries are skipped.
pub fn plot_data(trials: &[Vec<EpisodeMetrics>]) -> Table {
    let mut columns = vec!["episode".to_string()];
    for name in EpisodeMetrics::NAMES.iter().skip(1) {
        columns.push(format!("{name}_mean"));
        columns.push(format!("{name}_std"));
    }
    let episodes = trials.iter().map(Vec::len).min().unwrap_or(0);
    let rows = (0..episodes)
        .map(|e| {
            let mut row = vec![e as f64];
            for k in 1..EpisodeMetrics::NAMES.len() {
                let values: Vec<f64> = trials.iter().map(|t| t[e].values()[k]).filter(|v| !v.is_nan()).collect();
                if values.is_empty() {
                    row.extend([f64::NAN, f64::NAN]);
                } else {
                    let (mean, var) = mean_var(&values);
                    row.extend([mean, var.sqrt()]);
                }
            }
            row
        })
        .collect();
    Table { columns, rows }
}
