//! Comma-separated metric tables.
//!
//! Every cell is a number written with Rust's shortest round-trip `f64`
//! formatting (`NaN` marks an undefined value, booleans are `0`/`1`), so
//! reading a table back reproduces the written values bit for bit.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use super::HarnessError;
use crate::simloop::{EpisodeMetrics, StepRecord};

/// Bumped whenever a column is added, removed or reordered.
pub const TABLE_SCHEMA_VERSION: u32 = 1;

pub const EPISODE_FILE: &str = "episodes.csv";
pub const STEP_FILE: &str = "steps.csv";

/// Step-table column names for a run with `n` harvesters, `r` resources
/// and `b` buyers.
pub fn step_columns(n: usize, r: usize, b: usize) -> Vec<String> {
    let mut cols = vec!["episode".to_string(), "t".to_string()];
    for prefix in ["stock_before", "stock_after", "harvest", "price", "reference_price"] {
        cols.extend((0..r).map(|j| format!("{prefix}_{j}")));
    }
    for i in 0..n {
        cols.extend((0..r).map(|j| format!("effort_{i}_{j}")));
    }
    cols.extend((0..n).map(|i| format!("revenue_{i}")));
    cols.extend((0..b).map(|k| format!("utility_{k}")));
    cols.extend(["market_skipped", "wasted_fraction", "leftover_budget", "policymaker_reward"].map(String::from));
    cols
}

/// Flattens one step in [`step_columns`] order.
pub fn step_row(episode: usize, step: &StepRecord) -> Vec<f64> {
    let r = step.prices.len();
    let mut row = vec![episode as f64, step.t as f64];
    row.extend(&step.stocks_before);
    row.extend(&step.stocks_after);
    row.extend(&step.harvest);
    row.extend(&step.prices);
    match &step.reference_prices {
        Some(p) => row.extend(p),
        None => row.extend(std::iter::repeat_n(f64::NAN, r)),
    }
    row.extend(step.efforts.iter());
    row.extend(&step.revenues);
    row.extend(&step.utilities);
    row.push(if step.market_skipped { 1.0 } else { 0.0 });
    row.push(step.waste.unwrap_or(f64::NAN));
    row.push(step.leftover.unwrap_or(f64::NAN));
    row.push(step.reward.map_or(f64::NAN, |r| r.total));
    row
}

/// Streams one trial's episode table and (optionally) step table.
pub struct TrialWriter {
    episodes: csv::Writer<BufWriter<File>>,
    steps: Option<csv::Writer<BufWriter<File>>>,
    episode_path: PathBuf,
    step_path: PathBuf,
    step_width: usize,
}

fn open(path: &Path) -> Result<csv::Writer<BufWriter<File>>, HarnessError> {
    let file = File::create(path).map_err(|e| HarnessError::io(path, e))?;
    Ok(csv::Writer::from_writer(BufWriter::new(file)))
}

fn write_row<W: Write>(w: &mut csv::Writer<W>, values: &[f64], path: &Path) -> Result<(), HarnessError> {
    w.write_record(values.iter().map(|v| v.to_string())).map_err(|e| HarnessError::csv(path, e))
}

impl TrialWriter {
    /// Creates `dir` if needed and writes both headers.
    pub fn create(dir: &Path, harvesters: usize, resources: usize, buyers: usize, with_steps: bool) -> Result<Self, HarnessError> {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
        let episode_path = dir.join(EPISODE_FILE);
        let step_path = dir.join(STEP_FILE);
        let mut episodes = open(&episode_path)?;
        episodes.write_record(EpisodeMetrics::NAMES).map_err(|e| HarnessError::csv(&episode_path, e))?;
        let columns = step_columns(harvesters, resources, buyers);
        let steps = if with_steps {
            let mut w = open(&step_path)?;
            w.write_record(&columns).map_err(|e| HarnessError::csv(&step_path, e))?;
            Some(w)
        } else {
            None
        };
        Ok(Self { episodes, steps, episode_path, step_path, step_width: columns.len() })
    }

    pub fn write_episode(&mut self, metrics: &EpisodeMetrics, steps: &[StepRecord]) -> Result<(), HarnessError> {
        write_row(&mut self.episodes, &metrics.values(), &self.episode_path)?;
        if let Some(w) = &mut self.steps {
            for step in steps {
                let row = step_row(metrics.episode, step);
                if row.len() != self.step_width {
                    return Err(HarnessError::Format(format!("step row has {} values, header has {}", row.len(), self.step_width)));
                }
                write_row(w, &row, &self.step_path)?;
            }
        }
        Ok(())
    }

    pub fn finish(mut self) -> Result<(), HarnessError> {
        self.episodes.flush().map_err(|e| HarnessError::io(&self.episode_path, e))?;
        if let Some(w) = &mut self.steps {
            w.flush().map_err(|e| HarnessError::io(&self.step_path, e))?;
        }
        Ok(())
    }
}

/// A parsed table: header plus numeric rows.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn column(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c == name)
    }
}

/// Writes a whole table at once.
pub fn write_table(path: &Path, table: &Table) -> Result<(), HarnessError> {
    let mut w = open(path)?;
    w.write_record(&table.columns).map_err(|e| HarnessError::csv(path, e))?;
    for row in &table.rows {
        write_row(&mut w, row, path)?;
    }
    w.flush().map_err(|e| HarnessError::io(path, e))
}

pub fn read_table(path: &Path) -> Result<Table, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| HarnessError::csv(path, e))?;
    let columns: Vec<String> = reader.headers().map_err(|e| HarnessError::csv(path, e))?.iter().map(String::from).collect();
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|e| HarnessError::csv(path, e))?;
        let row = record
            .iter()
            .map(|cell| cell.parse::<f64>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| HarnessError::Format(format!("{}: row {}: {e}", path.display(), line + 1)))?;
        rows.push(row);
    }
    Ok(Table { columns, rows })
}

pub fn read_episode_table(path: &Path) -> Result<Vec<EpisodeMetrics>, HarnessError> {
    let table = read_table(path)?;
    if table.columns != EpisodeMetrics::NAMES {
        return Err(HarnessError::Format(format!("{}: unexpected episode columns", path.display())));
    }
    table
        .rows
        .iter()
        .map(|row| {
            let values: [f64; 19] = row.as_slice().try_into().expect("csv rows match the header width");
            Ok(EpisodeMetrics::from_values(&values))
        })
        .collect()
}
