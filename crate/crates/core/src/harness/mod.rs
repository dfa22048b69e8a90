//! Running experiments to disk, reading them back, and comparing runs.

mod compare;
mod manifest;
mod plot;
mod run;
mod selfcheck;
mod stats;
mod tables;

use std::path::{Path, PathBuf};

use thiserror::Error;

pub use compare::{compare, ComparisonReport, MetricComparison, COMPARISON_FILE};
pub use manifest::{config_hash, timestamp, trial_dir_name, RunManifest, TrialSeeds, MANIFEST_FILE};
pub use plot::{plot_data, PLOT_FILE};
pub use run::{run_to_dir, LoadedRun, RunOptions, CHECKPOINT_DIR, SUMMARY_FILE};
pub use selfcheck::{self_check, CheckResult};
pub use stats::{mean_var, t_test, two_sided_p};
pub use tables::{
    read_episode_table, read_table, step_columns, step_row, write_table, Table, TrialWriter, EPISODE_FILE, STEP_FILE,
    TABLE_SCHEMA_VERSION,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{0}")]
    Format(String),
    #[error("{0}")]
    Stats(String),
    #[error(transparent)]
    Sim(#[from] crate::simloop::SimError),
    #[error(transparent)]
    Rl(#[from] crate::rl::RlError),
}

impl HarnessError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        Self::Io { path: path.to_path_buf(), source }
    }

    pub(crate) fn csv(path: &Path, source: csv::Error) -> Self {
        Self::Csv { path: path.to_path_buf(), source }
    }
}
