use std::path::Path;
use std::time::SystemTime;

use super::manifest::{timestamp, RunManifest};
use super::tables::{read_episode_table, write_table, TrialWriter, EPISODE_FILE};
use super::HarnessError;
use crate::rl::save_checkpoint;
use crate::simloop::{run_experiment_with, EpisodeLog, EpisodeMetrics, ExperimentResult, ScenarioConfig, Trial, TrialSummary};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const CHECKPOINT_DIR: &str = "checkpoint";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    /// Write the per-step table next to the episode table.
    pub step_tables: bool,
    /// Save every learner's final policy under `trial_k/checkpoint`.
    pub checkpoints: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { step_tables: true, checkpoints: true }
    }
}

/// Runs an experiment and writes it under `out`:
///
/// ```text
/// out/manifest.toml
/// out/summary.csv
/// out/trial_k/episodes.csv
/// out/trial_k/steps.csv
/// out/trial_k/checkpoint/
/// ```
pub fn run_to_dir(config: &ScenarioConfig, out: &Path, options: RunOptions) -> Result<(RunManifest, ExperimentResult), HarnessError> {
    config.validate()?;
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))?;
    let mut manifest = RunManifest::new(config, SystemTime::now())?;
    manifest.write(out)?;

    let result = run_experiment_with(config, |k| {
        let dir = out.join(&manifest.trial_dirs[k as usize]);
        let mut writer = Some(TrialWriter::create(&dir, config.harvesters, config.resources, config.buyers, options.step_tables)?);
        let hash = manifest.config_hash.clone();
        Ok(move |log: &EpisodeLog, trial: &Trial| -> Result<(), HarnessError> {
            if let Some(w) = writer.as_mut() {
                w.write_episode(&log.metrics, &log.steps)?;
            }
            if trial.episodes_run() == config.episodes {
                if let Some(w) = writer.take() {
                    w.finish()?;
                }
                if options.checkpoints {
                    let learners: Vec<_> = trial.learners().into_iter().cloned().collect();
                    if !learners.is_empty() {
                        save_checkpoint(&dir.join(CHECKPOINT_DIR), &learners, &hash)?;
                    }
                }
            }
            Ok(())
        })
    })?;
    // zero-episode runs never reach the callback; still leave header-only tables
    if config.episodes == 0 {
        for dir in &manifest.trial_dirs {
            TrialWriter::create(&out.join(dir), config.harvesters, config.resources, config.buyers, options.step_tables)?.finish()?;
        }
    }

    write_table(&out.join(SUMMARY_FILE), &summary_table(&result.trials))?;
    manifest.finished = Some(timestamp(SystemTime::now()));
    manifest.write(out)?;
    Ok((manifest, result))
}

fn summary_table(trials: &[TrialSummary]) -> super::Table {
    let mut columns = vec!["trial".to_string(), "episodes".to_string(), "window".to_string()];
    columns.extend(EpisodeMetrics::NAMES.iter().skip(1).map(|n| n.to_string()));
    let rows = trials
        .iter()
        .map(|s| {
            let mut row = vec![s.trial as f64, s.episodes as f64, s.window as f64];
            row.extend(EpisodeMetrics::NAMES.iter().skip(1).map(|n| s.mean(n)));
            row
        })
        .collect();
    super::Table { columns, rows }
}

/// A finished run read back from disk.
#[derive(Debug, Clone)]
pub struct LoadedRun {
    pub manifest: RunManifest,
    pub episodes: Vec<Vec<EpisodeMetrics>>,
}

impl LoadedRun {
    pub fn load(dir: &Path) -> Result<Self, HarnessError> {
        let manifest = RunManifest::read(dir)?;
        let episodes = manifest
            .trial_dirs
            .iter()
            .map(|t| read_episode_table(&dir.join(t).join(EPISODE_FILE)))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self { manifest, episodes })
    }

    /// Trial summaries over the run's configured trailing window.
    pub fn summaries(&self) -> Vec<TrialSummary> {
        let window = self.manifest.config.summary_window;
        self.episodes.iter().enumerate().map(|(k, m)| TrialSummary::from_metrics(k as u64, m, window)).collect()
    }
}
