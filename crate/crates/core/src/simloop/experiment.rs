use std::collections::BTreeMap;

use super::{EpisodeLog, EpisodeMetrics, ScenarioConfig, SimError, Trial};

/// Summary of one trial over its trailing window of episodes.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialSummary {
    pub trial: u64,
    pub episodes: usize,
    /// Episodes actually averaged (`min(window, episodes)`).
    pub window: usize,
    /// Mean of each metric over the window, skipping undefined (NaN) values.
    pub means: BTreeMap<String, f64>,
    pub depletion_frequency: f64,
    pub min_episode_length: usize,
    pub market_failures: usize,
}

impl TrialSummary {
    pub fn from_metrics(trial: u64, all: &[EpisodeMetrics], window: usize) -> Self {
        let start = all.len().saturating_sub(window);
        let tail = &all[start..];
        let mut means = BTreeMap::new();
        for (k, name) in EpisodeMetrics::NAMES.iter().enumerate().skip(1) {
            let vals: Vec<f64> = tail.iter().map(|m| m.values()[k]).filter(|v| !v.is_nan()).collect();
            let mean = if vals.is_empty() { f64::NAN } else { vals.iter().sum::<f64>() / vals.len() as f64 };
            means.insert(name.to_string(), mean);
        }
        let depletion_frequency = if tail.is_empty() {
            f64::NAN
        } else {
            tail.iter().filter(|m| m.depleted).count() as f64 / tail.len() as f64
        };
        Self {
            trial,
            episodes: all.len(),
            window: tail.len(),
            means,
            depletion_frequency,
            min_episode_length: tail.iter().map(|m| m.length).min().unwrap_or(0),
            market_failures: tail.iter().filter(|m| m.market_failure).count(),
        }
    }

    pub fn mean(&self, metric: &str) -> f64 {
        self.means.get(metric).copied().unwrap_or(f64::NAN)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub trials: Vec<TrialSummary>,
    /// Per-trial, per-episode metrics.
    pub episodes: Vec<Vec<EpisodeMetrics>>,
}

/// `100 (x - y) / y`.
pub fn relative_difference(x: f64, y: f64) -> f64 {
    100.0 * (x - y) / y
}

pub fn run_experiment(config: &ScenarioConfig) -> Result<ExperimentResult, SimError> {
    run_experiment_with(config, |_| Ok::<_, SimError>(|_: &EpisodeLog, _: &Trial| Ok(())))
}

/// Runs every trial, in parallel up to the available cores. `observer`
/// is called once per trial to build that trial's episode callback, which
/// then sees each finished episode in order. Trials use disjoint random
/// streams, so results do not depend on scheduling.
pub fn run_experiment_with<F, O, E>(config: &ScenarioConfig, observer: F) -> Result<ExperimentResult, E>
where
    F: Fn(u64) -> Result<O, E> + Sync,
    O: FnMut(&EpisodeLog, &Trial) -> Result<(), E>,
    E: From<SimError> + Send,
{
    config.validate()?;
    let run_trial = |k: u64| -> Result<Vec<EpisodeMetrics>, E> {
        let mut on_episode = observer(k)?;
        let mut trial = Trial::new(config.clone(), k)?;
        let mut metrics = Vec::with_capacity(config.episodes);
        for _ in 0..config.episodes {
            let log = trial.run_episode()?;
            on_episode(&log, &trial)?;
            metrics.push(log.metrics);
        }
        Ok(metrics)
    };
    let workers = std::thread::available_parallelism().map_or(1, |n| n.get()).min(config.trials);
    let mut episodes = Vec::with_capacity(config.trials);
    if workers <= 1 {
        for k in 0..config.trials as u64 {
            episodes.push(run_trial(k)?);
        }
    } else {
        let ids: Vec<u64> = (0..config.trials as u64).collect();
        for chunk in ids.chunks(workers) {
            let results: Vec<_> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk.iter().map(|&k| scope.spawn(move || run_trial(k))).collect();
                handles.into_iter().map(|h| h.join().expect("trial thread panicked")).collect()
            });
            for r in results {
                episodes.push(r?);
            }
        }
    }
    let trials = episodes
        .iter()
        .enumerate()
        .map(|(k, m)| TrialSummary::from_metrics(k as u64, m, config.summary_window))
        .collect();
    Ok(ExperimentResult { trials, episodes })
}
