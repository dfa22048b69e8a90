use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use fishmarket::harness::{
    compare, plot_data, run_to_dir, self_check, write_table, LoadedRun, RunOptions, COMPARISON_FILE, PLOT_FILE,
};
use fishmarket::simloop::{PricingMode, Scenario, ScenarioConfig};

#[derive(Parser)]
#[command(name = "fishmarket", version, about = "Fishery and market simulations with learned pricing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pricing {
    /// Market-equilibrium prices.
    Me,
    /// Prices set by a learned policymaker.
    Policymaker,
}

#[derive(Clone, Copy, ValueEnum)]
enum ScenarioArg {
    Plentiful,
    Scarce,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its metrics to a directory.
    Run {
        /// TOML config; flags below override its values.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value = "runs/latest")]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        episodes: Option<usize>,
        #[arg(long, value_enum)]
        pricing: Option<Pricing>,
        #[arg(long, value_enum)]
        scenario: Option<ScenarioArg>,
        /// Skip the per-step tables.
        #[arg(long)]
        no_steps: bool,
        /// Skip saving final policies.
        #[arg(long)]
        no_checkpoints: bool,
    },
    /// Compare a treatment run against a baseline run.
    Compare {
        baseline: PathBuf,
        treatment: PathBuf,
        /// Where to write the CSV report [default: TREATMENT/comparison.csv].
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in numerical checks.
    Verify {
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write per-episode learning curves (mean and std across trials).
    PlotData {
        run: PathBuf,
        /// [default: RUN/plot_data.csv]
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn load_config(path: &Path) -> Result<ScenarioConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Run { config, out, seed, trials, episodes, pricing, scenario, no_steps, no_checkpoints } => {
            let mut cfg = match &config {
                Some(path) => load_config(path)?,
                None => ScenarioConfig::default(),
            };
            if let Some(s) = scenario {
                cfg.scarcity = match s {
                    ScenarioArg::Plentiful => Scenario::Plentiful,
                    ScenarioArg::Scarce => Scenario::Scarce,
                }
                .scarcity();
            }
            if let Some(p) = pricing {
                cfg.pricing_mode = match p {
                    Pricing::Me => PricingMode::MarketEquilibrium,
                    Pricing::Policymaker => PricingMode::Policymaker,
                };
            }
            cfg.seed = seed.unwrap_or(cfg.seed);
            cfg.trials = trials.unwrap_or(cfg.trials);
            cfg.episodes = episodes.unwrap_or(cfg.episodes);
            let options = RunOptions { step_tables: !no_steps, checkpoints: !no_checkpoints };
            let (manifest, result) = run_to_dir(&cfg, &out, options)?;
            println!("wrote {} (config {})", out.display(), &manifest.config_hash[..12]);
            for s in &result.trials {
                println!(
                    "trial {}: depletion {:.3}, harvester welfare {:.4}, buyer welfare {:.4}, stock deviation {:.4}",
                    s.trial,
                    s.depletion_frequency,
                    s.mean("harvester_welfare"),
                    s.mean("buyer_welfare"),
                    s.mean("stock_deviation")
                );
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { baseline, treatment, out } => {
            let a = LoadedRun::load(&baseline)?;
            let b = LoadedRun::load(&treatment)?;
            let report = compare(&a.summaries(), &b.summaries());
            print!("{}", report.to_table());
            let path = out.unwrap_or_else(|| treatment.join(COMPARISON_FILE));
            report.write_csv(&path)?;
            println!("wrote {}", path.display());
            Ok(ExitCode::SUCCESS)
        }
        Command::Verify { seed } => {
            let results = self_check(seed);
            for c in &results {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if results.iter().all(|c| c.passed) {
                Ok(ExitCode::SUCCESS)
            } else {
                Ok(ExitCode::FAILURE)
            }
        }
        Command::PlotData { run, out } => {
            let loaded = LoadedRun::load(&run)?;
            if loaded.episodes.is_empty() {
                bail!("{} has no trials", run.display());
            }
            let table = plot_data(&loaded.episodes);
            let path = out.unwrap_or_else(|| run.join(PLOT_FILE));
            write_table(&path, &table)?;
            println!("wrote {} ({} episodes)", path.display(), table.rows.len());
            Ok(ExitCode::SUCCESS)
        }
    }
}
