use std::path::{Path, PathBuf};
use std::time::SystemTime;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::HarnessError;
use crate::simloop::{derive_seed, ScenarioConfig, SeedPurpose};

pub const MANIFEST_FILE: &str = "manifest.toml";

/// Seeds one trial draws from, recorded so any trial can be rerun alone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialSeeds {
    pub trial: u64,
    /// Harvesters first, then the policymaker (if any). Decimal strings,
    /// since derived seeds use the full `u64` range and TOML integers are
    /// signed.
    pub agent_seeds: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub table_schema_version: u32,
    pub config_hash: String,
    pub started: String,
    pub finished: Option<String>,
    /// Per-trial directories, relative to the run directory.
    pub trial_dirs: Vec<PathBuf>,
    pub seeds: Vec<TrialSeeds>,
    pub config: ScenarioConfig,
}

/// SHA-256 (hex) of the config rendered as TOML with keys sorted, so two
/// files listing the same parameters in any order hash identically.
pub fn config_hash(config: &ScenarioConfig) -> Result<String, HarnessError> {
    let value = toml::Value::try_from(config).map_err(|e| HarnessError::Format(e.to_string()))?;
    let text = toml::to_string(&canonical(value)).map_err(|e| HarnessError::Format(e.to_string()))?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

fn canonical(value: toml::Value) -> toml::Value {
    match value {
        toml::Value::Table(t) => {
            let mut entries: Vec<_> = t.into_iter().collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            toml::Value::Table(entries.into_iter().map(|(k, v)| (k, canonical(v))).collect())
        }
        toml::Value::Array(a) => toml::Value::Array(a.into_iter().map(canonical).collect()),
        other => other,
    }
}

pub fn timestamp(t: SystemTime) -> String {
    humantime::format_rfc3339_seconds(t).to_string()
}

impl RunManifest {
    pub fn new(config: &ScenarioConfig, started: SystemTime) -> Result<Self, HarnessError> {
        let agents = config.harvesters + usize::from(config.pricing_mode == crate::simloop::PricingMode::Policymaker);
        let seeds = (0..config.trials as u64)
            .map(|trial| TrialSeeds {
                trial,
                agent_seeds: (0..agents as u64).map(|i| derive_seed(config.seed, trial, i, SeedPurpose::Agent).to_string()).collect(),
            })
            .collect();
        Ok(Self {
            table_schema_version: super::TABLE_SCHEMA_VERSION,
            config_hash: config_hash(config)?,
            started: timestamp(started),
            finished: None,
            trial_dirs: (0..config.trials).map(trial_dir_name).collect(),
            seeds,
            config: config.clone(),
        })
    }

    pub fn write(&self, run_dir: &Path) -> Result<(), HarnessError> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = toml::to_string(self).map_err(|e| HarnessError::Format(e.to_string()))?;
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))
    }

    pub fn read(run_dir: &Path) -> Result<Self, HarnessError> {
        let path = run_dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| HarnessError::io(&path, e))?;
        let manifest: Self = toml::from_str(&text).map_err(|e| HarnessError::Format(format!("{}: {e}", path.display())))?;
        if manifest.table_schema_version != super::TABLE_SCHEMA_VERSION {
            return Err(HarnessError::Format(format!(
                "{}: table schema {} (this build reads {})",
                path.display(),
                manifest.table_schema_version,
                super::TABLE_SCHEMA_VERSION
            )));
        }
        Ok(manifest)
    }
}

pub fn trial_dir_name(trial: usize) -> PathBuf {
    PathBuf::from(format!("trial_{trial}"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simloop::PricingMode;

    #[test]
    fn reordered_config_files_hash_identically() {
        let a: ScenarioConfig = toml::from_str("harvesters = 4\nscarcity = 0.45\n[ppo]\nclip_param = 0.2\nlearning_rate = 0.001\n").unwrap();
        let b: ScenarioConfig = toml::from_str("scarcity = 0.45\nharvesters = 4\n[ppo]\nlearning_rate = 0.001\nclip_param = 0.2\n").unwrap();
        assert_eq!(config_hash(&a).unwrap(), config_hash(&b).unwrap());
        let c = ScenarioConfig { seed: 1, ..a.clone() };
        assert_ne!(config_hash(&a).unwrap(), config_hash(&c).unwrap());
        assert_eq!(config_hash(&a).unwrap().len(), 64);
    }

    #[test]
    fn canonical_form_sorts_nested_keys() {
        let render = |s: &str| toml::to_string(&canonical(toml::from_str::<toml::Value>(s).unwrap())).unwrap();
        let x = render("b = 1\na = { z = 1, y = [ { q = 1, p = 2 } ] }\n");
        let y = render("a = { y = [ { p = 2, q = 1 } ], z = 1 }\nb = 1\n");
        assert_eq!(x, y);
        assert!(x.find("p = 2").unwrap() < x.find("q = 1").unwrap());
    }

    #[test]
    fn manifest_round_trip() {
        let config = ScenarioConfig { harvesters: 2, trials: 3, pricing_mode: PricingMode::Policymaker, ..Default::default() };
        let m = RunManifest::new(&config, SystemTime::UNIX_EPOCH).unwrap();
        assert_eq!(m.started, "1970-01-01T00:00:00Z");
        assert_eq!(m.seeds.len(), 3);
        assert_eq!(m.seeds[1].agent_seeds.len(), 3);
        assert_eq!(m.seeds[1].agent_seeds[2], derive_seed(0, 1, 2, SeedPurpose::Agent).to_string());
        let dir = tempfile::tempdir().unwrap();
        m.write(dir.path()).unwrap();
        assert_eq!(RunManifest::read(dir.path()).unwrap(), m);
    }
}
