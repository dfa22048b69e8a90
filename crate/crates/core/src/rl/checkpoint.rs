//! Checkpoint directory layout:
//!
//! ```text
//! manifest.toml          agent ids, sizes, log std, bounds, config hash
//! <id>.mean.fmlp         mean network snapshot
//! <id>.value.fmlp        value network snapshot
//! ```

use std::fs;
use std::io::{BufReader, BufWriter};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{GaussianPolicy, PpoAgent, RlError};
use crate::nn::Mlp;

pub const MANIFEST_FILE: &str = "manifest.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentManifest {
    pub id: String,
    pub observation_size: usize,
    pub action_size: usize,
    pub mean_file: String,
    pub value_file: String,
    pub log_std: Vec<f64>,
    pub bounds: Vec<[f64; 2]>,
    pub updates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub config_hash: String,
    pub agents: Vec<AgentManifest>,
}

fn safe_id(id: &str) -> Result<(), RlError> {
    if id.is_empty() || !id.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
        return Err(RlError::Checkpoint(format!("agent id {id:?} is not a valid file stem")));
    }
    Ok(())
}

pub fn save_checkpoint(dir: &Path, agents: &[PpoAgent], config_hash: &str) -> Result<CheckpointManifest, RlError> {
    fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(agents.len());
    for agent in agents {
        safe_id(&agent.id)?;
        let mean_file = format!("{}.mean.fmlp", agent.id);
        let value_file = format!("{}.value.fmlp", agent.id);
        agent.policy.mean_net.write_snapshot(&mut BufWriter::new(fs::File::create(dir.join(&mean_file))?))?;
        agent.policy.value_net.write_snapshot(&mut BufWriter::new(fs::File::create(dir.join(&value_file))?))?;
        entries.push(AgentManifest {
            id: agent.id.clone(),
            observation_size: agent.policy.obs_dim(),
            action_size: agent.policy.action_dim(),
            mean_file,
            value_file,
            log_std: agent.policy.log_std.clone(),
            bounds: agent.bounds.iter().map(|&(lo, hi)| [lo, hi]).collect(),
            updates: agent.updates,
        });
    }
    let manifest = CheckpointManifest { format_version: 1, config_hash: config_hash.to_string(), agents: entries };
    let text = toml::to_string(&manifest).map_err(|e| RlError::Checkpoint(e.to_string()))?;
    fs::write(dir.join(MANIFEST_FILE), text)?;
    Ok(manifest)
}

/// Loads the manifest and one policy per listed agent, in manifest order.
pub fn load_checkpoint(dir: &Path) -> Result<(CheckpointManifest, Vec<GaussianPolicy>), RlError> {
    let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
    let manifest: CheckpointManifest = toml::from_str(&text).map_err(|e| RlError::Checkpoint(e.to_string()))?;
    if manifest.format_version != 1 {
        return Err(RlError::Checkpoint(format!("unsupported format version {}", manifest.format_version)));
    }
    let mut policies = Vec::with_capacity(manifest.agents.len());
    for entry in &manifest.agents {
        safe_id(&entry.id)?;
        let mean_net = Mlp::read_snapshot(&mut BufReader::new(fs::File::open(dir.join(&entry.mean_file))?))?;
        let value_net = Mlp::read_snapshot(&mut BufReader::new(fs::File::open(dir.join(&entry.value_file))?))?;
        let consistent = mean_net.input_size() == entry.observation_size
            && value_net.input_size() == entry.observation_size
            && mean_net.output_size() == entry.action_size
            && value_net.output_size() == 1
            && entry.log_std.len() == entry.action_size;
        if !consistent {
            return Err(RlError::Checkpoint(format!("agent {} has inconsistent sizes", entry.id)));
        }
        policies.push(GaussianPolicy { mean_net, value_net, log_std: entry.log_std.clone() });
    }
    Ok((manifest, policies))
}
