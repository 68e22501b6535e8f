use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::config::{ExperimentConfig, Seeds};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one harness command. Holds no timestamps so identical runs
/// produce identical bytes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seeds: Seeds,
    pub parallel: bool,
    /// Output file name to its sha256.
    pub outputs: BTreeMap<String, String>,
}

pub fn file_sha256(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

impl Manifest {
    pub fn new(command: &str, config: &ExperimentConfig) -> Self {
        Manifest {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config.hash(),
            seeds: config.seeds.clone(),
            parallel: !config.sequential && cfg!(feature = "parallel"),
            outputs: BTreeMap::new(),
        }
    }

    /// Hash `name` inside `dir` and record it.
    pub fn record(&mut self, dir: &Path, name: &str) -> Result<()> {
        let digest = file_sha256(&dir.join(name))?;
        self.outputs.insert(name.to_string(), digest);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
