use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::color::GenerationConfig;
use crate::error::{Error, Result};
use crate::matcher::MatcherProfile;
use crate::policies::PolicyKind;
use crate::rl::dqn::TrainConfig;
use crate::rl::reward::RewardParams;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Seeds {
    pub contexts: u64,
    pub eval: u64,
    pub train: u64,
}

impl Default for Seeds {
    fn default() -> Self {
        Seeds {
            contexts: 1,
            eval: 5,
            train: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepGrids {
    pub threshold: Vec<f64>,
    pub tau: Vec<f64>,
    pub alpha: Vec<f64>,
    pub r_term: Vec<f64>,
}

impl Default for SweepGrids {
    fn default() -> Self {
        SweepGrids {
            threshold: vec![0.0, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.99],
            tau: vec![1.0, 2.0, 3.0, 4.5, 6.0, 8.0, 10.0],
            alpha: vec![0.03, 0.05, 0.1, 0.15, 0.3],
            r_term: (0..=20).map(|i| -0.005 * i as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CalibrationConfig {
    pub target_rate: f64,
    pub tolerance: f64,
    pub lo: f64,
    pub hi: f64,
    pub max_iterations: usize,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        CalibrationConfig {
            target_rate: 0.03,
            tolerance: 0.01,
            lo: 0.34,
            hi: 1.0,
            max_iterations: 30,
        }
    }
}

/// Everything an experiment run depends on. Serialized into the manifest hash.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seeds: Seeds,
    pub train_contexts: usize,
    pub test_contexts: usize,
    /// Episodes per test context.
    pub replicates: usize,
    pub generation: GenerationConfig,
    /// Lexicon JSON; the bundled lexicon when absent.
    pub lexicon: Option<PathBuf>,
    /// Grammar JSON; the bundled grammar when absent.
    pub grammar: Option<PathBuf>,
    pub matcher: MatcherProfile,
    pub rewards: RewardParams,
    pub policies: Vec<String>,
    pub sweeps: SweepGrids,
    pub calibration: CalibrationConfig,
    /// Its `seed`, `rewards` and `matcher` are replaced by the top-level values.
    pub train: TrainConfig,
    /// Cells per axis of the policy grid.
    pub grid_resolution: usize,
    /// Run episodes on one thread.
    pub sequential: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seeds: Seeds::default(),
            train_contexts: 5000,
            test_contexts: 1000,
            replicates: 1,
            generation: GenerationConfig::default(),
            lexicon: None,
            grammar: None,
            matcher: MatcherProfile::always_select(),
            rewards: RewardParams::default(),
            policies: vec!["direct".into(), "extended".into(), "mixed".into()],
            sweeps: SweepGrids::default(),
            calibration: CalibrationConfig::default(),
            train: TrainConfig::default(),
            grid_resolution: 50,
            sequential: false,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let config: ExperimentConfig = serde_json::from_str(&text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.train_contexts == 0 || self.test_contexts == 0 || self.replicates == 0 {
            return bad("context counts and replicates must be positive".into());
        }
        let g = &self.sweeps;
        for (name, grid) in [
            ("threshold", &g.threshold),
            ("tau", &g.tau),
            ("alpha", &g.alpha),
            ("r_term", &g.r_term),
        ] {
            if grid.is_empty() {
                return bad(format!("{name} grid is empty"));
            }
            if grid.iter().any(|v| !v.is_finite()) {
                return bad(format!("{name} grid has a non-finite value"));
            }
        }
        if self.policies.is_empty() {
            return bad("policy list is empty".into());
        }
        for p in &self.policies {
            p.parse::<PolicyKind>()?;
        }
        if self.grid_resolution < 2 {
            return bad("grid_resolution must be at least 2".into());
        }
        let c = &self.calibration;
        if !(c.lo < c.hi) || c.tolerance <= 0.0 {
            return bad("calibration needs lo < hi and a positive tolerance".into());
        }
        self.matcher.validate()?;
        self.rewards.validate()?;
        self.train.validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seeds.train,
            rewards: self.rewards,
            matcher: self.matcher.clone(),
            ..self.train.clone()
        }
    }

    pub fn policy_kinds(&self) -> Result<Vec<PolicyKind>> {
        self.policies.iter().map(|p| p.parse()).collect()
    }

    /// sha256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(bytes))
    }
}
