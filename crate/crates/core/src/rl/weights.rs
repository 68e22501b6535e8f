//! JSON weight artifact for trained directors.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rl::network::QNetwork;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows x cols`; row `i` feeds output unit `i`.
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFile {
    pub format_version: u32,
    pub layer_sizes: Vec<usize>,
    pub layers: Vec<DenseLayer>,
    pub seed: u64,
    pub config_hash: String,
}

impl WeightFile {
    pub fn from_network(net: &QNetwork, seed: u64, config_hash: impl Into<String>) -> Self {
        let p = net.params();
        WeightFile {
            format_version: FORMAT_VERSION,
            layer_sizes: vec![net.inputs(), net.hidden(), net.outputs()],
            layers: vec![
                DenseLayer {
                    rows: net.hidden(),
                    cols: net.inputs(),
                    weights: p[net.w1_range()].to_vec(),
                    biases: p[net.b1_range()].to_vec(),
                },
                DenseLayer {
                    rows: net.outputs(),
                    cols: net.hidden(),
                    weights: p[net.w2_range()].to_vec(),
                    biases: p[net.b2_range()].to_vec(),
                },
            ],
            seed,
            config_hash: config_hash.into(),
        }
    }

    pub fn to_network(&self) -> Result<QNetwork> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::WeightMismatch(format!(
                "unsupported format version {}",
                self.format_version
            )));
        }
        let [inputs, hidden, outputs] = self.layer_sizes[..] else {
            return Err(Error::WeightMismatch("expected three layer sizes".into()));
        };
        let [l1, l2] = &self.layers[..] else {
            return Err(Error::WeightMismatch("expected two dense layers".into()));
        };
        if (l1.rows, l1.cols, l2.rows, l2.cols) != (hidden, inputs, outputs, hidden) {
            return Err(Error::WeightMismatch("layer shapes disagree with layer_sizes".into()));
        }
        let mut params = Vec::new();
        params.extend_from_slice(&l1.weights);
        params.extend_from_slice(&l1.biases);
        params.extend_from_slice(&l2.weights);
        params.extend_from_slice(&l2.biases);
        QNetwork::from_parts(inputs, hidden, outputs, params)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(self)?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}

pub fn load_network(path: &Path) -> Result<QNetwork> {
    WeightFile::load(path)?.to_network()
}
