use std::path::Path;

use serde::{Deserialize, Serialize};

use super::HybridModel;
use crate::circuit::{PqcId, PqcTemplate};
use crate::{Error, Result, Scalar};

pub const CHECKPOINT_VERSION: u32 = 1;

/// Serialised model. Floats are written with round-trip precision, so
/// save/load reproduces parameters bitwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub version: u32,
    pub n_qubits: usize,
    pub template: PqcId,
    pub layers: usize,
    pub k: usize,
    pub theta: Vec<f64>,
    /// One row of `n_qubits` weights per class.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn from_model<T: Scalar>(model: &HybridModel<T>, seed: u64) -> Self {
        let t = model.template();
        Self {
            version: CHECKPOINT_VERSION,
            n_qubits: t.n_qubits(),
            template: t.id(),
            layers: t.layers(),
            k: model.k(),
            theta: model.theta().iter().map(|v| v.as_f64()).collect(),
            weights: model.weights().chunks(t.n_qubits()).map(|r| r.iter().map(|v| v.as_f64()).collect()).collect(),
            bias: model.bias().iter().map(|v| v.as_f64()).collect(),
            seed,
        }
    }

    pub fn to_model<T: Scalar>(&self) -> Result<HybridModel<T>> {
        if self.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                self.version
            )));
        }
        let template = PqcTemplate::new(self.template, self.n_qubits, self.layers)?;
        if self.weights.iter().any(|r| r.len() != self.n_qubits) {
            return Err(Error::Dimension("checkpoint weight rows must have n_qubits entries".into()));
        }
        let conv = |v: &[f64]| v.iter().map(|&x| T::lit(x)).collect::<Vec<T>>();
        HybridModel::new(template, self.k, conv(&self.theta), conv(&self.weights.concat()), conv(&self.bias))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Self = serde_json::from_str(text)?;
        if cp.version != CHECKPOINT_VERSION {
            return Err(Error::Parse(format!("checkpoint version {} is not supported", cp.version)));
        }
        Ok(cp)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::fsutil::write_atomic(path, self.to_json()?.as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
