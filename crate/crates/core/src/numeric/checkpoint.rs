//! Versioned JSON checkpoints of named tensors.
//!
//! JSON keeps checkpoints diffable; serde_json prints f64 with shortest
//! round-trip formatting, so a save/load cycle is bit-exact for finite
//! values (and every tensor here is finite by invariant).

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tensor::Tensor2;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    /// What produced this checkpoint ("lstm", "tcn", "autoencoder", "gcn", …).
    pub kind: String,
    /// Scalar hyperparameters / calibration values (e.g. thresholds).
    pub scalars: BTreeMap<String, f64>,
    pub tensors: BTreeMap<String, Tensor2>,
}

impl Checkpoint {
    pub fn new(kind: &str) -> Self {
        Checkpoint {
            version: CHECKPOINT_VERSION,
            kind: kind.to_string(),
            scalars: BTreeMap::new(),
            tensors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, t: Tensor2) {
        self.tensors.insert(name.to_string(), t);
    }

    pub fn insert_vec(&mut self, name: &str, v: &[f64]) {
        self.tensors.insert(
            name.to_string(),
            Tensor2 {
                rows: 1,
                cols: v.len(),
                data: v.to_vec(),
            },
        );
    }

    pub fn insert_scalar(&mut self, name: &str, v: f64) {
        self.scalars.insert(name.to_string(), v);
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor2, CheckpointError> {
        self.tensors
            .get(name)
            .ok_or_else(|| CheckpointError::Malformed(format!("missing tensor {name:?}")))
    }

    pub fn vec(&self, name: &str) -> Result<Vec<f64>, CheckpointError> {
        Ok(self.tensor(name)?.data.clone())
    }

    pub fn scalar(&self, name: &str) -> Result<f64, CheckpointError> {
        self.scalars
            .get(name)
            .copied()
            .ok_or_else(|| CheckpointError::Malformed(format!("missing scalar {name:?}")))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self, CheckpointError> {
        let ckpt: Checkpoint =
            serde_json::from_str(s).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version(ckpt.version));
        }
        for (name, t) in &ckpt.tensors {
            if t.data.len() != t.rows * t.cols {
                return Err(CheckpointError::Malformed(format!(
                    "tensor {name:?} claims {}×{} but holds {} values",
                    t.rows,
                    t.cols,
                    t.data.len()
                )));
            }
        }
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}
