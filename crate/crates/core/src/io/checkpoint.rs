use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{read_to_string, write_atomic, IoError};
use crate::model::{AuxFeatureMatrix, CombinedModel, FreeEmbedding, WeightVector};

pub const CHECKPOINT_SCHEMA: u32 = 1;

/// Where a checkpoint came from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 hex digest of the config text that produced the model.
    pub config_hash: String,
    pub round: usize,
    pub seed: u64,
}

impl Provenance {
    pub fn new(config_text: &str, round: usize, seed: u64) -> Self {
        Self {
            config_hash: hex::encode(Sha256::digest(config_text.as_bytes())),
            round,
            seed,
        }
    }
}

/// A fitted model as JSON. The auxiliary features are embedded so the
/// checkpoint can be evaluated on its own.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelCheckpoint {
    pub schema: u32,
    pub n: usize,
    pub d: usize,
    pub dhat: usize,
    pub mu: f64,
    pub w: Vec<f64>,
    pub xhat: Vec<Vec<f64>>,
    pub features: Vec<Vec<f64>>,
    pub provenance: Provenance,
}

fn rows(a: &Array2<f64>) -> Vec<Vec<f64>> {
    a.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn matrix(rows: &[Vec<f64>], n: usize, cols: usize, what: &str) -> Result<Array2<f64>, IoError> {
    if rows.len() != n || rows.iter().any(|r| r.len() != cols) {
        return Err(IoError::Checkpoint(format!("{what} must be {n} x {cols}")));
    }
    Ok(Array2::from_shape_vec((n, cols), rows.concat()).expect("checked shape"))
}

impl ModelCheckpoint {
    pub fn from_model(model: &CombinedModel, provenance: Provenance) -> Self {
        Self {
            schema: CHECKPOINT_SCHEMA,
            n: model.n(),
            d: model.d(),
            dhat: model.dhat(),
            mu: model.mu(),
            w: model.weights().to_vec(),
            xhat: rows(model.free().as_array()),
            features: rows(model.features().as_array()),
            provenance,
        }
    }

    pub fn to_model(&self) -> Result<CombinedModel, IoError> {
        if self.schema != CHECKPOINT_SCHEMA {
            return Err(IoError::Schema { found: self.schema, expected: CHECKPOINT_SCHEMA });
        }
        if self.w.len() != self.d {
            return Err(IoError::Checkpoint(format!("w has {} entries, d = {}", self.w.len(), self.d)));
        }
        let features = match self.d {
            0 => {
                matrix(&self.features, self.n, 0, "features")?;
                AuxFeatureMatrix::empty(self.n)
            }
            d => AuxFeatureMatrix::new(matrix(&self.features, self.n, d, "features")?)?,
        };
        let free = FreeEmbedding::new(matrix(&self.xhat, self.n, self.dhat, "xhat")?)?;
        Ok(CombinedModel::new(features, WeightVector::from_vec(self.w.clone())?, free, self.mu)?)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("checkpoint serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, IoError> {
        let ckpt: Self = serde_json::from_str(text)?;
        ckpt.to_model()?;
        Ok(ckpt)
    }

    pub fn save(&self, path: &Path) -> Result<(), IoError> {
        write_atomic(path, self.to_json().as_bytes())
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_json(&read_to_string(path)?)
    }
}
