//! File formats: feature tables, PCA, response pools, model checkpoints,
//! experiment configs and result tables. All formats are plain text.

mod checkpoint;
mod config;
mod features;
mod pca;
mod pool;
mod results;

use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::active::ActiveError;
use crate::model::ModelError;
use crate::oracle::OracleError;

pub use checkpoint::{ModelCheckpoint, Provenance, CHECKPOINT_SCHEMA};
pub use config::{DataSource, ExperimentConfig, CONFIG_SCHEMA};
pub use features::{load_features, parse_features, save_features, write_features, FeatureTable};
pub use pca::{pca_reduce, Pca};
pub use pool::{load_pool, parse_pool, save_pool, write_pool};
pub use results::{read_results, results_csv, write_aggregates, write_results};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate object id {id:?}")]
    DuplicateId { id: String, line: usize },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}, column {column}: {value:?} is not a number")]
    NonNumeric {
        line: usize,
        column: usize,
        value: String,
    },
    #[error("no data rows")]
    Empty,
    #[error("k = {k} is out of range 1..={max}")]
    ComponentsOutOfRange { k: usize, max: usize },
    #[error("unsupported schema version {found} (expected {expected})")]
    Schema { found: u32, expected: u32 },
    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),
    #[error("invalid config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlRead(#[from] toml::de::Error),
    #[error(transparent)]
    TomlWrite(#[from] toml::ser::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Active(#[from] ActiveError),
}

pub(crate) fn read_to_string(path: &Path) -> Result<String, IoError> {
    std::fs::read_to_string(path).map_err(|source| IoError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Writes through a temporary sibling and renames, so readers never see
/// a partial file.
pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    let err = |source| IoError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    std::fs::write(&tmp, bytes).map_err(err)?;
    std::fs::rename(&tmp, path).map_err(err)
}
