use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{load_features, load_pool, pca_reduce, read_to_string, IoError};
use crate::active::{ActiveConfig, ExperimentData, ExperimentSpec, Method, SyntheticSpec, TrialData};
use crate::model::{AuxFeatureMatrix, DEFAULT_MU};
use crate::optim::FitConfig;

pub const CONFIG_SCHEMA: u32 = 1;

/// Where objects, features and responses come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DataSource {
    /// A fresh ground truth and exhaustive pool per trial.
    Synthetic(SyntheticSpec),
    /// A stored pool (answers queries and is the evaluation set) and
    /// optional feature file. Relative paths resolve against the config.
    Files {
        pool: PathBuf,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        features: Option<PathBuf>,
        /// Reduce features to this many principal components.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        pca_components: Option<usize>,
        #[serde(default)]
        standardize: bool,
    },
}

/// The on-disk experiment description (TOML).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub methods: Vec<Method>,
    pub trials: usize,
    pub rounds: usize,
    pub seed: u64,
    #[serde(default = "default_mu")]
    pub mu: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tackl_dhat: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ckl_dhat: Option<usize>,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default)]
    pub active: ActiveConfig,
    pub data: DataSource,
}

fn default_mu() -> f64 {
    DEFAULT_MU
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let spec = ExperimentSpec::default();
        Self {
            schema: CONFIG_SCHEMA,
            methods: spec.methods,
            trials: spec.trials,
            rounds: spec.rounds,
            seed: spec.seed,
            mu: spec.mu,
            tackl_dhat: None,
            ckl_dhat: None,
            fit: spec.fit,
            active: spec.active,
            data: DataSource::Synthetic(SyntheticSpec::default()),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, IoError> {
        let cfg: Self = toml::from_str(text)?;
        if cfg.schema != CONFIG_SCHEMA {
            return Err(IoError::Schema { found: cfg.schema, expected: CONFIG_SCHEMA });
        }
        if cfg.methods.is_empty() || cfg.trials == 0 {
            return Err(IoError::Config("need at least one method and one trial".into()));
        }
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, IoError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, IoError> {
        Self::from_toml(&read_to_string(path)?)
    }

    /// SHA-256 hex digest of the canonical TOML rendering.
    pub fn hash(&self) -> Result<String, IoError> {
        Ok(hex::encode(Sha256::digest(self.to_toml()?.as_bytes())))
    }

    pub fn spec(&self) -> ExperimentSpec {
        ExperimentSpec {
            methods: self.methods.clone(),
            trials: self.trials,
            rounds: self.rounds,
            seed: self.seed,
            mu: self.mu,
            tackl_dhat: self.tackl_dhat,
            ckl_dhat: self.ckl_dhat,
            fit: self.fit,
            active: self.active,
        }
    }

    /// Loads the data the config points at, resolving relative paths
    /// against `base`.
    pub fn data(&self, base: &Path) -> Result<ExperimentData, IoError> {
        match &self.data {
            DataSource::Synthetic(s) => Ok(ExperimentData::Synthetic(s.clone())),
            DataSource::Files { pool, features, pca_components, standardize } => {
                let pool = load_pool(&base.join(pool))?;
                let features = match features {
                    None => None,
                    Some(p) => {
                        let table = load_features(&base.join(p))?;
                        Some(match pca_components {
                            None => table.matrix,
                            Some(k) => AuxFeatureMatrix::new(
                                pca_reduce(table.matrix.as_array().view(), *k, *standardize)?.projected,
                            )?,
                        })
                    }
                };
                let n = match &features {
                    Some(f) => {
                        if pool.object_count() > f.n() {
                            return Err(IoError::Config(format!(
                                "pool references object {} but only {} feature rows exist",
                                pool.object_count() - 1,
                                f.n()
                            )));
                        }
                        f.n()
                    }
                    None => pool.object_count(),
                };
                Ok(ExperimentData::Fixed(Arc::new(TrialData::from_pool(n, features, pool))))
            }
        }
    }
}
