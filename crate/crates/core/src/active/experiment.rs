//! Multi-trial comparisons of learners on a shared oracle.

use std::sync::Arc;

use log::info;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::round::{run_round, LearnerConfig, RoundState};
use super::{ActiveConfig, ActiveError, Method};
use crate::eval::{aggregate_trials, evaluate, AggregateRow, MetricRecord};
use crate::model::{AuxFeatureMatrix, ModelKind, TripletResponse, DEFAULT_MU};
use crate::optim::FitConfig;
use crate::oracle::{
    default_synthetic_dims, exhaustive_pool, generate_ground_truth, make_aux_features, AnswerMode,
    DimSpec, OracleMode, PoolBudget, ResponsePool,
};
use crate::rng::{derive_seed, Stream};

/// A synthetic ground truth, its auxiliary features, and an exhaustive
/// pool answering every query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n: usize,
    pub dims: Vec<DimSpec>,
    /// Ground-truth columns copied into the auxiliary features.
    pub true_dims: Vec<usize>,
    pub noise_dims: usize,
    pub noise: DimSpec,
    pub answer_mode: AnswerMode,
    pub budget: PoolBudget,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n: 60,
            dims: default_synthetic_dims(),
            true_dims: vec![0, 1, 3],
            noise_dims: 3,
            noise: DimSpec::uniform(0.0, 1.0),
            answer_mode: AnswerMode::Deterministic,
            budget: PoolBudget::default(),
        }
    }
}

/// Objects, oracle and evaluation set for one trial.
#[derive(Debug, Clone)]
pub struct TrialData {
    pub n: usize,
    pub features: Option<AuxFeatureMatrix>,
    pub oracle: OracleMode,
    pub eval: Vec<TripletResponse>,
}

impl TrialData {
    /// A fixed pool that both answers queries and serves as the
    /// evaluation set.
    pub fn from_pool(n: usize, features: Option<AuxFeatureMatrix>, pool: ResponsePool) -> Self {
        let eval = pool.responses();
        Self { n, features, oracle: OracleMode::Pool(pool), eval }
    }
}

#[derive(Debug, Clone)]
pub enum ExperimentData {
    /// A fresh ground truth per trial.
    Synthetic(SyntheticSpec),
    /// The same objects and oracle in every trial.
    Fixed(Arc<TrialData>),
}

impl ExperimentData {
    fn trial(&self, seed: u64, trial: usize) -> Result<Arc<TrialData>, ActiveError> {
        match self {
            ExperimentData::Fixed(data) => Ok(Arc::clone(data)),
            ExperimentData::Synthetic(spec) => {
                let t = [trial as u64];
                let space = generate_ground_truth(spec.n, &spec.dims, derive_seed(seed, Stream::Generate, &t))?;
                let features = make_aux_features(
                    &space,
                    &spec.true_dims,
                    spec.noise_dims,
                    &spec.noise,
                    derive_seed(seed, Stream::Noise, &t),
                )?;
                let pool = exhaustive_pool(
                    &space,
                    spec.answer_mode,
                    derive_seed(seed, Stream::Oracle, &t),
                    spec.budget,
                )?;
                Ok(Arc::new(TrialData::from_pool(spec.n, Some(features), pool)))
            }
        }
    }

    fn is_synthetic(&self) -> bool {
        matches!(self, ExperimentData::Synthetic(_))
    }
}

/// Learners, trial count and shared settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentSpec {
    pub methods: Vec<Method>,
    pub trials: usize,
    /// Rounds after round 0.
    pub rounds: usize,
    pub seed: u64,
    pub mu: f64,
    /// Free dimensions for TACKL; defaults to the feature count.
    pub tackl_dhat: Option<usize>,
    /// Free dimensions for CKL; defaults to 6 on synthetic data, else 5.
    pub ckl_dhat: Option<usize>,
    pub fit: FitConfig,
    pub active: ActiveConfig,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            methods: Method::COMPARED.to_vec(),
            trials: 5,
            rounds: 12,
            seed: 0,
            mu: DEFAULT_MU,
            tackl_dhat: None,
            ckl_dhat: None,
            fit: FitConfig::default(),
            active: ActiveConfig::default(),
        }
    }
}

impl ExperimentSpec {
    /// The learner for `method` in `trial`. Every method in a trial shares
    /// one seed, so round-0 queries and answers coincide.
    pub fn learner(&self, method: Method, trial: usize, data: &TrialData, synthetic: bool) -> LearnerConfig {
        let d = data.features.as_ref().map_or(0, |f| f.d());
        let dhat = match method.kind() {
            ModelKind::Ckl => self.ckl_dhat.unwrap_or(if synthetic { 6 } else { 5 }),
            ModelKind::Tackl => self.tackl_dhat.unwrap_or(d),
            ModelKind::FeaturesOnly => 0,
        };
        LearnerConfig {
            method,
            dhat,
            mu: self.mu,
            fit: self.fit,
            active: self.active,
            seed: derive_seed(self.seed, Stream::Trial, &[trial as u64]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutput {
    /// Sorted by method (in spec order), trial, round.
    pub records: Vec<MetricRecord>,
    pub aggregates: Vec<AggregateRow>,
}

/// Runs every method for `trials` trials of `rounds + 1` rounds each and
/// records metrics after every round.
pub fn run_experiment(spec: &ExperimentSpec, data: &ExperimentData) -> Result<ExperimentOutput, ActiveError> {
    if spec.methods.is_empty() || spec.trials == 0 {
        return Err(ActiveError::InvalidConfig("need at least one method and one trial".into()));
    }
    let trials: Vec<Arc<TrialData>> = (0..spec.trials)
        .map(|t| data.trial(spec.seed, t))
        .collect::<Result<_, _>>()?;
    let jobs: Vec<(usize, usize)> = (0..spec.methods.len())
        .flat_map(|m| (0..spec.trials).map(move |t| (m, t)))
        .collect();
    let synthetic = data.is_synthetic();
    let per_job: Vec<Vec<MetricRecord>> = jobs
        .par_iter()
        .map(|&(m, t)| run_trial(spec, spec.methods[m], t, &trials[t], synthetic))
        .collect::<Result<_, _>>()?;
    let records: Vec<MetricRecord> = per_job.into_iter().flatten().collect();
    let aggregates = aggregate_trials(&records);
    Ok(ExperimentOutput { records, aggregates })
}

fn run_trial(
    spec: &ExperimentSpec,
    method: Method,
    trial: usize,
    data: &TrialData,
    synthetic: bool,
) -> Result<Vec<MetricRecord>, ActiveError> {
    let learner = spec.learner(method, trial, data, synthetic);
    let mut state = RoundState::new(data.n, data.features.as_ref(), &learner)?;
    let mut out = Vec::with_capacity(spec.rounds + 1);
    for _ in 0..=spec.rounds {
        let rec = run_round(&mut state, &learner, &data.oracle, None)?;
        let metrics = evaluate(state.model(), &data.eval)?;
        out.push(MetricRecord::new(method.tag(), trial, rec.round, rec.responses_seen, metrics));
    }
    info!(
        "{method} trial {trial}: final error {:.4}",
        out.last().map_or(f64::NAN, |r| r.error)
    );
    Ok(out)
}
