//! Active query selection.
//!
//! Learning proceeds in rounds. Each round issues one query per head
//! object: random pairs in round 0 (and for the random baselines), and in
//! later rounds the candidate pair with the lowest expected query entropy
//! under a Monte-Carlo hypothesis set for that head. Responses are added
//! to the pool and the model is refit before the next round.

mod experiment;
mod hypotheses;
mod round;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::EvalError;
use crate::model::{ModelError, ModelKind, ObjectId};
use crate::optim::FitError;
use crate::oracle::OracleError;

pub use experiment::{
    run_experiment, ExperimentData, ExperimentOutput, ExperimentSpec, SyntheticSpec, TrialData,
};
pub use hypotheses::{
    entropy, expected_query_entropy, posterior_weights, response_probability, sample_hypotheses,
    score_candidates, Hypothesis, HypothesisSet, ScoreStats,
};
pub use round::{
    answer_plan, commit_responses, issue_queries, run_round, select_query_for_head,
    HeadSelection, LearnerConfig, RoundPlan, RoundRecord, RoundState,
};

#[derive(Debug, Error)]
pub enum ActiveError {
    #[error("head {0} has no eligible pairs left")]
    HeadExhausted(ObjectId),
    #[error("hypothesis set is empty")]
    EmptyHypotheses,
    #[error("posterior weights are degenerate")]
    DegeneratePosterior,
    #[error("response head {found} does not match hypothesis head {expected}")]
    WrongHead { expected: ObjectId, found: ObjectId },
    #[error("method {0:?} does not use hypothesis sampling")]
    UnsupportedKind(ModelKind),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("response {0} does not answer a query issued this round")]
    UnexpectedResponse(crate::model::TripletResponse),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// The four learners compared in experiments, plus the unweighted
/// features baseline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    CklRandom,
    ACkl,
    TacklRandom,
    ATackl,
    FeaturesOnly,
}

impl Method {
    pub const COMPARED: [Method; 4] = [
        Method::CklRandom,
        Method::ACkl,
        Method::TacklRandom,
        Method::ATackl,
    ];

    pub fn kind(self) -> ModelKind {
        match self {
            Method::CklRandom | Method::ACkl => ModelKind::Ckl,
            Method::TacklRandom | Method::ATackl => ModelKind::Tackl,
            Method::FeaturesOnly => ModelKind::FeaturesOnly,
        }
    }

    pub fn is_active(self) -> bool {
        matches!(self, Method::ACkl | Method::ATackl)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Method::CklRandom => "ckl-random",
            Method::ACkl => "a-ckl",
            Method::TacklRandom => "tackl-random",
            Method::ATackl => "a-tackl",
            Method::FeaturesOnly => "features-only",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Self> {
        [
            Method::CklRandom,
            Method::ACkl,
            Method::TacklRandom,
            Method::ATackl,
            Method::FeaturesOnly,
        ]
        .into_iter()
        .find(|m| m.tag() == tag)
    }
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.tag())
    }
}

/// Where A-CKL draws its head-position hypotheses from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CklHypotheses {
    /// The current positions of the other objects.
    #[default]
    OtherPositions,
    /// Uniform over the box bounded by the largest free coordinate.
    UniformBox,
}

/// Sampling and selection knobs. Unset counts resolve from `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ActiveConfig {
    pub w_samples: Option<usize>,
    pub xhat_samples: Option<usize>,
    pub ckl_samples: Option<usize>,
    pub candidate_pairs_per_head: Option<usize>,
    pub pool_restricted: bool,
    pub ckl_hypotheses: CklHypotheses,
    /// Refit each round from the previous round's parameters.
    pub warm_start: bool,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            w_samples: None,
            xhat_samples: None,
            ckl_samples: None,
            candidate_pairs_per_head: None,
            pool_restricted: false,
            ckl_hypotheses: CklHypotheses::OtherPositions,
            warm_start: true,
        }
    }
}

/// [`ActiveConfig`] with every count fixed for a given `n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SampleCounts {
    pub w_samples: usize,
    pub xhat_samples: usize,
    pub ckl_samples: usize,
    pub candidate_pairs_per_head: usize,
}

/// Candidate pairs scored per head when not configured.
pub const DEFAULT_CANDIDATE_PAIRS: usize = 50;

impl ActiveConfig {
    /// Defaults: `ceil(sqrt n)` weight draws, `n` free draws, `ceil(n sqrt n)`
    /// CKL draws, and `min(50, (n-1)(n-2)/2)` candidate pairs.
    pub fn resolve(&self, n: usize) -> Result<SampleCounts, ActiveError> {
        let root = (n as f64).sqrt();
        let pairs = (n.saturating_sub(1)) * (n.saturating_sub(2)) / 2;
        let counts = SampleCounts {
            w_samples: self.w_samples.unwrap_or(root.ceil() as usize),
            xhat_samples: self.xhat_samples.unwrap_or(n),
            ckl_samples: self.ckl_samples.unwrap_or((n as f64 * root).ceil() as usize),
            candidate_pairs_per_head: self
                .candidate_pairs_per_head
                .unwrap_or(DEFAULT_CANDIDATE_PAIRS.min(pairs)),
        };
        if counts.w_samples == 0 || counts.xhat_samples == 0 || counts.ckl_samples == 0 {
            return Err(ActiveError::InvalidConfig("sample counts must be at least 1".into()));
        }
        if counts.candidate_pairs_per_head == 0 {
            return Err(ActiveError::InvalidConfig(
                "candidate_pairs_per_head must be at least 1".into(),
            ));
        }
        Ok(counts)
    }
}
