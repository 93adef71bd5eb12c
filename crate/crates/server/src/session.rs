//! One labeling session: a learner, its object set and the round
//! currently waiting for answers. Independent of any transport.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use tackl::active::{
    commit_responses, issue_queries, ActiveConfig, ActiveError, LearnerConfig, Method, RoundPlan,
    RoundRecord, RoundState,
};
use tackl::eval::ModelMetrics;
use tackl::io::pca_reduce;
use tackl::model::{AuxFeatureMatrix, CombinedModel, ModelKind, TripletQuery, TripletResponse, DEFAULT_MU};
use tackl::optim::FitConfig;

use crate::error::SessionError;

/// Free dimensions for CKL when the config leaves them open.
pub const DEFAULT_CKL_DHAT: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectEntry {
    pub label: String,
    /// Image path or URL shown to the labeler.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub features: Option<Vec<f64>>,
}

/// The objects of a session. An object's id is its index in `objects`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub objects: Vec<ObjectEntry>,
}

impl Manifest {
    pub fn n(&self) -> usize {
        self.objects.len()
    }

    /// The feature matrix, if every object has features. Mixed presence
    /// or ragged rows are errors.
    pub fn features(&self) -> Result<Option<AuxFeatureMatrix>, SessionError> {
        let with = self.objects.iter().filter(|o| o.features.is_some()).count();
        if with == 0 {
            return Ok(None);
        }
        if with != self.n() {
            return Err(SessionError::InvalidManifest(format!(
                "{with} of {} objects have features; give all or none",
                self.n()
            )));
        }
        let rows: Vec<Vec<f64>> = self.objects.iter().map(|o| o.features.clone().unwrap_or_default()).collect();
        let d = rows[0].len();
        if let Some(i) = rows.iter().position(|r| r.len() != d) {
            return Err(SessionError::InvalidManifest(format!(
                "object {i} has {} features, object 0 has {d}",
                rows[i].len()
            )));
        }
        if d == 0 {
            return Err(SessionError::InvalidManifest("feature vectors are empty".into()));
        }
        AuxFeatureMatrix::from_rows(&rows)
            .map(Some)
            .map_err(|e| SessionError::InvalidManifest(e.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SessionConfig {
    pub method: Method,
    /// Free dimensions; TACKL defaults to the feature count, CKL to 5.
    pub dhat: Option<usize>,
    pub mu: f64,
    pub seed: u64,
    pub fit: FitConfig,
    pub active: ActiveConfig,
    /// The session finishes after this many committed rounds.
    pub max_rounds: Option<usize>,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            method: Method::ATackl,
            dhat: None,
            mu: DEFAULT_MU,
            seed: 0,
            fit: FitConfig::default(),
            active: ActiveConfig::default(),
            max_rounds: None,
        }
    }
}

impl SessionConfig {
    pub fn learner(&self, d: usize) -> LearnerConfig {
        let dhat = match self.method.kind() {
            ModelKind::Ckl => self.dhat.unwrap_or(DEFAULT_CKL_DHAT),
            ModelKind::Tackl => self.dhat.unwrap_or(d),
            ModelKind::FeaturesOnly => 0,
        };
        LearnerConfig {
            method: self.method,
            dhat,
            mu: self.mu,
            fit: self.fit,
            active: self.active,
            seed: self.seed,
        }
    }
}

/// Body of `POST /sessions`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub manifest: Manifest,
    #[serde(default)]
    pub config: SessionConfig,
    /// Held-out answers used to report metrics after every round.
    #[serde(default)]
    pub evaluation: Vec<TripletResponse>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ready,
    AwaitingResponses,
    Fitting,
    Finished,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ready => "ready",
            Status::AwaitingResponses => "awaiting_responses",
            Status::Fitting => "fitting",
            Status::Finished => "finished",
        }
    }
}

/// The queries of a freshly started round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundQueries {
    pub round: usize,
    pub queries: Vec<TripletQuery>,
}

/// What a batch of responses did to the open round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubmitOutcome {
    pub round: usize,
    pub accepted: usize,
    pub outstanding: Vec<TripletQuery>,
    /// Every query of the round has an answer and the refit has started.
    pub complete: bool,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundSummary {
    pub round: usize,
    pub responses_seen: usize,
    pub metrics: Option<ModelMetrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObjectView {
    pub id: usize,
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub media: Option<String>,
}

/// Body of `GET /sessions/{id}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionSnapshot {
    pub id: u64,
    pub status: Status,
    pub method: Method,
    pub n: usize,
    /// Committed rounds so far; also the index of the next round.
    pub round: usize,
    pub responses_seen: usize,
    /// Queries of the open round, empty when none is open.
    pub queries: Vec<TripletQuery>,
    pub outstanding: Vec<TripletQuery>,
    pub pending: usize,
    pub metrics: Option<ModelMetrics>,
    pub history: Vec<RoundSummary>,
    pub w: Vec<f64>,
    /// Combined embedding projected onto its first two principal axes.
    pub projection: Vec<[f64; 2]>,
    pub objects: Vec<ObjectView>,
    pub last_error: Option<String>,
}

/// A refit detached from its session so it can run without holding the
/// session lock.
#[derive(Debug)]
pub struct FitJob {
    state: RoundState,
    learner: LearnerConfig,
    plan: RoundPlan,
    responses: Vec<TripletResponse>,
    evaluation: Vec<TripletResponse>,
}

#[derive(Debug)]
pub struct FitResult {
    round: usize,
    outcome: Result<(RoundState, Vec<TripletResponse>), ActiveError>,
}

impl FitJob {
    pub fn run(mut self) -> FitResult {
        let round = self.plan.round;
        let eval = (!self.evaluation.is_empty()).then_some(self.evaluation.as_slice());
        let outcome = commit_responses(&mut self.state, &self.learner, &self.plan, &self.responses, eval)
            .map(|_| (self.state, self.responses));
        FitResult { round, outcome }
    }
}

#[derive(Debug)]
pub struct Session {
    id: u64,
    manifest: Manifest,
    config: SessionConfig,
    evaluation: Vec<TripletResponse>,
    features: Option<AuxFeatureMatrix>,
    learner: LearnerConfig,
    state: RoundState,
    status: Status,
    plan: Option<RoundPlan>,
    pending: BTreeMap<TripletQuery, TripletResponse>,
    rounds: Vec<Vec<TripletResponse>>,
    last_error: Option<String>,
}

/// Everything needed to rebuild a session without refitting.
#[derive(Debug, Clone)]
pub struct SessionParts {
    pub id: u64,
    pub request: CreateSession,
    pub rounds: Vec<Vec<TripletResponse>>,
    pub history: Vec<RoundRecord>,
    pub model: CombinedModel,
    pub open_round: Option<Vec<TripletQuery>>,
    pub pending: Vec<TripletResponse>,
    pub finished: bool,
}

impl Session {
    pub fn new(id: u64, request: CreateSession) -> Result<Self, SessionError> {
        let CreateSession { manifest, config, evaluation } = request;
        let n = manifest.n();
        if n < 3 {
            return Err(SessionError::InvalidManifest(format!("need at least 3 objects, got {n}")));
        }
        let features = manifest.features()?;
        if config.active.pool_restricted {
            return Err(SessionError::InvalidConfig(
                "pool_restricted needs a response pool; interactive sessions have none".into(),
            ));
        }
        config.fit.validate().map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        for r in &evaluation {
            r.validate(n).map_err(|e| SessionError::InvalidConfig(format!("evaluation response {r}: {e}")))?;
        }
        let learner = config.learner(features.as_ref().map_or(0, |f| f.d()));
        let state = RoundState::new(n, features.as_ref(), &learner).map_err(|e| SessionError::InvalidConfig(e.to_string()))?;
        Ok(Self {
            id,
            manifest,
            config,
            evaluation,
            features,
            learner,
            state,
            status: Status::Ready,
            plan: None,
            pending: BTreeMap::new(),
            rounds: Vec::new(),
            last_error: None,
        })
    }

    /// Rebuilds a persisted session. An open round is re-issued and must
    /// match the stored queries.
    pub fn restore(parts: SessionParts) -> Result<Self, SessionError> {
        let mut s = Self::new(parts.id, parts.request)?;
        s.state = RoundState::restore(
            s.manifest.n(),
            s.features.as_ref(),
            &s.learner,
            &parts.rounds,
            parts.model,
            parts.history,
        )
        .map_err(|e| SessionError::Storage(format!("session {}: {e}", parts.id)))?;
        s.rounds = parts.rounds;
        if parts.finished {
            s.status = Status::Finished;
            return Ok(s);
        }
        if let Some(stored) = parts.open_round {
            let plan = issue_queries(&s.state, &s.learner, None)?;
            if plan.queries() != stored {
                return Err(SessionError::Storage(format!(
                    "session {}: re-issued round {} does not match the stored queries",
                    parts.id, plan.round
                )));
            }
            s.plan = Some(plan);
            s.status = Status::AwaitingResponses;
            for r in parts.pending {
                if !s.open_queries().contains(&r.query()) || s.pending.insert(r.query(), r).is_some() {
                    return Err(SessionError::Storage(format!("session {}: stray pending response {r}", parts.id)));
                }
            }
            if s.outstanding().is_empty() {
                s.status = Status::Fitting;
            }
        }
        Ok(s)
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn status(&self) -> Status {
        self.status
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    pub fn evaluation(&self) -> &[TripletResponse] {
        &self.evaluation
    }

    pub fn learner(&self) -> &LearnerConfig {
        &self.learner
    }

    pub fn state(&self) -> &RoundState {
        &self.state
    }

    /// Committed responses, one list per round.
    pub fn rounds(&self) -> &[Vec<TripletResponse>] {
        &self.rounds
    }

    pub fn open_queries(&self) -> Vec<TripletQuery> {
        self.plan.as_ref().map(RoundPlan::queries).unwrap_or_default()
    }

    pub fn pending(&self) -> Vec<TripletResponse> {
        self.pending.values().copied().collect()
    }

    fn outstanding(&self) -> Vec<TripletQuery> {
        self.open_queries().into_iter().filter(|q| !self.pending.contains_key(q)).collect()
    }

    fn require(&self, expected: Status, action: &'static str) -> Result<(), SessionError> {
        match self.status {
            s if s == expected => Ok(()),
            Status::Finished => Err(SessionError::Finished(self.id)),
            s => Err(SessionError::InvalidState { action, status: s }),
        }
    }

    fn limit_reached(&self) -> bool {
        self.config.max_rounds.is_some_and(|m| self.state.t() >= m)
    }

    /// Selects the next round's queries.
    pub fn next_round(&mut self) -> Result<RoundQueries, SessionError> {
        self.require(Status::Ready, "start a round")?;
        if self.limit_reached() {
            self.status = Status::Finished;
            return Err(SessionError::Finished(self.id));
        }
        let plan = issue_queries(&self.state, &self.learner, None)?;
        if plan.is_empty() {
            self.status = Status::Finished;
            return Err(SessionError::Finished(self.id));
        }
        let out = RoundQueries { round: plan.round, queries: plan.queries() };
        self.plan = Some(plan);
        self.pending.clear();
        self.status = Status::AwaitingResponses;
        Ok(out)
    }

    /// Records answers for the open round. A batch is accepted or
    /// rejected as a whole. Once every query has an answer the session
    /// moves to `Fitting`; an empty batch retries a failed refit.
    pub fn submit(&mut self, responses: &[TripletResponse]) -> Result<SubmitOutcome, SessionError> {
        self.require(Status::AwaitingResponses, "submit responses")?;
        let issued = self.open_queries();
        let mut batch = BTreeMap::new();
        for r in responses {
            r.validate(self.manifest.n()).map_err(|e| SessionError::InvalidResponse {
                response: *r,
                message: e.to_string(),
            })?;
            let q = r.query();
            if !issued.contains(&q) {
                return Err(SessionError::NotIssued { response: *r, query: q, issued: issued.clone() });
            }
            if self.pending.contains_key(&q) || batch.insert(q, *r).is_some() {
                return Err(SessionError::Duplicate { response: *r, query: q });
            }
        }
        let accepted = batch.len();
        self.pending.extend(batch);
        let outstanding = self.outstanding();
        let complete = outstanding.is_empty();
        if complete {
            self.status = Status::Fitting;
        }
        Ok(SubmitOutcome {
            round: self.state.t(),
            accepted,
            outstanding,
            complete,
            status: self.status,
        })
    }

    /// The refit for a complete round. Responses are committed in the
    /// order their queries were issued.
    pub fn fit_job(&self) -> Result<FitJob, SessionError> {
        self.require(Status::Fitting, "fit")?;
        let plan = self.plan.clone().expect("fitting sessions have an open round");
        let responses = plan.queries().iter().map(|q| self.pending[q]).collect();
        Ok(FitJob {
            state: self.state.clone(),
            learner: self.learner.clone(),
            plan,
            responses,
            evaluation: self.evaluation.clone(),
        })
    }

    /// Applies a finished refit. On failure the answers stay pending and
    /// the round stays open.
    pub fn apply_fit(&mut self, result: FitResult) -> Result<(), SessionError> {
        if self.status != Status::Fitting || result.round != self.state.t() {
            return Err(SessionError::InvalidState { action: "apply a fit", status: self.status });
        }
        match result.outcome {
            Ok((state, responses)) => {
                self.state = state;
                self.rounds.push(responses);
                self.plan = None;
                self.pending.clear();
                self.last_error = None;
                self.status = if self.limit_reached() { Status::Finished } else { Status::Ready };
                Ok(())
            }
            Err(e) => {
                self.status = Status::AwaitingResponses;
                self.last_error = Some(e.to_string());
                Err(SessionError::Fit(e.to_string()))
            }
        }
    }

    /// Submits and, if that completes the round, refits in place.
    pub fn submit_and_fit(&mut self, responses: &[TripletResponse]) -> Result<SubmitOutcome, SessionError> {
        let mut out = self.submit(responses)?;
        if out.complete {
            let job = self.fit_job()?;
            self.apply_fit(job.run())?;
            out.status = self.status;
        }
        Ok(out)
    }

    pub fn snapshot(&self) -> SessionSnapshot {
        let history: Vec<RoundSummary> = self
            .state
            .history()
            .iter()
            .map(|r| RoundSummary { round: r.round, responses_seen: r.responses_seen, metrics: r.metrics })
            .collect();
        SessionSnapshot {
            id: self.id,
            status: self.status,
            method: self.config.method,
            n: self.manifest.n(),
            round: self.state.t(),
            responses_seen: self.state.responses().len(),
            queries: self.open_queries(),
            outstanding: self.outstanding(),
            pending: self.pending.len(),
            metrics: history.last().and_then(|h| h.metrics),
            history,
            w: self.state.model().weights().to_vec(),
            projection: projection(self.state.model()),
            objects: self
                .manifest
                .objects
                .iter()
                .enumerate()
                .map(|(id, o)| ObjectView { id, label: o.label.clone(), media: o.media.clone() })
                .collect(),
            last_error: self.last_error.clone(),
        }
    }
}

/// First two principal coordinates of the combined points, zero padded
/// when fewer than two are available.
pub fn projection(model: &CombinedModel) -> Vec<[f64; 2]> {
    let y = model.combined_points();
    let (n, cols) = y.dim();
    let k = 2.min(cols).min(n.saturating_sub(1));
    let mut out = vec![[0.0; 2]; n];
    if k == 0 {
        return out;
    }
    if let Ok(p) = pca_reduce(y.view(), k, false) {
        for (i, row) in p.projected.rows().into_iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                out[i][j] = *v;
            }
        }
    }
    out
}
