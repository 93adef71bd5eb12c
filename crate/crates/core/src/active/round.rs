//! The round loop: issue one query per head, collect answers, refit.

use std::collections::{BTreeSet, HashSet};

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::hypotheses::{sample_hypotheses, score_candidates, ScoreStats};
use super::{ActiveConfig, ActiveError, Method, SampleCounts};
use crate::eval::{evaluate, ModelMetrics};
use crate::model::{
    AuxFeatureMatrix, CombinedModel, ModelError, ModelKind, ObjectId, TripletQuery,
    TripletResponse, WeightVector, DEFAULT_MU,
};
use crate::optim::{fit_w_from, fit_xhat_from, random_embedding, FitConfig, FitError, FitReport};
use crate::oracle::Oracle;
use crate::rng::{self, derive_seed, Stream};

/// Everything that determines a learner's behavior. The learner seed
/// drives initialization, selection, hypothesis draws and oracle draws;
/// `fit.seed` is replaced by a value derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub method: Method,
    pub dhat: usize,
    pub mu: f64,
    pub fit: FitConfig,
    pub active: ActiveConfig,
    pub seed: u64,
}

impl LearnerConfig {
    pub fn new(method: Method, dhat: usize, seed: u64) -> Self {
        Self {
            method,
            dhat,
            mu: DEFAULT_MU,
            fit: FitConfig::default(),
            active: ActiveConfig::default(),
            seed,
        }
    }

    fn fit_for(&self, round: usize) -> FitConfig {
        FitConfig {
            seed: derive_seed(self.seed, Stream::Init, &[round as u64]),
            ..self.fit
        }
    }
}

/// The query chosen for one head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadSelection {
    pub query: TripletQuery,
    /// Expected query entropy; absent for random picks.
    pub score: Option<f64>,
    pub stats: ScoreStats,
}

/// Queries issued for one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundPlan {
    pub round: usize,
    pub selections: Vec<HeadSelection>,
    /// Heads with no eligible pair left.
    pub exhausted: Vec<ObjectId>,
}

impl RoundPlan {
    pub fn queries(&self) -> Vec<TripletQuery> {
        self.selections.iter().map(|s| s.query).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.selections.is_empty()
    }
}

/// Summary of a committed round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub responses_added: usize,
    pub responses_seen: usize,
    pub evaluations: usize,
    /// One report per optimizer stage that ran.
    pub fits: Vec<FitReport>,
    pub metrics: Option<ModelMetrics>,
}

/// Learner state between rounds.
#[derive(Debug, Clone)]
pub struct RoundState {
    t: usize,
    responses: Vec<TripletResponse>,
    by_head: Vec<Vec<TripletResponse>>,
    asked: Vec<HashSet<(ObjectId, ObjectId)>>,
    model: CombinedModel,
    history: Vec<RoundRecord>,
    counts: SampleCounts,
}

impl RoundState {
    /// Fresh state for `n` objects. TACKL and the features baseline need
    /// `features`; CKL ignores them.
    pub fn new(
        n: usize,
        features: Option<&AuxFeatureMatrix>,
        learner: &LearnerConfig,
    ) -> Result<Self, ActiveError> {
        if n < 3 {
            return Err(ModelError::TooFewObjects { n, min: 3 }.into());
        }
        learner.fit.validate()?;
        if !(learner.mu > 0.0 && learner.mu.is_finite()) {
            return Err(ModelError::InvalidMu(learner.mu).into());
        }
        let counts = learner.active.resolve(n)?;
        let init = learner.fit_for(0);
        let model = match learner.method.kind() {
            ModelKind::Ckl => {
                if learner.dhat == 0 {
                    return Err(ActiveError::InvalidConfig("CKL needs dhat >= 1".into()));
                }
                CombinedModel::ckl(random_embedding(n, learner.dhat, &init), learner.mu)?
            }
            kind => {
                let features = features.ok_or(FitError::NoFeatures)?;
                if features.d() == 0 {
                    return Err(FitError::NoFeatures.into());
                }
                if features.n() != n {
                    return Err(ModelError::Shape(format!(
                        "{} feature rows for {n} objects",
                        features.n()
                    ))
                    .into());
                }
                if kind == ModelKind::FeaturesOnly {
                    CombinedModel::features_only(features.clone(), learner.mu)?
                } else {
                    CombinedModel::new(
                        features.clone(),
                        WeightVector::ones(features.d()),
                        random_embedding(n, learner.dhat, &init),
                        learner.mu,
                    )?
                }
            }
        };
        Ok(Self {
            t: 0,
            responses: Vec::new(),
            by_head: vec![Vec::new(); n],
            asked: vec![HashSet::new(); n],
            model,
            history: Vec::new(),
            counts,
        })
    }

    /// Rebuilds the state after `rounds.len()` committed rounds, given the
    /// model fitted after the last of them. No fitting is done.
    pub fn restore(
        n: usize,
        features: Option<&AuxFeatureMatrix>,
        learner: &LearnerConfig,
        rounds: &[Vec<TripletResponse>],
        model: CombinedModel,
        history: Vec<RoundRecord>,
    ) -> Result<Self, ActiveError> {
        let mut state = Self::new(n, features, learner)?;
        if model.n() != n || model.d() != state.model.d() || model.dhat() != state.model.dhat() {
            return Err(ModelError::Shape("restored model does not match the learner".into()).into());
        }
        if history.len() != rounds.len() {
            return Err(ActiveError::InvalidConfig(format!(
                "{} history records for {} rounds",
                history.len(),
                rounds.len()
            )));
        }
        for r in rounds.iter().flatten() {
            r.validate(n)?;
            if !state.asked[r.head.0].insert(r.query().pair) {
                return Err(ActiveError::UnexpectedResponse(*r));
            }
            state.by_head[r.head.0].push(*r);
            state.responses.push(*r);
        }
        state.t = rounds.len();
        state.model = model;
        state.history = history;
        Ok(state)
    }

    /// Index of the next round.
    pub fn t(&self) -> usize {
        self.t
    }

    pub fn n(&self) -> usize {
        self.model.n()
    }

    pub fn responses(&self) -> &[TripletResponse] {
        &self.responses
    }

    pub fn head_responses(&self, head: ObjectId) -> &[TripletResponse] {
        &self.by_head[head.0]
    }

    pub fn was_asked(&self, q: &TripletQuery) -> bool {
        self.asked
            .get(q.head.0)
            .is_some_and(|s| s.contains(&q.pair))
    }

    pub fn model(&self) -> &CombinedModel {
        &self.model
    }

    pub fn history(&self) -> &[RoundRecord] {
        &self.history
    }

    pub fn counts(&self) -> &SampleCounts {
        &self.counts
    }

    /// Un-asked pairs for `head` in canonical order.
    fn eligible(
        &self,
        head: ObjectId,
        cfg: &ActiveConfig,
        oracle: Option<&dyn Oracle>,
    ) -> Vec<TripletQuery> {
        let n = self.n();
        let a = head.0;
        let asked = &self.asked[a];
        let mut out = Vec::new();
        for b in 0..n {
            for c in (b + 1)..n {
                if b == a || c == a || asked.contains(&(ObjectId(b), ObjectId(c))) {
                    continue;
                }
                let q = TripletQuery { head, pair: (ObjectId(b), ObjectId(c)) };
                if cfg.pool_restricted && !oracle.is_some_and(|o| o.can_answer(&q)) {
                    continue;
                }
                out.push(q);
            }
        }
        out
    }
}

/// Picks the query for `head` in the state's current round. Round 0 and
/// the random methods draw a uniform un-asked pair; active methods score
/// a random subset of candidates and take the lowest expected entropy,
/// ties going to the earliest pair in canonical order.
pub fn select_query_for_head(
    state: &RoundState,
    learner: &LearnerConfig,
    head: ObjectId,
    oracle: Option<&dyn Oracle>,
) -> Result<HeadSelection, ActiveError> {
    head.checked(state.n())?;
    let eligible = state.eligible(head, &learner.active, oracle);
    if eligible.is_empty() {
        return Err(ActiveError::HeadExhausted(head));
    }
    let t = state.t as u64;
    let mut select_rng = rng::stream(learner.seed, Stream::Select, &[t, head.0 as u64]);
    if state.t == 0 || !learner.method.is_active() {
        let pick = select_rng.random_range(0..eligible.len());
        return Ok(HeadSelection { query: eligible[pick], score: None, stats: ScoreStats::default() });
    }

    let k = state.counts.candidate_pairs_per_head.min(eligible.len());
    let mut picks: Vec<usize> = index::sample(&mut select_rng, eligible.len(), k).into_vec();
    picks.sort_unstable();
    let candidates: Vec<TripletQuery> = picks.into_iter().map(|i| eligible[i]).collect();

    let mut hyp_rng = rng::stream(learner.seed, Stream::Hypotheses, &[t, head.0 as u64]);
    let set = sample_hypotheses(
        &state.model,
        head,
        learner.method.kind(),
        &state.counts,
        learner.active.ckl_hypotheses,
        learner.fit.init_scale,
        &mut hyp_rng,
    )?;
    let mut stats = ScoreStats::default();
    let scores = score_candidates(&set, &state.model, state.head_responses(head), &candidates, &mut stats)?;
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if s.is_nan() {
            return Err(ActiveError::DegeneratePosterior);
        }
        if *s < scores[best] {
            best = i;
        }
    }
    Ok(HeadSelection { query: candidates[best], score: Some(scores[best]), stats })
}

/// Selects one query per head for the current round. Heads run in
/// parallel; each draws from its own streams.
pub fn issue_queries(
    state: &RoundState,
    learner: &LearnerConfig,
    oracle: Option<&dyn Oracle>,
) -> Result<RoundPlan, ActiveError> {
    let results: Vec<Result<HeadSelection, ActiveError>> = (0..state.n())
        .into_par_iter()
        .map(|a| select_query_for_head(state, learner, ObjectId(a), oracle))
        .collect();
    let mut selections = Vec::new();
    let mut exhausted = Vec::new();
    for r in results {
        match r {
            Ok(s) => selections.push(s),
            Err(ActiveError::HeadExhausted(h)) => exhausted.push(h),
            Err(e) => return Err(e),
        }
    }
    Ok(RoundPlan { round: state.t, selections, exhausted })
}

/// Answers every query in `plan`, each from the stream of its round and head.
pub fn answer_plan(
    plan: &RoundPlan,
    learner: &LearnerConfig,
    oracle: &dyn Oracle,
) -> Result<Vec<TripletResponse>, ActiveError> {
    plan.selections
        .iter()
        .map(|s| {
            let mut rng = rng::stream(
                learner.seed,
                Stream::Oracle,
                &[plan.round as u64, s.query.head.0 as u64],
            );
            Ok(oracle.answer(&s.query, &mut rng)?)
        })
        .collect()
}

/// Adds responses to queries from `plan`, refits and evaluates. The
/// state is untouched if anything fails.
pub fn commit_responses(
    state: &mut RoundState,
    learner: &LearnerConfig,
    plan: &RoundPlan,
    responses: &[TripletResponse],
    eval: Option<&[TripletResponse]>,
) -> Result<RoundRecord, ActiveError> {
    if plan.round != state.t {
        return Err(ActiveError::InvalidConfig(format!(
            "plan is for round {} but the state is at round {}",
            plan.round, state.t
        )));
    }
    let issued: BTreeSet<TripletQuery> = plan.queries().into_iter().collect();
    let mut seen = BTreeSet::new();
    for r in responses {
        r.validate(state.n())?;
        let q = r.query();
        if !issued.contains(&q) || !seen.insert(q) {
            return Err(ActiveError::UnexpectedResponse(*r));
        }
    }

    let mut all = state.responses.clone();
    all.extend_from_slice(responses);
    let (model, fits) = if all.is_empty() {
        (state.model.clone(), Vec::new())
    } else {
        refit(state, learner, &all)?
    };
    let metrics = match eval {
        Some(e) => Some(evaluate(&model, e)?),
        None => None,
    };
    let evaluations = plan.selections.iter().map(|s| s.stats.evaluations).sum();

    for r in responses {
        state.by_head[r.head.0].push(*r);
        state.asked[r.head.0].insert(r.query().pair);
    }
    state.responses = all;
    state.model = model;
    let record = RoundRecord {
        round: state.t,
        responses_added: responses.len(),
        responses_seen: state.responses.len(),
        evaluations,
        fits,
        metrics,
    };
    state.history.push(record.clone());
    state.t += 1;
    Ok(record)
}

fn refit(
    state: &RoundState,
    learner: &LearnerConfig,
    all: &[TripletResponse],
) -> Result<(CombinedModel, Vec<FitReport>), ActiveError> {
    let current = &state.model;
    let mu = current.mu();
    let fit = learner.fit_for(state.t + 1);
    let warm = learner.active.warm_start;
    let n = current.n();
    let free_init = || {
        if warm {
            current.free().clone()
        } else {
            random_embedding(n, current.dhat(), &fit)
        }
    };
    match learner.method.kind() {
        ModelKind::FeaturesOnly => Ok((current.clone(), Vec::new())),
        ModelKind::Ckl => {
            let (free, report) =
                fit_xhat_from(current.features(), current.weights(), all, free_init(), mu, &fit)?;
            Ok((CombinedModel::ckl(free, mu)?, vec![report]))
        }
        ModelKind::Tackl => {
            let w_init = if warm {
                current.weights().clone()
            } else {
                WeightVector::ones(current.d())
            };
            let (w, w_report) = fit_w_from(current.features(), all, mu, &w_init, &fit)?;
            let (free, free_report) =
                fit_xhat_from(current.features(), &w, all, free_init(), mu, &fit)?;
            let model = CombinedModel::new(current.features().clone(), w, free, mu)?;
            Ok((model, vec![w_report, free_report]))
        }
    }
}

/// One full round against an automatic oracle.
pub fn run_round(
    state: &mut RoundState,
    learner: &LearnerConfig,
    oracle: &dyn Oracle,
    eval: Option<&[TripletResponse]>,
) -> Result<RoundRecord, ActiveError> {
    let plan = issue_queries(state, learner, Some(oracle))?;
    let responses = answer_plan(&plan, learner, oracle)?;
    commit_responses(state, learner, &plan, &responses, eval)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{exhaustive_pool, generate_ground_truth, AnswerMode, DimSpec, OracleMode, PoolBudget};

    fn setup(n: usize, seed: u64) -> (AuxFeatureMatrix, OracleMode, Vec<TripletResponse>) {
        let dims = vec![DimSpec::uniform(0.0, 1.0); 3];
        let space = generate_ground_truth(n, &dims, seed).unwrap();
        let pool = exhaustive_pool(&space, AnswerMode::Deterministic, seed, PoolBudget::default()).unwrap();
        let features = AuxFeatureMatrix::new(space.points().slice(ndarray::s![.., 0..2]).to_owned()).unwrap();
        let eval = pool.responses();
        (features, OracleMode::Pool(pool), eval)
    }

    fn quick(method: Method, dhat: usize, seed: u64) -> LearnerConfig {
        let mut l = LearnerConfig::new(method, dhat, seed);
        l.fit.max_iters = 200;
        l
    }

    #[test]
    fn rounds_issue_one_query_per_head_without_repeats() {
        let (f, oracle, eval) = setup(8, 1);
        let learner = quick(Method::ATackl, 1, 5);
        let mut state = RoundState::new(8, Some(&f), &learner).unwrap();
        for t in 0..4 {
            let rec = run_round(&mut state, &learner, &oracle, Some(&eval)).unwrap();
            assert_eq!(rec.round, t);
            assert_eq!(rec.responses_added, 8);
            assert_eq!(rec.responses_seen, 8 * (t + 1));
            assert!(rec.metrics.is_some());
            assert_eq!(rec.fits.len(), 2);
        }
        let mut seen = HashSet::new();
        for r in state.responses() {
            assert!(seen.insert(r.query()));
        }
        for a in 0..8 {
            assert_eq!(state.head_responses(ObjectId(a)).len(), 4);
        }
    }

    #[test]
    fn round_zero_is_shared_between_methods() {
        let (f, oracle, _) = setup(7, 2);
        let mut firsts = Vec::new();
        for m in [Method::CklRandom, Method::ACkl, Method::TacklRandom, Method::ATackl] {
            let learner = quick(m, 2, 9);
            let mut state = RoundState::new(7, Some(&f), &learner).unwrap();
            run_round(&mut state, &learner, &oracle, None).unwrap();
            firsts.push(state.responses().to_vec());
        }
        assert!(firsts.windows(2).all(|w| w[0] == w[1]));
    }

    #[test]
    fn heads_exhaust_after_all_pairs() {
        let (f, oracle, _) = setup(4, 3);
        let learner = quick(Method::ATackl, 1, 1);
        let mut state = RoundState::new(4, Some(&f), &learner).unwrap();
        for _ in 0..3 {
            run_round(&mut state, &learner, &oracle, None).unwrap();
        }
        assert_eq!(state.responses().len(), 12);
        let plan = issue_queries(&state, &learner, Some(&oracle)).unwrap();
        assert!(plan.is_empty());
        assert_eq!(plan.exhausted.len(), 4);
        assert!(matches!(
            select_query_for_head(&state, &learner, ObjectId(0), Some(&oracle)),
            Err(ActiveError::HeadExhausted(ObjectId(0)))
        ));
    }

    #[test]
    fn active_selection_reports_work_done() {
        let (f, oracle, _) = setup(9, 4);
        let learner = quick(Method::ACkl, 2, 2);
        let mut state = RoundState::new(9, Some(&f), &learner).unwrap();
        run_round(&mut state, &learner, &oracle, None).unwrap();
        let sel = select_query_for_head(&state, &learner, ObjectId(3), Some(&oracle)).unwrap();
        let c = state.counts();
        assert_eq!(sel.stats.hypotheses, c.ckl_samples);
        assert_eq!(sel.stats.candidates, c.candidate_pairs_per_head.min(27));
        assert_eq!(sel.stats.evaluations, sel.stats.hypotheses * sel.stats.candidates);
        assert!(sel.score.is_some());
        assert!(!state.was_asked(&sel.query));
    }

    #[test]
    fn commit_rejects_unissued_and_duplicate_responses() {
        let (f, oracle, _) = setup(6, 5);
        let learner = quick(Method::TacklRandom, 1, 3);
        let mut state = RoundState::new(6, Some(&f), &learner).unwrap();
        let plan = issue_queries(&state, &learner, Some(&oracle)).unwrap();
        let answers = answer_plan(&plan, &learner, &oracle).unwrap();
        let stray = (0..6)
            .flat_map(|b| (0..6).map(move |c| (b, c)))
            .filter(|&(b, c)| b != 0 && c != 0 && b != c)
            .map(|(b, c)| TripletResponse::from_indices(0, b, c))
            .find(|r| !plan.queries().contains(&r.query()))
            .unwrap();
        let err = commit_responses(&mut state, &learner, &plan, &[stray], None);
        assert!(matches!(err, Err(ActiveError::UnexpectedResponse(_))));
        let dup = [answers[0], answers[0]];
        assert!(commit_responses(&mut state, &learner, &plan, &dup, None).is_err());
        assert_eq!(state.t(), 0);
        assert!(state.responses().is_empty());
        // A partial submission is accepted.
        commit_responses(&mut state, &learner, &plan, &answers[..3], None).unwrap();
        assert_eq!(state.responses().len(), 3);
        assert_eq!(state.t(), 1);
    }

    #[test]
    fn runs_are_reproducible() {
        let (f, oracle, _) = setup(8, 6);
        let run = || {
            let learner = quick(Method::ATackl, 1, 77);
            let mut state = RoundState::new(8, Some(&f), &learner).unwrap();
            for _ in 0..3 {
                run_round(&mut state, &learner, &oracle, None).unwrap();
            }
            (state.responses().to_vec(), state.model().clone())
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn pool_restricted_selection_stays_in_pool() {
        let (f, _, _) = setup(6, 7);
        let mut pool = crate::oracle::ResponsePool::new();
        for a in 0..6 {
            let others: Vec<usize> = (0..6).filter(|&j| j != a).collect();
            pool.insert(TripletResponse::from_indices(a, others[0], others[1]), 1, 0).unwrap();
            pool.insert(TripletResponse::from_indices(a, others[2], others[3]), 1, 0).unwrap();
        }
        let oracle = OracleMode::Pool(pool);
        let mut learner = quick(Method::ATackl, 1, 4);
        learner.active.pool_restricted = true;
        let mut state = RoundState::new(6, Some(&f), &learner).unwrap();
        run_round(&mut state, &learner, &oracle, None).unwrap();
        run_round(&mut state, &learner, &oracle, None).unwrap();
        assert_eq!(state.responses().len(), 12);
        let plan = issue_queries(&state, &learner, Some(&oracle)).unwrap();
        assert!(plan.is_empty());
    }

    #[test]
    fn restored_state_continues_identically() {
        let (f, oracle, _) = setup(7, 9);
        let learner = quick(Method::ATackl, 1, 21);
        let mut live = RoundState::new(7, Some(&f), &learner).unwrap();
        let mut rounds = Vec::new();
        for _ in 0..2 {
            let before = live.responses().len();
            run_round(&mut live, &learner, &oracle, None).unwrap();
            rounds.push(live.responses()[before..].to_vec());
        }
        let restored = RoundState::restore(7, Some(&f), &learner, &rounds, live.model().clone(), live.history().to_vec()).unwrap();
        let a = issue_queries(&live, &learner, None).unwrap();
        let b = issue_queries(&restored, &learner, None).unwrap();
        assert_eq!(a, b);
        let dup = vec![rounds[0].clone(), rounds[0].clone()];
        assert!(RoundState::restore(7, Some(&f), &learner, &dup, live.model().clone(), live.history().to_vec()).is_err());
    }

    #[test]
    fn features_only_never_changes() {
        let (f, oracle, _) = setup(6, 8);
        let learner = quick(Method::FeaturesOnly, 0, 1);
        let mut state = RoundState::new(6, Some(&f), &learner).unwrap();
        let before = state.model().clone();
        run_round(&mut state, &learner, &oracle, None).unwrap();
        assert_eq!(state.model(), &before);
        assert!(RoundState::new(6, None, &learner).is_err());
    }
}
