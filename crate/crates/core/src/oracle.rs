//! Response sources: synthetic ground-truth spaces, stored majority-vote
//! pools, and the [`Oracle`] trait the round loop asks.

use std::collections::btree_map::{self, BTreeMap};

use log::warn;
use ndarray::Array2;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    all_queries, count_all_queries, likelihood_from_distances, AuxFeatureMatrix,
    ModelError, ObjectId, TripletQuery, TripletResponse,
};
use crate::rng::{self, Stream, StreamRng};

/// Exhaustive pools larger than this need an explicit override.
pub const DEFAULT_POOL_BUDGET: u64 = 8_000_000;
const POOL_WARN_ENTRIES: u64 = 1_000_000;

#[derive(Debug, Error)]
pub enum OracleError {
    #[error("query {0} has no recorded response in the pool")]
    PoolMiss(TripletQuery),
    #[error("interactive sessions are answered through the session service")]
    Interactive,
    #[error("invalid dimension spec: {0}")]
    InvalidSpec(String),
    #[error("pool would hold {entries} entries, over the budget of {budget}")]
    BudgetExceeded { entries: u64, budget: u64 },
    #[error("duplicate pool entry for query {0}")]
    DuplicateQuery(TripletQuery),
    #[error("invalid pool entry for {query}: {reason}")]
    InvalidEntry { query: TripletQuery, reason: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixtureComponent {
    pub mean: f64,
    pub stdev: f64,
    pub weight: f64,
}

/// Distribution of one ground-truth dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DimSpec {
    Uniform { lo: f64, hi: f64 },
    NormalMixture { components: Vec<MixtureComponent> },
}

impl DimSpec {
    pub fn uniform(lo: f64, hi: f64) -> Self {
        DimSpec::Uniform { lo, hi }
    }

    /// Equal-weight mixture of normals with a shared standard deviation.
    pub fn mixture(means: &[f64], stdev: f64) -> Self {
        let weight = 1.0 / means.len() as f64;
        DimSpec::NormalMixture {
            components: means
                .iter()
                .map(|&mean| MixtureComponent {
                    mean,
                    stdev,
                    weight,
                })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<(), OracleError> {
        match self {
            DimSpec::Uniform { lo, hi } => {
                if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                    return Err(OracleError::InvalidSpec(format!("uniform({lo}, {hi})")));
                }
            }
            DimSpec::NormalMixture { components } => {
                if components.is_empty() {
                    return Err(OracleError::InvalidSpec("empty mixture".into()));
                }
                let total: f64 = components.iter().map(|c| c.weight).sum();
                if (total - 1.0).abs() > 1e-9 {
                    return Err(OracleError::InvalidSpec(format!(
                        "mixture weights sum to {total}"
                    )));
                }
                for c in components {
                    if !(c.mean.is_finite() && c.stdev >= 0.0 && c.stdev.is_finite() && c.weight >= 0.0) {
                        return Err(OracleError::InvalidSpec(format!("bad component {c:?}")));
                    }
                }
            }
        }
        Ok(())
    }

    fn sample(&self, rng: &mut StreamRng) -> f64 {
        match self {
            DimSpec::Uniform { lo, hi } => {
                if lo == hi {
                    *lo
                } else {
                    rng.random_range(*lo..*hi)
                }
            }
            DimSpec::NormalMixture { components } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut chosen = &components[components.len() - 1];
                for c in components {
                    acc += c.weight;
                    if u < acc {
                        chosen = c;
                        break;
                    }
                }
                if chosen.stdev == 0.0 {
                    chosen.mean
                } else {
                    Normal::new(chosen.mean, chosen.stdev)
                        .expect("validated stdev")
                        .sample(rng)
                }
            }
        }
    }
}

/// Three uniform(0, 1) dimensions followed by three normal mixtures with
/// means in `[0, 1]` and standard deviation 0.1.
pub fn default_synthetic_dims() -> Vec<DimSpec> {
    vec![
        DimSpec::uniform(0.0, 1.0),
        DimSpec::uniform(0.0, 1.0),
        DimSpec::uniform(0.0, 1.0),
        DimSpec::mixture(&[0.2, 0.8], 0.1),
        DimSpec::mixture(&[0.1, 0.5, 0.9], 0.1),
        DimSpec::mixture(&[0.3, 0.7], 0.1),
    ]
}

/// Ground-truth perceptual space: one point per object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthSpace {
    points: Vec<Vec<f64>>,
    pub specs: Vec<DimSpec>,
    pub seed: u64,
}

impl GroundTruthSpace {
    /// Wraps explicit points, e.g. loaded from a file.
    pub fn from_points(points: Array2<f64>) -> Result<Self, OracleError> {
        if points.ncols() == 0 {
            return Err(OracleError::InvalidSpec("ground truth needs a dimension".into()));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(OracleError::InvalidSpec("non-finite ground-truth coordinate".into()));
        }
        Ok(Self {
            points: points.outer_iter().map(|r| r.to_vec()).collect(),
            specs: Vec::new(),
            seed: 0,
        })
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn dim(&self) -> usize {
        self.points.first().map_or(0, Vec::len)
    }

    pub fn points(&self) -> Array2<f64> {
        let flat: Vec<f64> = self.points.iter().flatten().copied().collect();
        Array2::from_shape_vec((self.n(), self.dim()), flat).expect("rectangular points")
    }

    pub fn point(&self, i: ObjectId) -> &[f64] {
        &self.points[i.0]
    }

    pub fn sq_dist(&self, i: ObjectId, j: ObjectId) -> f64 {
        let (a, b) = (&self.points[i.0], &self.points[j.0]);
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
    }
}

/// Samples `n` points, each dimension independently from its spec.
pub fn generate_ground_truth(
    n: usize,
    specs: &[DimSpec],
    seed: u64,
) -> Result<GroundTruthSpace, OracleError> {
    if n < 3 {
        return Err(ModelError::TooFewObjects { n, min: 3 }.into());
    }
    if specs.is_empty() {
        return Err(OracleError::InvalidSpec("at least one dimension required".into()));
    }
    for s in specs {
        s.validate()?;
    }
    let mut points = vec![vec![0.0; specs.len()]; n];
    for (k, spec) in specs.iter().enumerate() {
        let mut rng = rng::stream(seed, Stream::Generate, &[k as u64]);
        for row in points.iter_mut() {
            row[k] = spec.sample(&mut rng);
        }
    }
    Ok(GroundTruthSpace {
        points,
        specs: specs.to_vec(),
        seed,
    })
}

/// How a ground-truth space answers a query.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum AnswerMode {
    /// The nearer pair member wins; exact ties are coin flips.
    Deterministic,
    /// `(a, b, c)` is returned with the triplet likelihood under the truth.
    Probabilistic { mu: f64 },
}

fn answer_from_space(
    space: &GroundTruthSpace,
    mode: AnswerMode,
    q: &TripletQuery,
    rng: &mut StreamRng,
) -> TripletResponse {
    let (b, c) = q.pair;
    let d_ab = space.sq_dist(q.head, b);
    let d_ac = space.sq_dist(q.head, c);
    let b_wins = match mode {
        AnswerMode::Deterministic => {
            if d_ab < d_ac {
                true
            } else if d_ac < d_ab {
                false
            } else {
                rng.random_bool(0.5)
            }
        }
        AnswerMode::Probabilistic { mu } => {
            rng.random::<f64>() < likelihood_from_distances(mu, d_ab, d_ac)
        }
    };
    let closer = if b_wins { b } else { c };
    q.answer(closer).expect("closer is a pair member")
}

/// Something that answers triplet queries.
pub trait Oracle: Sync {
    fn answer(&self, q: &TripletQuery, rng: &mut StreamRng) -> Result<TripletResponse, OracleError>;

    /// Whether [`Oracle::answer`] can succeed for `q`; pool-restricted
    /// selection only considers such queries.
    fn can_answer(&self, _q: &TripletQuery) -> bool {
        true
    }
}

/// The supported response sources.
#[derive(Debug, Clone)]
pub enum OracleMode {
    DeterministicGroundTruth(GroundTruthSpace),
    ProbabilisticGroundTruth { space: GroundTruthSpace, mu: f64 },
    Pool(ResponsePool),
    /// Answers come from a person through the session service.
    InteractiveSession,
}

pub fn answer_query(
    mode: &OracleMode,
    q: &TripletQuery,
    rng: &mut StreamRng,
) -> Result<TripletResponse, OracleError> {
    match mode {
        OracleMode::DeterministicGroundTruth(space) => {
            q.validate(space.n())?;
            Ok(answer_from_space(space, AnswerMode::Deterministic, q, rng))
        }
        OracleMode::ProbabilisticGroundTruth { space, mu } => {
            q.validate(space.n())?;
            Ok(answer_from_space(space, AnswerMode::Probabilistic { mu: *mu }, q, rng))
        }
        OracleMode::Pool(pool) => pool.answer(q, rng),
        OracleMode::InteractiveSession => Err(OracleError::Interactive),
    }
}

impl Oracle for OracleMode {
    fn answer(&self, q: &TripletQuery, rng: &mut StreamRng) -> Result<TripletResponse, OracleError> {
        answer_query(self, q, rng)
    }

    fn can_answer(&self, q: &TripletQuery) -> bool {
        match self {
            OracleMode::Pool(pool) => pool.contains(q),
            OracleMode::InteractiveSession => false,
            _ => true,
        }
    }
}

/// A recorded answer with its vote counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PoolEntry {
    pub response: TripletResponse,
    pub votes_for: u32,
    pub votes_against: u32,
    /// The winner was drawn by coin flip from an even split or exact tie.
    pub tie_broken: bool,
}

/// Answered queries keyed by canonical query.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ResponsePool {
    entries: BTreeMap<TripletQuery, PoolEntry>,
}

impl ResponsePool {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(
        &mut self,
        response: TripletResponse,
        votes_for: u32,
        votes_against: u32,
    ) -> Result<(), OracleError> {
        let query = response.query();
        if votes_for < 1 || votes_for < votes_against {
            return Err(OracleError::InvalidEntry {
                query,
                reason: format!("votes {votes_for}-{votes_against} do not favour the stored answer"),
            });
        }
        match self.entries.entry(query) {
            btree_map::Entry::Occupied(_) => Err(OracleError::DuplicateQuery(query)),
            btree_map::Entry::Vacant(slot) => {
                slot.insert(PoolEntry {
                    response,
                    votes_for,
                    votes_against,
                    tie_broken: votes_for == votes_against,
                });
                Ok(())
            }
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, q: &TripletQuery) -> bool {
        self.entries.contains_key(q)
    }

    pub fn get(&self, q: &TripletQuery) -> Option<&PoolEntry> {
        self.entries.get(q)
    }

    /// Entries in canonical query order.
    pub fn iter(&self) -> impl Iterator<Item = (&TripletQuery, &PoolEntry)> {
        self.entries.iter()
    }

    /// Winning responses in canonical query order.
    pub fn responses(&self) -> Vec<TripletResponse> {
        self.entries.values().map(|e| e.response).collect()
    }

    /// Largest object id referenced plus one.
    pub fn object_count(&self) -> usize {
        self.entries
            .keys()
            .map(|q| q.head.0.max(q.pair.1 .0) + 1)
            .max()
            .unwrap_or(0)
    }

    pub fn agreement(&self) -> AgreementStats {
        let mut stats = AgreementStats::default();
        for e in self.entries.values() {
            stats.queries += 1;
            if e.votes_against == 0 {
                stats.full += 1;
            } else if e.votes_for > e.votes_against {
                stats.partial += 1;
            } else {
                stats.tied += 1;
            }
        }
        stats
    }

    fn from_sorted(entries: Vec<(TripletQuery, PoolEntry)>) -> Self {
        Self {
            entries: entries.into_iter().collect(),
        }
    }
}

impl Oracle for ResponsePool {
    fn answer(&self, q: &TripletQuery, _rng: &mut StreamRng) -> Result<TripletResponse, OracleError> {
        self.get(q).map(|e| e.response).ok_or(OracleError::PoolMiss(*q))
    }

    fn can_answer(&self, q: &TripletQuery) -> bool {
        self.contains(q)
    }
}

/// How often voters agreed on each query.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AgreementStats {
    pub queries: usize,
    /// Unanimous queries.
    pub full: usize,
    /// Strict majority without unanimity.
    pub partial: usize,
    /// Even splits decided by coin flip.
    pub tied: usize,
}

impl AgreementStats {
    pub fn full_fraction(&self) -> f64 {
        self.full as f64 / self.queries.max(1) as f64
    }

    pub fn partial_fraction(&self) -> f64 {
        self.partial as f64 / self.queries.max(1) as f64
    }

    pub fn tied_fraction(&self) -> f64 {
        self.tied as f64 / self.queries.max(1) as f64
    }
}

/// Limit on exhaustive pool size.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolBudget {
    pub max_entries: u64,
    pub allow_over_budget: bool,
}

impl Default for PoolBudget {
    fn default() -> Self {
        Self {
            max_entries: DEFAULT_POOL_BUDGET,
            allow_over_budget: false,
        }
    }
}

/// Answers every canonical query over the space's objects. Deterministic
/// answers carry votes 1–0; each head draws coin flips from its own stream.
pub fn exhaustive_pool(
    space: &GroundTruthSpace,
    mode: AnswerMode,
    seed: u64,
    budget: PoolBudget,
) -> Result<ResponsePool, OracleError> {
    let n = space.n();
    let entries = count_all_queries(n)?;
    if entries > budget.max_entries && !budget.allow_over_budget {
        return Err(OracleError::BudgetExceeded {
            entries,
            budget: budget.max_entries,
        });
    }
    if entries > POOL_WARN_ENTRIES {
        warn!("building an exhaustive pool with {entries} entries");
    }
    let per_head: Vec<Vec<(TripletQuery, PoolEntry)>> = (0..n)
        .into_par_iter()
        .map(|a| {
            let mut rng = rng::stream(seed, Stream::Oracle, &[a as u64]);
            let mut out = Vec::with_capacity((n - 1) * (n - 2) / 2);
            for b in 0..n {
                for c in (b + 1)..n {
                    if a == b || a == c {
                        continue;
                    }
                    let q = TripletQuery {
                        head: ObjectId(a),
                        pair: (ObjectId(b), ObjectId(c)),
                    };
                    let tie = space.sq_dist(q.head, q.pair.0) == space.sq_dist(q.head, q.pair.1);
                    let response = answer_from_space(space, mode, &q, &mut rng);
                    out.push((
                        q,
                        PoolEntry {
                            response,
                            votes_for: 1,
                            votes_against: 0,
                            tie_broken: tie && mode == AnswerMode::Deterministic,
                        },
                    ));
                }
            }
            out
        })
        .collect();
    Ok(ResponsePool::from_sorted(per_head.into_iter().flatten().collect()))
}

/// Majority vote over raw responses, grouped by canonical query. Even
/// splits are decided by a coin flip seeded per query and flagged.
pub fn aggregate_votes(
    raw: &[TripletResponse],
    seed: u64,
) -> Result<(ResponsePool, AgreementStats), OracleError> {
    let mut tallies: BTreeMap<TripletQuery, (u32, u32)> = BTreeMap::new();
    for r in raw {
        let q = r.query();
        let t = tallies.entry(q).or_default();
        if r.closer == q.pair.0 {
            t.0 += 1;
        } else {
            t.1 += 1;
        }
    }
    let mut pool = ResponsePool::new();
    for (q, (first, second)) in tallies {
        let first_wins = match first.cmp(&second) {
            std::cmp::Ordering::Greater => true,
            std::cmp::Ordering::Less => false,
            std::cmp::Ordering::Equal => {
                let mut rng = rng::stream(
                    seed,
                    Stream::TieBreak,
                    &[q.head.0 as u64, q.pair.0 .0 as u64, q.pair.1 .0 as u64],
                );
                rng.random_bool(0.5)
            }
        };
        let (closer, votes_for, votes_against) = if first_wins {
            (q.pair.0, first, second)
        } else {
            (q.pair.1, second, first)
        };
        let response = q.answer(closer).expect("pair member");
        pool.insert(response, votes_for, votes_against)?;
    }
    let stats = pool.agreement();
    Ok((pool, stats))
}

/// Auxiliary features: the chosen ground-truth columns followed by
/// `noise_dims` freshly sampled noise columns.
pub fn make_aux_features(
    space: &GroundTruthSpace,
    true_dims: &[usize],
    noise_dims: usize,
    noise_spec: &DimSpec,
    seed: u64,
) -> Result<AuxFeatureMatrix, OracleError> {
    if let Some(&bad) = true_dims.iter().find(|&&k| k >= space.dim()) {
        return Err(OracleError::InvalidSpec(format!(
            "ground-truth dimension {bad} out of range for {} dims",
            space.dim()
        )));
    }
    noise_spec.validate()?;
    let n = space.n();
    let d = true_dims.len() + noise_dims;
    let mut out = Array2::zeros((n, d));
    for (col, &k) in true_dims.iter().enumerate() {
        for i in 0..n {
            out[[i, col]] = space.points[i][k];
        }
    }
    for j in 0..noise_dims {
        let mut rng = rng::stream(seed, Stream::Noise, &[j as u64]);
        for i in 0..n {
            out[[i, true_dims.len() + j]] = noise_spec.sample(&mut rng);
        }
    }
    Ok(AuxFeatureMatrix::new(out)?)
}

/// The strictly nearer pair member under the ground truth, if any.
pub fn ground_truth_winner(space: &GroundTruthSpace, q: &TripletQuery) -> Option<ObjectId> {
    let d_b = space.sq_dist(q.head, q.pair.0);
    let d_c = space.sq_dist(q.head, q.pair.1);
    match d_b.partial_cmp(&d_c) {
        Some(std::cmp::Ordering::Less) => Some(q.pair.0),
        Some(std::cmp::Ordering::Greater) => Some(q.pair.1),
        _ => None,
    }
}

/// Convenience: all canonical queries over `n` objects.
pub fn canonical_queries(n: usize) -> Vec<TripletQuery> {
    all_queries(n).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_seeded_and_validated() {
        let a = generate_ground_truth(20, &default_synthetic_dims(), 5).unwrap();
        let b = generate_ground_truth(20, &default_synthetic_dims(), 5).unwrap();
        let c = generate_ground_truth(20, &default_synthetic_dims(), 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.points, c.points);
        assert_eq!(a.dim(), 6);
        assert!(generate_ground_truth(2, &default_synthetic_dims(), 0).is_err());
        let bad = DimSpec::NormalMixture {
            components: vec![MixtureComponent { mean: 0.0, stdev: 0.1, weight: 0.4 }],
        };
        assert!(generate_ground_truth(5, &[bad], 0).is_err());
        assert!(generate_ground_truth(5, &[DimSpec::uniform(1.0, 0.0)], 0).is_err());
    }

    #[test]
    fn degenerate_space_answers_by_coin_flip() {
        let space = generate_ground_truth(4, &[DimSpec::uniform(0.0, 0.0)], 1).unwrap();
        assert!(space.points.iter().all(|p| p[0] == 0.0));
        let pool = exhaustive_pool(&space, AnswerMode::Deterministic, 3, PoolBudget::default()).unwrap();
        assert!(pool.iter().all(|(_, e)| e.tie_broken));
        let firsts = pool.iter().filter(|(q, e)| e.response.closer == q.pair.0).count();
        assert!(firsts > 0 && firsts < pool.len());
    }

    #[test]
    fn deterministic_answer_prefers_duplicate_point() {
        let pts = ndarray::array![[0.0, 1.0], [0.0, 1.0], [3.0, 3.0]];
        let mode = OracleMode::DeterministicGroundTruth(GroundTruthSpace::from_points(pts).unwrap());
        let q = TripletQuery::new(ObjectId(0), ObjectId(1), ObjectId(2)).unwrap();
        let mut rng = rng::stream(0, Stream::Oracle, &[]);
        assert_eq!(answer_query(&mode, &q, &mut rng).unwrap(), TripletResponse::from_indices(0, 1, 2));
    }

    #[test]
    fn probabilistic_answers_split_evenly_on_ties() {
        let pts = ndarray::array![[0.0], [1.0], [-1.0]];
        let mode = OracleMode::ProbabilisticGroundTruth {
            space: GroundTruthSpace::from_points(pts).unwrap(),
            mu: 1e-4,
        };
        let q = TripletQuery::new(ObjectId(0), ObjectId(1), ObjectId(2)).unwrap();
        let mut rng = rng::stream(11, Stream::Oracle, &[]);
        let hits = (0..10_000)
            .filter(|_| answer_query(&mode, &q, &mut rng).unwrap().closer == ObjectId(1))
            .count();
        assert!((hits as f64 / 10_000.0 - 0.5).abs() < 0.03);
    }

    #[test]
    fn pool_answers_and_misses() {
        let mut pool = ResponsePool::new();
        pool.insert(TripletResponse::from_indices(0, 1, 2), 2, 1).unwrap();
        let mut rng = rng::stream(0, Stream::Oracle, &[]);
        let q = TripletQuery::new(ObjectId(0), ObjectId(2), ObjectId(1)).unwrap();
        assert_eq!(pool.answer(&q, &mut rng).unwrap(), TripletResponse::from_indices(0, 1, 2));
        let miss = TripletQuery::new(ObjectId(1), ObjectId(0), ObjectId(2)).unwrap();
        assert!(matches!(pool.answer(&miss, &mut rng), Err(OracleError::PoolMiss(_))));
        assert!(!OracleMode::Pool(pool.clone()).can_answer(&miss));
        assert!(matches!(
            pool.insert(TripletResponse::from_indices(0, 2, 1), 1, 0),
            Err(OracleError::DuplicateQuery(_))
        ));
        assert!(pool.insert(TripletResponse::from_indices(1, 0, 2), 1, 2).is_err());
        assert!(matches!(
            answer_query(&OracleMode::InteractiveSession, &q, &mut rng),
            Err(OracleError::Interactive)
        ));
    }

    #[test]
    fn exhaustive_pool_sizes_and_budget() {
        let space = generate_ground_truth(3, &default_synthetic_dims(), 0).unwrap();
        assert_eq!(exhaustive_pool(&space, AnswerMode::Deterministic, 0, PoolBudget::default()).unwrap().len(), 3);
        let space = generate_ground_truth(30, &default_synthetic_dims(), 0).unwrap();
        let tight = PoolBudget { max_entries: 100, allow_over_budget: false };
        assert!(matches!(
            exhaustive_pool(&space, AnswerMode::Deterministic, 0, tight),
            Err(OracleError::BudgetExceeded { entries: 12180, budget: 100 })
        ));
        let forced = PoolBudget { allow_over_budget: true, ..tight };
        assert_eq!(exhaustive_pool(&space, AnswerMode::Deterministic, 0, forced).unwrap().len(), 12180);
    }

    #[test]
    fn votes_aggregate_by_majority() {
        let r = TripletResponse::from_indices;
        let raw = vec![
            // 3-0
            r(0, 1, 2), r(0, 1, 2), r(0, 1, 2),
            // 2-1 toward 3
            r(1, 3, 2), r(1, 2, 3), r(1, 3, 2),
            // 1-1
            r(2, 0, 1), r(2, 1, 0),
        ];
        let (pool, stats) = aggregate_votes(&raw, 4).unwrap();
        assert_eq!(pool.len(), 3);
        let e = pool.get(&r(0, 1, 2).query()).unwrap();
        assert_eq!((e.response, e.votes_for, e.votes_against), (r(0, 1, 2), 3, 0));
        let e = pool.get(&r(1, 3, 2).query()).unwrap();
        assert_eq!((e.response, e.votes_for, e.votes_against), (r(1, 3, 2), 2, 1));
        let e = pool.get(&r(2, 0, 1).query()).unwrap();
        assert!(e.tie_broken);
        assert_eq!((e.votes_for, e.votes_against), (1, 1));
        assert_eq!(stats, AgreementStats { queries: 3, full: 1, partial: 1, tied: 1 });
    }

    #[test]
    fn agreement_fractions_match_vote_mix() {
        // 82 unanimous queries and 18 decided 2-1
        let mut raw = Vec::new();
        for (i, q) in all_queries(8).take(100).enumerate() {
            let win = q.answer(q.pair.0).unwrap();
            raw.extend([win, win]);
            raw.push(if i < 82 { win } else { win.flipped() });
        }
        let (_, stats) = aggregate_votes(&raw, 0).unwrap();
        assert_eq!(stats.queries, 100);
        assert_eq!(stats.full_fraction(), 0.82);
        assert_eq!(stats.partial_fraction(), 0.18);
    }

    #[test]
    fn aux_features_select_truth_and_add_noise() {
        let space = generate_ground_truth(10, &default_synthetic_dims(), 2).unwrap();
        let x = make_aux_features(&space, &[0, 3, 4], 3, &DimSpec::uniform(0.0, 1.0), 9).unwrap();
        assert_eq!(x.d(), 6);
        for i in 0..10 {
            assert_eq!(x.row(i)[1], space.points[i][3]);
        }
        let noise_only = make_aux_features(&space, &[], 2, &DimSpec::uniform(0.0, 1.0), 9).unwrap();
        assert_eq!(noise_only.d(), 2);
        assert!(make_aux_features(&space, &[6], 0, &DimSpec::uniform(0.0, 1.0), 0).is_err());
        assert!(make_aux_features(&space, &[], 0, &DimSpec::uniform(0.0, 1.0), 0).is_err());
    }

    #[test]
    fn winner_helper_matches_distances() {
        let space = generate_ground_truth(6, &default_synthetic_dims(), 1).unwrap();
        for q in canonical_queries(6) {
            let w = ground_truth_winner(&space, &q).unwrap();
            let other = if w == q.pair.0 { q.pair.1 } else { q.pair.0 };
            assert!(space.sq_dist(q.head, w) < space.sq_dist(q.head, other));
        }
    }
}
