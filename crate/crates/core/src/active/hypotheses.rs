//! Monte-Carlo hypotheses over a head object's parameters and the
//! expected-entropy score built on them.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ActiveError, CklHypotheses, SampleCounts};
use crate::model::{
    likelihood_from_distances, CombinedModel, ModelError, ModelKind, ObjectId, TripletQuery,
    TripletResponse,
};
use crate::rng::StreamRng;

/// One hypothesis: optional weights (falling back to the model's) and a
/// free-block position for the head.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hypothesis<'a> {
    pub weights: Option<&'a [f64]>,
    pub free_head: &'a [f64],
}

/// Hypotheses for one head. A-TACKL sets are the cross product of weight
/// draws and free-position draws, stored factored.
#[derive(Debug, Clone, PartialEq)]
pub struct HypothesisSet {
    head: ObjectId,
    w_draws: Vec<Vec<f64>>,
    free_draws: Vec<Vec<f64>>,
    pairs: Vec<(Option<usize>, usize)>,
}

impl HypothesisSet {
    /// An explicit list of hypotheses.
    pub fn explicit(head: ObjectId, hyps: Vec<(Option<Vec<f64>>, Vec<f64>)>) -> Self {
        let mut w_draws = Vec::new();
        let mut free_draws = Vec::new();
        let mut pairs = Vec::with_capacity(hyps.len());
        for (w, x) in hyps {
            let wi = w.map(|w| {
                w_draws.push(w);
                w_draws.len() - 1
            });
            free_draws.push(x);
            pairs.push((wi, free_draws.len() - 1));
        }
        Self { head, w_draws, free_draws, pairs }
    }

    /// Every (weight draw, free draw) combination, weight-major.
    pub fn cross(head: ObjectId, w_draws: Vec<Vec<f64>>, free_draws: Vec<Vec<f64>>) -> Self {
        let pairs = (0..w_draws.len())
            .flat_map(|wi| (0..free_draws.len()).map(move |xi| (Some(wi), xi)))
            .collect();
        Self { head, w_draws, free_draws, pairs }
    }

    /// Free-position draws only; weights come from the model.
    pub fn free_only(head: ObjectId, free_draws: Vec<Vec<f64>>) -> Self {
        let pairs = (0..free_draws.len()).map(|xi| (None, xi)).collect();
        Self { head, w_draws: Vec::new(), free_draws, pairs }
    }

    pub fn head(&self) -> ObjectId {
        self.head
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn get(&self, i: usize) -> Hypothesis<'_> {
        let (wi, xi) = self.pairs[i];
        Hypothesis {
            weights: wi.map(|wi| self.w_draws[wi].as_slice()),
            free_head: &self.free_draws[xi],
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = Hypothesis<'_>> {
        (0..self.len()).map(|i| self.get(i))
    }

    /// Squared distances from the head to every object, per hypothesis.
    fn distances(&self, model: &CombinedModel) -> Result<DistanceTable, ActiveError> {
        if self.is_empty() {
            return Err(ActiveError::EmptyHypotheses);
        }
        let n = model.n();
        let a = self.head.checked(n)?.0;
        let (d, dhat) = (model.d(), model.dhat());
        for w in &self.w_draws {
            if w.len() != d {
                return Err(ModelError::Shape(format!("weight hypothesis has {} entries, model has {d}", w.len())).into());
            }
            if let Some((index, &value)) = w.iter().enumerate().find(|(_, v)| !(v.is_finite() && **v >= 0.0)) {
                return Err(ModelError::NegativeWeight { index, value }.into());
            }
        }
        for x in &self.free_draws {
            if x.len() != dhat {
                return Err(ModelError::Shape(format!("free hypothesis has {} entries, model has {dhat}", x.len())).into());
            }
            if x.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::NonFinite { row: a, col: 0 }.into());
            }
        }

        let features = model.features();
        let xa = features.row(a);
        let model_w = model.weights().to_vec();
        let param_row = |w: &[f64]| -> Vec<f64> {
            (0..n)
                .map(|j| {
                    let xj = features.row(j);
                    w.iter()
                        .zip(xa.iter().zip(xj.iter()))
                        .map(|(w, (p, q))| {
                            let t = w * (p - q);
                            t * t
                        })
                        .sum()
                })
                .collect()
        };
        let mut param: Vec<Vec<f64>> = self.w_draws.iter().map(|w| param_row(w)).collect();
        param.push(param_row(&model_w));
        let model_row = param.len() - 1;

        let free = model.free();
        let free_rows: Vec<Vec<f64>> = self
            .free_draws
            .iter()
            .map(|x| {
                (0..n)
                    .map(|j| {
                        if j == a {
                            return 0.0;
                        }
                        x.iter().zip(free.row(j).iter()).map(|(p, q)| (p - q) * (p - q)).sum()
                    })
                    .collect()
            })
            .collect();

        let mut table = Vec::with_capacity(self.len() * n);
        for &(wi, xi) in &self.pairs {
            let p = &param[wi.unwrap_or(model_row)];
            let f = &free_rows[xi];
            table.extend(p.iter().zip(f).map(|(p, f)| p + f));
        }
        Ok(DistanceTable { n, mu: model.mu(), d: table })
    }
}

struct DistanceTable {
    n: usize,
    mu: f64,
    d: Vec<f64>,
}

impl DistanceTable {
    fn len(&self) -> usize {
        self.d.len() / self.n
    }

    #[inline]
    fn likelihood(&self, h: usize, closer: usize, farther: usize) -> f64 {
        let row = &self.d[h * self.n..(h + 1) * self.n];
        likelihood_from_distances(self.mu, row[closer], row[farther])
    }

    /// Unnormalized log posterior per hypothesis.
    fn log_weights(&self, head: ObjectId, conditioning: &[TripletResponse]) -> Result<Vec<f64>, ActiveError> {
        for r in conditioning {
            r.validate(self.n)?;
            if r.head != head {
                return Err(ActiveError::WrongHead { expected: head, found: r.head });
            }
        }
        Ok((0..self.len())
            .map(|h| {
                conditioning
                    .iter()
                    .map(|r| self.likelihood(h, r.closer.0, r.farther.0).ln())
                    .sum()
            })
            .collect())
    }
}

/// Normalized log weights (`ln q_h`) from unnormalized logs.
fn normalize_logs(logs: &[f64]) -> Result<Vec<f64>, ActiveError> {
    let max = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return Err(ActiveError::DegeneratePosterior);
    }
    let z: f64 = logs.iter().map(|l| (l - max).exp()).sum();
    let log_z = max + z.ln();
    Ok(logs.iter().map(|l| l - log_z).collect())
}

/// Draws the hypothesis set for `head`.
///
/// A-TACKL: `w_samples` weight vectors with each coordinate uniform on
/// `[0, 2 max w]`, crossed with `xhat_samples` head positions uniform on
/// `[-M, M]` per coordinate (`M` the largest free coordinate magnitude).
/// A-CKL: `ckl_samples` head positions taken from the other objects (or
/// uniform on the box). Zero bounds fall back to `fallback_scale`.
pub fn sample_hypotheses(
    model: &CombinedModel,
    head: ObjectId,
    kind: ModelKind,
    counts: &SampleCounts,
    ckl_mode: CklHypotheses,
    fallback_scale: f64,
    rng: &mut StreamRng,
) -> Result<HypothesisSet, ActiveError> {
    let n = model.n();
    let a = head.checked(n)?.0;
    let dhat = model.dhat();
    let free_bound = nonzero_or(model.free().max_abs(), fallback_scale);
    let uniform_box = |rng: &mut StreamRng, m: usize| -> Vec<Vec<f64>> {
        (0..m)
            .map(|_| (0..dhat).map(|_| rng.random_range(-free_bound..=free_bound)).collect())
            .collect()
    };
    match kind {
        ModelKind::Tackl => {
            let w_max = model.weights().as_array().iter().copied().fold(0.0, f64::max);
            let w_bound = nonzero_or(2.0 * w_max, fallback_scale);
            let d = model.d();
            let w_draws = (0..counts.w_samples)
                .map(|_| (0..d).map(|_| rng.random_range(0.0..=w_bound)).collect())
                .collect();
            let free_draws = uniform_box(rng, counts.xhat_samples);
            Ok(HypothesisSet::cross(head, w_draws, free_draws))
        }
        ModelKind::Ckl => {
            let m = counts.ckl_samples;
            let free_draws = match ckl_mode {
                CklHypotheses::UniformBox => uniform_box(rng, m),
                CklHypotheses::OtherPositions => {
                    if n < 2 {
                        return Err(ModelError::TooFewObjects { n, min: 2 }.into());
                    }
                    let others: Vec<usize> = (0..n).filter(|&j| j != a).collect();
                    let picks: Vec<usize> = if m <= others.len() {
                        index::sample(rng, others.len(), m).into_iter().collect()
                    } else {
                        (0..m).map(|_| rng.random_range(0..others.len())).collect()
                    };
                    picks
                        .into_iter()
                        .map(|p| model.free().row(others[p]).to_vec())
                        .collect()
                }
            };
            Ok(HypothesisSet::free_only(head, free_draws))
        }
        ModelKind::FeaturesOnly => Err(ActiveError::UnsupportedKind(kind)),
    }
}

fn nonzero_or(bound: f64, fallback: f64) -> f64 {
    if bound > 0.0 && bound.is_finite() {
        bound
    } else {
        fallback
    }
}

/// Posterior weights of each hypothesis given the head's past responses.
/// Uniform when `conditioning` is empty.
pub fn posterior_weights(
    set: &HypothesisSet,
    model: &CombinedModel,
    conditioning: &[TripletResponse],
) -> Result<Vec<f64>, ActiveError> {
    let table = set.distances(model)?;
    let logs = normalize_logs(&table.log_weights(set.head, conditioning)?)?;
    Ok(logs.into_iter().map(f64::exp).collect())
}

/// Shannon entropy in nats. Zero weights contribute nothing.
pub fn entropy(weights: &[f64]) -> f64 {
    -weights
        .iter()
        .filter(|&&q| q > 0.0)
        .map(|&q| q * q.ln())
        .sum::<f64>()
}

/// Posterior-mean probability of `response`.
pub fn response_probability(
    set: &HypothesisSet,
    model: &CombinedModel,
    weights: &[f64],
    response: &TripletResponse,
) -> Result<f64, ActiveError> {
    let table = set.distances(model)?;
    if weights.len() != table.len() {
        return Err(ModelError::Shape(format!(
            "{} weights for {} hypotheses",
            weights.len(),
            table.len()
        ))
        .into());
    }
    response.validate(model.n())?;
    if response.head != set.head {
        return Err(ActiveError::WrongHead { expected: set.head, found: response.head });
    }
    Ok(weights
        .iter()
        .enumerate()
        .map(|(h, q)| q * table.likelihood(h, response.closer.0, response.farther.0))
        .sum())
}

/// Work counters for one head's selection.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreStats {
    pub hypotheses: usize,
    pub candidates: usize,
    /// Hypothesis-candidate likelihood evaluations performed.
    pub evaluations: usize,
}

/// Expected posterior entropy after asking `query`:
/// `p H(abc) + (1 - p) H(acb)`.
pub fn expected_query_entropy(
    set: &HypothesisSet,
    model: &CombinedModel,
    conditioning: &[TripletResponse],
    query: &TripletQuery,
) -> Result<f64, ActiveError> {
    let mut stats = ScoreStats::default();
    Ok(score_candidates(set, model, conditioning, std::slice::from_ref(query), &mut stats)?[0])
}

/// Expected query entropy for each candidate, sharing one posterior.
pub fn score_candidates(
    set: &HypothesisSet,
    model: &CombinedModel,
    conditioning: &[TripletResponse],
    candidates: &[TripletQuery],
    stats: &mut ScoreStats,
) -> Result<Vec<f64>, ActiveError> {
    let table = set.distances(model)?;
    let log_q = normalize_logs(&table.log_weights(set.head, conditioning)?)?;
    let q: Vec<f64> = log_q.iter().map(|l| l.exp()).collect();
    stats.hypotheses = table.len();

    let mut scores = Vec::with_capacity(candidates.len());
    for cand in candidates {
        cand.validate(model.n())?;
        if cand.head != set.head {
            return Err(ActiveError::WrongHead { expected: set.head, found: cand.head });
        }
        let (b, c) = (cand.pair.0 .0, cand.pair.1 .0);
        let mut p = 0.0;
        let mut s_abc = 0.0;
        let mut s_acb = 0.0;
        let mut m_abc = 0.0;
        let mut m_acb = 0.0;
        for h in 0..table.len() {
            let p_abc = table.likelihood(h, b, c);
            let p_acb = table.likelihood(h, c, b);
            let (wa, wb) = (q[h] * p_abc, q[h] * p_acb);
            p += wa;
            // Accumulate sum w ln w of the unnormalized posteriors.
            if wa > 0.0 {
                s_abc += wa * (log_q[h] + p_abc.ln());
                m_abc += wa;
            }
            if wb > 0.0 {
                s_acb += wb * (log_q[h] + p_acb.ln());
                m_acb += wb;
            }
        }
        stats.candidates += 1;
        stats.evaluations += table.len();
        // H = ln Z - (sum w ln w) / Z for unnormalized weights with total Z.
        let h_abc = if m_abc > 0.0 { m_abc.ln() - s_abc / m_abc } else { 0.0 };
        let h_acb = if m_acb > 0.0 { m_acb.ln() - s_acb / m_acb } else { 0.0 };
        scores.push(p * h_abc + (1.0 - p) * h_acb);
    }
    Ok(scores)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AuxFeatureMatrix, FreeEmbedding, WeightVector};
    use crate::rng::{stream, Stream};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn small_model() -> CombinedModel {
        let features =
            AuxFeatureMatrix::from_rows(&[vec![0.0, 1.0], vec![0.5, 0.2], vec![1.0, 0.0], vec![0.3, 0.9], vec![0.8, 0.6]])
                .unwrap();
        let free = FreeEmbedding::from_rows(&[
            vec![0.1],
            vec![-0.2],
            vec![0.4],
            vec![0.0],
            vec![-0.5],
        ])
        .unwrap();
        CombinedModel::new(features, WeightVector::from_vec(vec![1.0, 0.5]).unwrap(), free, 1e-4).unwrap()
    }

    fn counts(w: usize, x: usize, ckl: usize) -> SampleCounts {
        SampleCounts { w_samples: w, xhat_samples: x, ckl_samples: ckl, candidate_pairs_per_head: 3 }
    }

    #[test]
    fn uniform_posterior_without_conditioning() {
        let m = small_model();
        let mut rng = stream(1, Stream::Hypotheses, &[]);
        let set = sample_hypotheses(&m, ObjectId(0), ModelKind::Tackl, &counts(3, 4, 1), CklHypotheses::OtherPositions, 0.1, &mut rng).unwrap();
        assert_eq!(set.len(), 12);
        let w = posterior_weights(&set, &m, &[]).unwrap();
        for v in &w {
            assert_abs_diff_eq!(*v, 1.0 / 12.0, epsilon = 1e-15);
        }
        assert_abs_diff_eq!(entropy(&w), (12.0f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn tackl_draws_respect_bounds() {
        let m = small_model();
        let mut rng = stream(2, Stream::Hypotheses, &[]);
        let set = sample_hypotheses(&m, ObjectId(1), ModelKind::Tackl, &counts(5, 7, 1), CklHypotheses::OtherPositions, 0.1, &mut rng).unwrap();
        for h in set.iter() {
            assert!(h.weights.unwrap().iter().all(|&v| (0.0..=2.0).contains(&v)));
            assert!(h.free_head.iter().all(|&v| v.abs() <= 0.5));
        }
    }

    #[test]
    fn ckl_other_positions_is_the_other_objects() {
        let m = small_model();
        let mut rng = stream(3, Stream::Hypotheses, &[]);
        let set = sample_hypotheses(&m, ObjectId(2), ModelKind::Ckl, &counts(1, 1, 4), CklHypotheses::OtherPositions, 0.1, &mut rng).unwrap();
        let mut got: Vec<f64> = set.iter().map(|h| h.free_head[0]).collect();
        got.sort_by(f64::total_cmp);
        assert_eq!(got, vec![-0.5, -0.2, 0.0, 0.1]);
        assert!(set.iter().all(|h| h.weights.is_none()));
        // More draws than objects: sampled with replacement from the others.
        let set = sample_hypotheses(&m, ObjectId(2), ModelKind::Ckl, &counts(1, 1, 9), CklHypotheses::OtherPositions, 0.1, &mut rng).unwrap();
        assert_eq!(set.len(), 9);
        assert!(set.iter().all(|h| h.free_head[0] != 0.4));
    }

    #[test]
    fn features_only_has_no_hypotheses() {
        let m = small_model();
        let mut rng = stream(4, Stream::Hypotheses, &[]);
        let r = sample_hypotheses(&m, ObjectId(0), ModelKind::FeaturesOnly, &counts(1, 1, 1), CklHypotheses::OtherPositions, 0.1, &mut rng);
        assert!(matches!(r, Err(ActiveError::UnsupportedKind(_))));
    }

    #[test]
    fn posterior_matches_direct_product() {
        let m = small_model();
        let set = HypothesisSet::explicit(
            ObjectId(0),
            vec![(Some(vec![1.0, 0.0]), vec![0.3]), (Some(vec![0.0, 2.0]), vec![-0.1]), (None, vec![0.0])],
        );
        let cond = [TripletResponse::from_indices(0, 1, 2), TripletResponse::from_indices(0, 4, 3)];
        let w = posterior_weights(&set, &m, &cond).unwrap();
        // Direct: likelihood products under each hypothesis, normalized.
        let direct: Vec<f64> = set
            .iter()
            .map(|h| {
                let weights = h.weights.map(|w| w.to_vec()).unwrap_or(vec![1.0, 0.5]);
                let dist = |j: usize| {
                    let f = m.features();
                    let p: f64 = (0..2).map(|k| (weights[k] * (f.row(0)[k] - f.row(j)[k])).powi(2)).sum();
                    p + (h.free_head[0] - m.free().row(j)[0]).powi(2)
                };
                cond.iter()
                    .map(|r| {
                        let (dab, dac) = (dist(r.closer.0), dist(r.farther.0));
                        (1e-4 + dac) / (2e-4 + dab + dac)
                    })
                    .product()
            })
            .collect();
        let z: f64 = direct.iter().sum();
        for (a, b) in w.iter().zip(&direct) {
            assert_abs_diff_eq!(*a, b / z, epsilon = 1e-12);
        }
    }

    #[test]
    fn response_probability_is_complementary() {
        let m = small_model();
        let mut rng = stream(5, Stream::Hypotheses, &[]);
        let set = sample_hypotheses(&m, ObjectId(3), ModelKind::Tackl, &counts(3, 5, 1), CklHypotheses::OtherPositions, 0.1, &mut rng).unwrap();
        let cond = [TripletResponse::from_indices(3, 0, 4)];
        let w = posterior_weights(&set, &m, &cond).unwrap();
        let r = TripletResponse::from_indices(3, 1, 2);
        let p = response_probability(&set, &m, &w, &r).unwrap();
        let q = response_probability(&set, &m, &w, &r.flipped()).unwrap();
        assert_abs_diff_eq!(p + q, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn score_matches_explicit_posterior_entropies() {
        let m = small_model();
        let mut rng = stream(6, Stream::Hypotheses, &[]);
        let set = sample_hypotheses(&m, ObjectId(0), ModelKind::Tackl, &counts(2, 3, 1), CklHypotheses::OtherPositions, 0.1, &mut rng).unwrap();
        let cond = vec![TripletResponse::from_indices(0, 3, 4)];
        let q = TripletQuery::new(ObjectId(0), ObjectId(1), ObjectId(2)).unwrap();
        let score = expected_query_entropy(&set, &m, &cond, &q).unwrap();
        let abc = TripletResponse::from_indices(0, 1, 2);
        let w = posterior_weights(&set, &m, &cond).unwrap();
        let p = response_probability(&set, &m, &w, &abc).unwrap();
        let mut with_abc = cond.clone();
        with_abc.push(abc);
        let mut with_acb = cond.clone();
        with_acb.push(abc.flipped());
        let h1 = entropy(&posterior_weights(&set, &m, &with_abc).unwrap());
        let h2 = entropy(&posterior_weights(&set, &m, &with_acb).unwrap());
        assert_abs_diff_eq!(score, p * h1 + (1.0 - p) * h2, epsilon = 1e-12);
    }

    #[test]
    fn score_rejects_other_heads() {
        let m = small_model();
        let set = HypothesisSet::free_only(ObjectId(0), vec![vec![0.0]]);
        let q = TripletQuery::new(ObjectId(1), ObjectId(0), ObjectId(2)).unwrap();
        assert!(matches!(expected_query_entropy(&set, &m, &[], &q), Err(ActiveError::WrongHead { .. })));
        let empty = HypothesisSet::free_only(ObjectId(0), vec![]);
        assert!(matches!(posterior_weights(&empty, &m, &[]), Err(ActiveError::EmptyHypotheses)));
    }

    #[test]
    fn heavy_conditioning_does_not_underflow() {
        let m = small_model();
        let set = HypothesisSet::free_only(ObjectId(0), vec![vec![5.0], vec![-5.0], vec![0.0]]);
        let cond: Vec<_> = (0..5000).map(|i| if i % 2 == 0 { TripletResponse::from_indices(0, 1, 2) } else { TripletResponse::from_indices(0, 2, 1) }).collect();
        let w = posterior_weights(&set, &m, &cond).unwrap();
        assert!(w.iter().all(|v| v.is_finite()));
        assert_abs_diff_eq!(w.iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn entropy_is_bounded(raw in proptest::collection::vec(0.0f64..1.0, 1..40)) {
            let z: f64 = raw.iter().sum();
            prop_assume!(z > 1e-9);
            let w: Vec<f64> = raw.iter().map(|v| v / z).collect();
            let h = entropy(&w);
            prop_assert!(h >= -1e-12);
            prop_assert!(h <= (w.len() as f64).ln() + 1e-12);
        }

        #[test]
        fn scores_are_bounded_by_prior_entropy(seed in 0u64..200, head in 0usize..5) {
            let m = small_model();
            let mut rng = stream(seed, Stream::Hypotheses, &[]);
            let set = sample_hypotheses(&m, ObjectId(head), ModelKind::Tackl, &counts(3, 4, 1), CklHypotheses::OtherPositions, 0.1, &mut rng).unwrap();
            let others: Vec<usize> = (0..5).filter(|&j| j != head).collect();
            let q = TripletQuery::new(ObjectId(head), ObjectId(others[0]), ObjectId(others[2])).unwrap();
            let s = expected_query_entropy(&set, &m, &[], &q).unwrap();
            prop_assert!(s >= -1e-12);
            prop_assert!(s <= (set.len() as f64).ln() + 1e-9);
        }
    }
}
