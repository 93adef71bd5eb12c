//! Model quality metrics and cross-trial aggregation.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::model::{likelihood_from_distances, CombinedModel, ModelError, Representation, TripletResponse};

/// Two-sided confidence level of the reported intervals.
pub const CONFIDENCE_LEVEL: f64 = 0.90;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    Empty,
    #[error(transparent)]
    Model(#[from] ModelError),
}

fn check(model: &CombinedModel, eval: &[TripletResponse]) -> Result<(), EvalError> {
    if eval.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = model.n();
    for r in eval {
        r.validate(n)?;
    }
    Ok(())
}

/// Fraction of responses whose likelihood under `model` is at most 0.5.
/// Exact ties count as errors.
pub fn query_prediction_error(model: &CombinedModel, eval: &[TripletResponse]) -> Result<f64, EvalError> {
    check(model, eval)?;
    let wrong = eval
        .iter()
        .filter(|r| model.likelihood_unchecked(Representation::Combined, r) <= 0.5)
        .count();
    Ok(wrong as f64 / eval.len() as f64)
}

/// Average likelihood assigned to the responses.
pub fn mean_likelihood(model: &CombinedModel, eval: &[TripletResponse]) -> Result<f64, EvalError> {
    check(model, eval)?;
    let total: f64 = eval
        .iter()
        .map(|r| model.likelihood_unchecked(Representation::Combined, r))
        .sum();
    Ok(total / eval.len() as f64)
}

fn distance_ratios(model: &CombinedModel, eval: &[TripletResponse]) -> Vec<f64> {
    let mu = model.mu();
    eval.iter()
        .map(|r| {
            let d_ab = model.sq_dist_unchecked(Representation::Combined, r.head.0, r.closer.0);
            let d_ac = model.sq_dist_unchecked(Representation::Combined, r.head.0, r.farther.0);
            (mu + d_ac) / (mu + d_ab)
        })
        .collect()
}

/// Mean of `(mu + D_ac) / (mu + D_ab)` over responses.
pub fn mean_distance_ratio(model: &CombinedModel, eval: &[TripletResponse]) -> Result<f64, EvalError> {
    check(model, eval)?;
    let ratios = distance_ratios(model, eval);
    Ok(ratios.iter().sum::<f64>() / ratios.len() as f64)
}

/// Median of the same guarded ratio.
pub fn median_distance_ratio(model: &CombinedModel, eval: &[TripletResponse]) -> Result<f64, EvalError> {
    check(model, eval)?;
    Ok(median(distance_ratios(model, eval)))
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

/// All four metrics from one pass over the distances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelMetrics {
    pub error: f64,
    pub mean_likelihood: f64,
    pub mean_ratio: f64,
    pub median_ratio: f64,
}

pub fn evaluate(model: &CombinedModel, eval: &[TripletResponse]) -> Result<ModelMetrics, EvalError> {
    check(model, eval)?;
    let mu = model.mu();
    let mut wrong = 0usize;
    let mut lik = 0.0;
    let mut ratios = Vec::with_capacity(eval.len());
    for r in eval {
        let d_ab = model.sq_dist_unchecked(Representation::Combined, r.head.0, r.closer.0);
        let d_ac = model.sq_dist_unchecked(Representation::Combined, r.head.0, r.farther.0);
        let p = likelihood_from_distances(mu, d_ab, d_ac);
        if p <= 0.5 {
            wrong += 1;
        }
        lik += p;
        ratios.push((mu + d_ac) / (mu + d_ab));
    }
    let m = eval.len() as f64;
    let mean_ratio = ratios.iter().sum::<f64>() / m;
    Ok(ModelMetrics {
        error: wrong as f64 / m,
        mean_likelihood: lik / m,
        mean_ratio,
        median_ratio: median(ratios),
    })
}

/// One evaluated model snapshot.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub method: String,
    pub trial: usize,
    pub round: usize,
    pub responses_seen: usize,
    pub error: f64,
    pub mean_likelihood: f64,
    pub mean_ratio: f64,
    pub median_ratio: f64,
}

impl MetricRecord {
    pub fn new(method: &str, trial: usize, round: usize, responses_seen: usize, m: ModelMetrics) -> Self {
        Self {
            method: method.to_string(),
            trial,
            round,
            responses_seen,
            error: m.error,
            mean_likelihood: m.mean_likelihood,
            mean_ratio: m.mean_ratio,
            median_ratio: m.median_ratio,
        }
    }
}

/// Mean with an optional symmetric confidence half-width.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Absent with fewer than two samples.
    pub half_width: Option<f64>,
}

/// Student-t interval at [`CONFIDENCE_LEVEL`].
pub fn t_interval(samples: &[f64]) -> Summary {
    let k = samples.len();
    let mean = samples.iter().sum::<f64>() / k.max(1) as f64;
    if k < 2 {
        return Summary { mean, half_width: None };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let t = StudentsT::new(0.0, 1.0, (k - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(0.5 + CONFIDENCE_LEVEL / 2.0);
    Summary {
        mean,
        half_width: Some(t * var.sqrt() / (k as f64).sqrt()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub method: String,
    pub round: usize,
    pub trials: usize,
    pub responses_seen: f64,
    pub error: Summary,
    pub mean_likelihood: Summary,
    pub mean_ratio: Summary,
}

/// Per-(method, round) means and intervals across trials, sorted by
/// method then round.
pub fn aggregate_trials(records: &[MetricRecord]) -> Vec<AggregateRow> {
    let mut cells: BTreeMap<(&str, usize), Vec<&MetricRecord>> = BTreeMap::new();
    for r in records {
        cells.entry((r.method.as_str(), r.round)).or_default().push(r);
    }
    cells
        .into_iter()
        .map(|((method, round), rs)| {
            let col = |f: fn(&MetricRecord) -> f64| rs.iter().map(|r| f(r)).collect::<Vec<_>>();
            AggregateRow {
                method: method.to_string(),
                round,
                trials: rs.len(),
                responses_seen: col(|r| r.responses_seen as f64).iter().sum::<f64>() / rs.len() as f64,
                error: t_interval(&col(|r| r.error)),
                mean_likelihood: t_interval(&col(|r| r.mean_likelihood)),
                mean_ratio: t_interval(&col(|r| r.mean_ratio)),
            }
        })
        .collect()
}
