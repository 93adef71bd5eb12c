//! Maximum-likelihood fitting.
//!
//! The weight fit maximizes the parametric log-likelihood over `w ≥ 0` by
//! projected gradient ascent; the free-embedding fit maximizes the combined
//! log-likelihood over `xhat` with `w` held fixed. Both run full-batch
//! ascent with a backtracking step: a trial step is shrunk by
//! `step_decay` until the objective does not decrease, so every objective
//! trace is non-decreasing.

use ndarray::{Array1, Array2};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{
    AuxFeatureMatrix, CombinedModel, FreeEmbedding, ModelError, Representation, TripletResponse,
    WeightVector,
};
use crate::rng::{self, Stream};

const MAX_BACKTRACKS: usize = 60;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("non-finite objective or gradient at iteration {iteration}")]
    NonFinite { iteration: usize },
    #[error("the weight fit needs at least one feature column")]
    NoFeatures,
    #[error("no responses to fit")]
    NoResponses,
    #[error("invalid fit configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub max_iters: usize,
    pub step_size: f64,
    /// Backtracking shrink factor. Each iteration starts from `step_size`.
    pub step_decay: f64,
    pub grad_tol: f64,
    pub obj_tol: f64,
    pub init_scale: f64,
    pub seed: u64,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            max_iters: 2000,
            step_size: 1.0,
            step_decay: 0.5,
            grad_tol: 1e-5,
            obj_tol: 1e-8,
            init_scale: 0.1,
            seed: 0,
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if self.max_iters < 1 {
            return Err(FitError::InvalidConfig("max_iters must be at least 1".into()));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(FitError::InvalidConfig("step_size must be positive".into()));
        }
        if !(self.step_decay > 0.0 && self.step_decay <= 1.0) {
            return Err(FitError::InvalidConfig("step_decay must lie in (0, 1]".into()));
        }
        if self.grad_tol < 0.0 || self.obj_tol < 0.0 {
            return Err(FitError::InvalidConfig("tolerances must be nonnegative".into()));
        }
        if !(self.init_scale > 0.0 && self.init_scale.is_finite()) {
            return Err(FitError::InvalidConfig("init_scale must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradTol,
    ObjTol,
    MaxIters,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub iterations_used: usize,
    pub final_objective: f64,
    pub objective_trace: Vec<f64>,
    pub converged_by: StopReason,
}

impl FitReport {
    fn trivial(objective: f64) -> Self {
        Self {
            iterations_used: 0,
            final_objective: objective,
            objective_trace: vec![objective],
            converged_by: StopReason::GradTol,
        }
    }
}

/// Reports from the two stages of a TACKL fit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TacklReports {
    pub weights: FitReport,
    pub free: FitReport,
}

/// Per-term derivative of `log(mu + D_ac) - log(2 mu + D_ac + D_ab)` with
/// respect to `D_ab` and `D_ac`.
#[inline]
fn term_partials(mu: f64, d_ab: f64, d_ac: f64) -> (f64, f64) {
    let s = 2.0 * mu + (d_ab + d_ac);
    (-1.0 / s, 1.0 / (mu + d_ac) - 1.0 / s)
}

#[inline]
fn term_value(mu: f64, d_ab: f64, d_ac: f64) -> f64 {
    (mu + d_ac).ln() - (2.0 * mu + (d_ab + d_ac)).ln()
}

fn validate_responses(responses: &[TripletResponse], n: usize) -> Result<(), FitError> {
    for r in responses {
        r.validate(n)?;
    }
    Ok(())
}

/// Squared per-feature differences `(x_a^k - x_b^k)^2` and
/// `(x_a^k - x_c^k)^2`, one row per response.
struct FeatureDeltas {
    ab: Array2<f64>,
    ac: Array2<f64>,
}

impl FeatureDeltas {
    fn new(features: &AuxFeatureMatrix, responses: &[TripletResponse]) -> Self {
        let (m, d) = (responses.len(), features.d());
        let mut ab = Array2::zeros((m, d));
        let mut ac = Array2::zeros((m, d));
        for (t, r) in responses.iter().enumerate() {
            let (xa, xb, xc) = (
                features.row(r.head.0),
                features.row(r.closer.0),
                features.row(r.farther.0),
            );
            for k in 0..d {
                ab[[t, k]] = (xa[k] - xb[k]).powi(2);
                ac[[t, k]] = (xa[k] - xc[k]).powi(2);
            }
        }
        Self { ab, ac }
    }

    /// Parametric distances `(D_ab, D_ac)` of response `t` under `w`.
    #[inline]
    fn distances(&self, t: usize, w: &[f64]) -> (f64, f64) {
        let (ab, ac) = (self.ab.row(t), self.ac.row(t));
        let mut d_ab = 0.0;
        let mut d_ac = 0.0;
        for (k, wk) in w.iter().enumerate() {
            let w2 = wk * wk;
            d_ab += w2 * ab[k];
            d_ac += w2 * ac[k];
        }
        (d_ab, d_ac)
    }

    fn objective(&self, w: &[f64], mu: f64) -> f64 {
        (0..self.ab.nrows())
            .map(|t| {
                let (d_ab, d_ac) = self.distances(t, w);
                term_value(mu, d_ab, d_ac)
            })
            .sum()
    }

    fn gradient(&self, w: &[f64], mu: f64) -> Vec<f64> {
        let mut g = vec![0.0; w.len()];
        for t in 0..self.ab.nrows() {
            let (d_ab, d_ac) = self.distances(t, w);
            let (g_ab, g_ac) = term_partials(mu, d_ab, d_ac);
            let (ab, ac) = (self.ab.row(t), self.ac.row(t));
            for (k, gk) in g.iter_mut().enumerate() {
                *gk += 2.0 * w[k] * (g_ab * ab[k] + g_ac * ac[k]);
            }
        }
        g
    }
}

/// Analytic gradient of the parametric log-likelihood with respect to `w`.
pub fn grad_log_likelihood_w(
    features: &AuxFeatureMatrix,
    w: &WeightVector,
    responses: &[TripletResponse],
    mu: f64,
) -> Result<Array1<f64>, FitError> {
    check_shapes(features, w)?;
    validate_responses(responses, features.n())?;
    let deltas = FeatureDeltas::new(features, responses);
    Ok(Array1::from(deltas.gradient(&w.to_vec(), mu)))
}

fn check_shapes(features: &AuxFeatureMatrix, w: &WeightVector) -> Result<(), FitError> {
    if features.d() != w.len() {
        return Err(ModelError::Shape(format!(
            "{} feature columns but {} weights",
            features.d(),
            w.len()
        ))
        .into());
    }
    Ok(())
}

/// Free-block objective with the parametric distances precomputed.
struct FreeObjective<'a> {
    responses: &'a [TripletResponse],
    fixed: Vec<(f64, f64)>,
    mu: f64,
    n: usize,
    dhat: usize,
}

impl<'a> FreeObjective<'a> {
    fn new(
        features: &AuxFeatureMatrix,
        w: &WeightVector,
        responses: &'a [TripletResponse],
        dhat: usize,
        mu: f64,
    ) -> Self {
        let deltas = FeatureDeltas::new(features, responses);
        let w = w.to_vec();
        let fixed = (0..responses.len()).map(|t| deltas.distances(t, &w)).collect();
        Self {
            responses,
            fixed,
            mu,
            n: features.n(),
            dhat,
        }
    }

    #[inline]
    fn free_dist(&self, x: &[f64], i: usize, j: usize) -> f64 {
        let (xi, xj) = (&x[i * self.dhat..(i + 1) * self.dhat], &x[j * self.dhat..(j + 1) * self.dhat]);
        xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum()
    }

    fn objective(&self, x: &[f64]) -> f64 {
        self.responses
            .iter()
            .zip(&self.fixed)
            .map(|(r, &(p_ab, p_ac))| {
                let d_ab = p_ab + self.free_dist(x, r.head.0, r.closer.0);
                let d_ac = p_ac + self.free_dist(x, r.head.0, r.farther.0);
                term_value(self.mu, d_ab, d_ac)
            })
            .sum()
    }

    fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let dh = self.dhat;
        let mut g = vec![0.0; self.n * dh];
        for (r, &(p_ab, p_ac)) in self.responses.iter().zip(&self.fixed) {
            let (a, b, c) = (r.head.0, r.closer.0, r.farther.0);
            let d_ab = p_ab + self.free_dist(x, a, b);
            let d_ac = p_ac + self.free_dist(x, a, c);
            let (g_ab, g_ac) = term_partials(self.mu, d_ab, d_ac);
            for k in 0..dh {
                let diff_ab = x[a * dh + k] - x[b * dh + k];
                let diff_ac = x[a * dh + k] - x[c * dh + k];
                g[a * dh + k] += 2.0 * (g_ab * diff_ab + g_ac * diff_ac);
                g[b * dh + k] -= 2.0 * g_ab * diff_ab;
                g[c * dh + k] -= 2.0 * g_ac * diff_ac;
            }
        }
        g
    }
}

/// Analytic gradient of the combined log-likelihood with respect to every
/// free coordinate, `w` held fixed.
pub fn grad_log_likelihood_xhat(
    features: &AuxFeatureMatrix,
    w: &WeightVector,
    free: &FreeEmbedding,
    responses: &[TripletResponse],
    mu: f64,
) -> Result<Array2<f64>, FitError> {
    check_shapes(features, w)?;
    if free.n() != features.n() {
        return Err(ModelError::Shape("free embedding and features disagree on n".into()).into());
    }
    validate_responses(responses, features.n())?;
    let obj = FreeObjective::new(features, w, responses, free.dim(), mu);
    let x: Vec<f64> = free.as_array().iter().copied().collect();
    Ok(Array2::from_shape_vec((free.n(), free.dim()), obj.gradient(&x))
        .expect("gradient shape matches embedding"))
}

/// Projected gradient ascent with backtracking. `project` must be
/// idempotent; `None` means unconstrained.
fn ascend(
    mut x: Vec<f64>,
    objective: impl Fn(&[f64]) -> f64,
    gradient: impl Fn(&[f64]) -> Vec<f64>,
    project: Option<fn(&mut [f64])>,
    cfg: &FitConfig,
) -> Result<(Vec<f64>, FitReport), FitError> {
    cfg.validate()?;
    if let Some(p) = project {
        p(&mut x);
    }
    let mut f = objective(&x);
    if !f.is_finite() {
        return Err(FitError::NonFinite { iteration: 0 });
    }
    let mut trace = vec![f];
    let mut step;
    let mut candidate = vec![0.0; x.len()];
    let mut iterations = 0;
    let mut stop = StopReason::MaxIters;

    while iterations < cfg.max_iters {
        let g = gradient(&x);
        if g.iter().any(|v| !v.is_finite()) {
            return Err(FitError::NonFinite {
                iteration: iterations,
            });
        }
        let g_norm = x
            .iter()
            .zip(&g)
            .map(|(&xi, &gi)| {
                // at an active bound, a descent component is not a feasible direction
                if project.is_some() && xi <= 0.0 && gi < 0.0 {
                    0.0
                } else {
                    gi.abs()
                }
            })
            .fold(0.0_f64, f64::max);
        if g_norm < cfg.grad_tol {
            stop = StopReason::GradTol;
            break;
        }

        iterations += 1;
        step = cfg.step_size;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for ((c, xi), gi) in candidate.iter_mut().zip(&x).zip(&g) {
                *c = xi + step * gi;
            }
            if let Some(p) = project {
                p(&mut candidate);
            }
            let fc = objective(&candidate);
            if fc.is_finite() && fc >= f {
                accepted = Some(fc);
                break;
            }
            step *= cfg.step_decay;
        }
        let Some(fc) = accepted else {
            stop = StopReason::ObjTol;
            break;
        };
        let improvement = fc - f;
        std::mem::swap(&mut x, &mut candidate);
        f = fc;
        trace.push(f);
        if improvement < cfg.obj_tol {
            stop = StopReason::ObjTol;
            break;
        }
    }

    Ok((
        x,
        FitReport {
            iterations_used: iterations,
            final_objective: f,
            objective_trace: trace,
            converged_by: stop,
        },
    ))
}

fn project_nonnegative(x: &mut [f64]) {
    for v in x {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
}

/// Fits `w ≥ 0` from the all-ones start.
pub fn fit_w(
    features: &AuxFeatureMatrix,
    responses: &[TripletResponse],
    mu: f64,
    cfg: &FitConfig,
) -> Result<(WeightVector, FitReport), FitError> {
    fit_w_from(features, responses, mu, &WeightVector::ones(features.d()), cfg)
}

/// Fits `w ≥ 0` starting from `init`.
pub fn fit_w_from(
    features: &AuxFeatureMatrix,
    responses: &[TripletResponse],
    mu: f64,
    init: &WeightVector,
    cfg: &FitConfig,
) -> Result<(WeightVector, FitReport), FitError> {
    if features.d() == 0 {
        return Err(FitError::NoFeatures);
    }
    if responses.is_empty() {
        return Err(FitError::NoResponses);
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ModelError::InvalidMu(mu).into());
    }
    check_shapes(features, init)?;
    validate_responses(responses, features.n())?;
    let deltas = FeatureDeltas::new(features, responses);
    let (w, report) = ascend(
        init.to_vec(),
        |w| deltas.objective(w, mu),
        |w| deltas.gradient(w, mu),
        Some(project_nonnegative),
        cfg,
    )?;
    Ok((WeightVector::from_vec(w)?, report))
}

/// Zero-centered normal initialization with standard deviation
/// `cfg.init_scale`, seeded from `cfg.seed`.
pub fn random_embedding(n: usize, dhat: usize, cfg: &FitConfig) -> FreeEmbedding {
    let mut rng = rng::stream(cfg.seed, Stream::Init, &[n as u64, dhat as u64]);
    let normal = Normal::new(0.0, cfg.init_scale).expect("positive init scale");
    let data: Vec<f64> = (0..n * dhat).map(|_| normal.sample(&mut rng)).collect();
    FreeEmbedding::new(Array2::from_shape_vec((n, dhat), data).expect("shape"))
        .expect("finite draws")
}

/// Fits the free block with `w` fixed, from a random start.
pub fn fit_xhat(
    features: &AuxFeatureMatrix,
    w: &WeightVector,
    responses: &[TripletResponse],
    dhat: usize,
    mu: f64,
    cfg: &FitConfig,
) -> Result<(FreeEmbedding, FitReport), FitError> {
    cfg.validate()?;
    let init = random_embedding(features.n(), dhat, cfg);
    fit_xhat_from(features, w, responses, init, mu, cfg)
}

/// Fits the free block with `w` fixed, from `init`.
pub fn fit_xhat_from(
    features: &AuxFeatureMatrix,
    w: &WeightVector,
    responses: &[TripletResponse],
    init: FreeEmbedding,
    mu: f64,
    cfg: &FitConfig,
) -> Result<(FreeEmbedding, FitReport), FitError> {
    check_shapes(features, w)?;
    if init.n() != features.n() {
        return Err(ModelError::Shape("initial embedding and features disagree on n".into()).into());
    }
    if !(mu > 0.0 && mu.is_finite()) {
        return Err(ModelError::InvalidMu(mu).into());
    }
    validate_responses(responses, features.n())?;
    let dhat = init.dim();
    let obj = FreeObjective::new(features, w, responses, dhat, mu);
    if dhat == 0 {
        let f = obj.objective(&[]);
        if !f.is_finite() {
            return Err(FitError::NonFinite { iteration: 0 });
        }
        return Ok((init, FitReport::trivial(f)));
    }
    let n = init.n();
    let x0: Vec<f64> = init.into_array().iter().copied().collect();
    let (x, report) = ascend(x0, |x| obj.objective(x), |x| obj.gradient(x), None, cfg)?;
    let free = FreeEmbedding::new(Array2::from_shape_vec((n, dhat), x).expect("shape"))?;
    Ok((free, report))
}

/// Plain CKL: the free-block fit with no auxiliary features.
pub fn fit_ckl(
    responses: &[TripletResponse],
    n: usize,
    dhat: usize,
    mu: f64,
    cfg: &FitConfig,
) -> Result<(FreeEmbedding, FitReport), FitError> {
    if n == 0 || dhat == 0 {
        return Err(FitError::InvalidConfig("CKL needs n >= 1 and dhat >= 1".into()));
    }
    fit_xhat(&AuxFeatureMatrix::empty(n), &WeightVector::ones(0), responses, dhat, mu, cfg)
}

/// Two-stage fit: weights first, then the free block with the weights fixed.
pub fn fit_tackl(
    features: &AuxFeatureMatrix,
    responses: &[TripletResponse],
    dhat: usize,
    mu: f64,
    cfg: &FitConfig,
) -> Result<(CombinedModel, TacklReports), FitError> {
    let (w, weights) = fit_w(features, responses, mu, cfg)?;
    let (free, free_report) = fit_xhat(features, &w, responses, dhat, mu, cfg)?;
    let model = CombinedModel::new(features.clone(), w, free, mu)?;
    Ok((
        model,
        TacklReports {
            weights,
            free: free_report,
        },
    ))
}

/// Warm-started two-stage refit from an existing model.
pub fn refit_tackl(
    model: &CombinedModel,
    responses: &[TripletResponse],
    cfg: &FitConfig,
) -> Result<(CombinedModel, TacklReports), FitError> {
    let mu = model.mu();
    let (w, weights) = fit_w_from(model.features(), responses, mu, model.weights(), cfg)?;
    let (free, free_report) =
        fit_xhat_from(model.features(), &w, responses, model.free().clone(), mu, cfg)?;
    let model = CombinedModel::new(model.features().clone(), w, free, mu)?;
    Ok((
        model,
        TacklReports {
            weights,
            free: free_report,
        },
    ))
}

/// Combined-mode objective of `model`, the quantity the free-block fit maximizes.
pub fn combined_objective(model: &CombinedModel, responses: &[TripletResponse]) -> Result<f64, FitError> {
    Ok(model.log_likelihood(responses, Representation::Combined)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TripletResponse;
    use ndarray::array;
    use rand::Rng;

    fn rand_features(n: usize, d: usize, seed: u64) -> AuxFeatureMatrix {
        let mut rng = rng::stream(seed, Stream::Generate, &[]);
        let data = (0..n * d).map(|_| rng.random_range(-1.0..1.0)).collect();
        AuxFeatureMatrix::new(Array2::from_shape_vec((n, d), data).unwrap()).unwrap()
    }

    fn rand_responses(n: usize, m: usize, seed: u64) -> Vec<TripletResponse> {
        let mut rng = rng::stream(seed, Stream::Oracle, &[]);
        (0..m)
            .map(|_| loop {
                let (a, b, c) = (
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                    rng.random_range(0..n),
                );
                if a != b && a != c && b != c {
                    break TripletResponse::from_indices(a, b, c);
                }
            })
            .collect()
    }

    #[test]
    fn empty_responses_give_zero_gradients() {
        let x = rand_features(5, 3, 1);
        let w = WeightVector::ones(3);
        assert!(grad_log_likelihood_w(&x, &w, &[], 1e-4).unwrap().iter().all(|&g| g == 0.0));
        let free = random_embedding(5, 2, &FitConfig::default());
        let g = grad_log_likelihood_xhat(&x, &w, &free, &[], 1e-4).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_feature_column_has_zero_weight_gradient() {
        let mut x = rand_features(6, 3, 2).into_array();
        x.column_mut(1).fill(0.7);
        let x = AuxFeatureMatrix::new(x).unwrap();
        let g = grad_log_likelihood_w(&x, &WeightVector::from_vec(vec![1.0, 2.0, 0.5]).unwrap(), &rand_responses(6, 20, 3), 1e-4)
            .unwrap();
        assert_eq!(g[1], 0.0);
        assert!(g[0] != 0.0);
    }

    #[test]
    fn absent_objects_have_zero_gradient_rows() {
        let x = rand_features(8, 2, 4);
        let w = WeightVector::ones(2);
        let free = random_embedding(8, 3, &FitConfig { seed: 9, ..Default::default() });
        let rs = vec![
            TripletResponse::from_indices(0, 1, 2),
            TripletResponse::from_indices(3, 2, 1),
        ];
        let g = grad_log_likelihood_xhat(&x, &w, &free, &rs, 1e-4).unwrap();
        for i in 4..8 {
            assert!(g.row(i).iter().all(|&v| v == 0.0));
        }
        assert!(g.row(0).iter().any(|&v| v != 0.0));
    }

    #[test]
    fn projection_is_identity_on_nonnegative() {
        let mut v = vec![0.0, 1.5, 3.0];
        project_nonnegative(&mut v);
        assert_eq!(v, vec![0.0, 1.5, 3.0]);
        let mut v = vec![-1.0, 2.0];
        project_nonnegative(&mut v);
        assert_eq!(v, vec![0.0, 2.0]);
    }

    #[test]
    fn fit_w_keeps_weights_nonnegative_and_trace_monotone() {
        let x = rand_features(12, 4, 5);
        let rs = rand_responses(12, 80, 6);
        let (w, report) = fit_w(&x, &rs, 1e-4, &FitConfig::default()).unwrap();
        assert!(w.as_array().iter().all(|&v| v >= 0.0));
        assert!(report.objective_trace.windows(2).all(|p| p[1] >= p[0]));
        let init = FeatureDeltas::new(&x, &rs).objective(&[1.0; 4], 1e-4);
        assert!(report.final_objective >= init);
    }

    #[test]
    fn fit_w_leaves_indifferent_weights_untouched() {
        // every object has the same feature row, so no weight changes any distance
        let x = AuxFeatureMatrix::new(Array2::from_elem((5, 2), 0.3)).unwrap();
        let rs = rand_responses(5, 10, 7);
        let (w, report) = fit_w(&x, &rs, 1e-4, &FitConfig::default()).unwrap();
        assert_eq!(w.to_vec(), vec![1.0, 1.0]);
        assert_eq!(report.iterations_used, 0);
        assert_eq!(report.converged_by, StopReason::GradTol);
    }

    #[test]
    fn fit_w_rejects_bad_inputs() {
        let x = rand_features(4, 2, 8);
        assert!(matches!(fit_w(&x, &[], 1e-4, &FitConfig::default()), Err(FitError::NoResponses)));
        assert!(matches!(
            fit_w(&AuxFeatureMatrix::empty(4), &rand_responses(4, 3, 1), 1e-4, &FitConfig::default()),
            Err(FitError::NoFeatures)
        ));
        let bad = FitConfig { max_iters: 0, ..Default::default() };
        assert!(matches!(fit_w(&x, &rand_responses(4, 3, 1), 1e-4, &bad), Err(FitError::InvalidConfig(_))));
    }

    #[test]
    fn fit_xhat_with_zero_dims_reports_parametric_objective() {
        let x = rand_features(6, 2, 10);
        let w = WeightVector::from_vec(vec![0.5, 1.5]).unwrap();
        let rs = rand_responses(6, 15, 11);
        let (free, report) = fit_xhat(&x, &w, &rs, 0, 1e-4, &FitConfig::default()).unwrap();
        assert_eq!(free.dim(), 0);
        let model = CombinedModel::new(x, w, FreeEmbedding::zeros(6, 0), 1e-4).unwrap();
        let expected = model.log_likelihood(&rs, Representation::Parametric).unwrap();
        assert!((report.final_objective - expected).abs() < 1e-12);
    }

    #[test]
    fn free_block_separates_what_duplicate_features_cannot() {
        // objects 0 and 1 share a feature row; responses demand 2 is nearer 0 than 1
        let x = AuxFeatureMatrix::new(array![[0.0], [0.0], [1.0], [2.0]]).unwrap();
        let w = WeightVector::ones(1);
        let rs = vec![
            TripletResponse::from_indices(2, 0, 1),
            TripletResponse::from_indices(0, 2, 1),
            TripletResponse::from_indices(3, 0, 1),
        ];
        let parametric = CombinedModel::new(x.clone(), w.clone(), FreeEmbedding::zeros(4, 0), 1e-4)
            .unwrap()
            .log_likelihood(&rs, Representation::Parametric)
            .unwrap();
        let (_, report) = fit_xhat(&x, &w, &rs, 1, 1e-4, &FitConfig::default()).unwrap();
        assert!(report.final_objective > parametric);
        assert!(report.objective_trace.windows(2).all(|p| p[1] >= p[0]));
    }

    #[test]
    fn ckl_fit_is_deterministic_and_order_independent() {
        let rs = rand_responses(10, 60, 12);
        let cfg = FitConfig { seed: 3, ..Default::default() };
        let (e1, r1) = fit_ckl(&rs, 10, 2, 1e-4, &cfg).unwrap();
        let (e2, r2) = fit_ckl(&rs, 10, 2, 1e-4, &cfg).unwrap();
        assert_eq!(r1.objective_trace, r2.objective_trace);
        assert_eq!(e1, e2);

        let mut reversed = rs.clone();
        reversed.reverse();
        let (_, r3) = fit_ckl(&reversed, 10, 2, 1e-4, &cfg).unwrap();
        assert!((r3.final_objective - r1.final_objective).abs() < 1e-6);
        assert!(fit_ckl(&rs, 10, 0, 1e-4, &cfg).is_err());
    }

    #[test]
    fn ckl_fit_beats_its_random_start() {
        for seed in 0..20 {
            let rs = rand_responses(8, 30, 100 + seed);
            let cfg = FitConfig { seed, ..Default::default() };
            let init = random_embedding(8, 2, &cfg);
            let start = CombinedModel::ckl(init, 1e-4)
                .unwrap()
                .log_likelihood(&rs, Representation::Combined)
                .unwrap();
            let (_, report) = fit_ckl(&rs, 8, 2, 1e-4, &cfg).unwrap();
            assert!((report.objective_trace[0] - start).abs() < 1e-9 * start.abs().max(1.0));
            assert!(report.final_objective >= start);
        }
    }

    #[test]
    fn refit_tackl_warm_starts_from_model() {
        let x = rand_features(8, 2, 13);
        let rs = rand_responses(8, 40, 14);
        let cfg = FitConfig::default();
        let (model, _) = fit_tackl(&x, &rs, 2, 1e-4, &cfg).unwrap();
        let (again, reports) = refit_tackl(&model, &rs, &cfg).unwrap();
        // already converged: the warm start begins where the first fit ended
        let start = model.log_likelihood(&rs, Representation::Parametric).unwrap();
        assert!((reports.weights.objective_trace[0] - start).abs() < 1e-9 * start.abs());
        assert_eq!(again.dhat(), 2);
        assert!(reports.free.objective_trace.windows(2).all(|p| p[1] >= p[0]));
    }
}
