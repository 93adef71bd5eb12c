//! Objects, triplets and the combined embedding model.
//!
//! Every object `i` is represented by a combined point
//! `y_i = [w_1 x_i^1, ..., w_d x_i^d, xhat_i^1, ..., xhat_i^dhat]`: a
//! nonnegatively weighted copy of its auxiliary features followed by a free
//! embedding. All triplet likelihoods in the crate go through
//! [`CombinedModel::triplet_likelihood`], which evaluates
//!
//! ```text
//! p(a, b, c) = (mu + D_ac) / (2 mu + D_ac + D_ab)
//! ```
//!
//! on whichever [`Representation`] supplies the squared distances. A pure
//! CKL embedding is the degenerate case with zero auxiliary features.

use std::fmt;

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default uniqueness parameter used by every method.
pub const DEFAULT_MU: f64 = 1e-4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("object index {index} out of range for {n} objects")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("triplet ids must be distinct, got ({0}, {1}, {2})")]
    NotDistinct(usize, usize, usize),
    #[error("non-finite value at row {row}, column {col}")]
    NonFinite { row: usize, col: usize },
    #[error("negative weight {value} at index {index}")]
    NegativeWeight { index: usize, value: f64 },
    #[error("auxiliary features need at least one column")]
    NoFeatureColumns,
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("mu must be positive and finite, got {0}")]
    InvalidMu(f64),
    #[error("at least {min} objects required, got {n}")]
    TooFewObjects { n: usize, min: usize },
}

/// Index of an object in a registered object set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub usize);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0
    }

    pub fn checked(self, n: usize) -> Result<Self, ModelError> {
        if self.0 < n {
            Ok(self)
        } else {
            Err(ModelError::IndexOutOfRange { index: self.0, n })
        }
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl From<usize> for ObjectId {
    fn from(i: usize) -> Self {
        ObjectId(i)
    }
}

/// An unanswered query `(a, {b, c})`. The pair is always stored in
/// ascending index order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripletQuery {
    pub head: ObjectId,
    pub pair: (ObjectId, ObjectId),
}

impl TripletQuery {
    pub fn new(head: ObjectId, b: ObjectId, c: ObjectId) -> Result<Self, ModelError> {
        if head == b || head == c || b == c {
            return Err(ModelError::NotDistinct(head.0, b.0, c.0));
        }
        let pair = if b < c { (b, c) } else { (c, b) };
        Ok(Self { head, pair })
    }

    pub fn validate(&self, n: usize) -> Result<(), ModelError> {
        self.head.checked(n)?;
        self.pair.0.checked(n)?;
        self.pair.1.checked(n)?;
        Ok(())
    }

    /// The response asserting `closer` is the more similar pair member.
    pub fn answer(&self, closer: ObjectId) -> Option<TripletResponse> {
        let farther = if closer == self.pair.0 {
            self.pair.1
        } else if closer == self.pair.1 {
            self.pair.0
        } else {
            return None;
        };
        Some(TripletResponse {
            head: self.head,
            closer,
            farther,
        })
    }
}

impl fmt::Display for TripletQuery {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {{{}, {}}})", self.head, self.pair.0, self.pair.1)
    }
}

/// An answered query `(a, b, c)`: `a` is more similar to `b` than to `c`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TripletResponse {
    pub head: ObjectId,
    pub closer: ObjectId,
    pub farther: ObjectId,
}

impl TripletResponse {
    pub fn new(head: ObjectId, closer: ObjectId, farther: ObjectId) -> Result<Self, ModelError> {
        if head == closer || head == farther || closer == farther {
            return Err(ModelError::NotDistinct(head.0, closer.0, farther.0));
        }
        Ok(Self {
            head,
            closer,
            farther,
        })
    }

    /// Shorthand for tests and examples; panics on repeated ids.
    pub fn from_indices(a: usize, b: usize, c: usize) -> Self {
        Self::new(ObjectId(a), ObjectId(b), ObjectId(c)).expect("distinct triplet ids")
    }

    pub fn query(&self) -> TripletQuery {
        let pair = if self.closer < self.farther {
            (self.closer, self.farther)
        } else {
            (self.farther, self.closer)
        };
        TripletQuery {
            head: self.head,
            pair,
        }
    }

    pub fn flipped(&self) -> Self {
        Self {
            head: self.head,
            closer: self.farther,
            farther: self.closer,
        }
    }

    pub fn validate(&self, n: usize) -> Result<(), ModelError> {
        self.head.checked(n)?;
        self.closer.checked(n)?;
        self.farther.checked(n)?;
        Ok(())
    }
}

impl fmt::Display for TripletResponse {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.head, self.closer, self.farther)
    }
}

/// Number of canonical queries `(a, {b, c})` over `n` objects.
pub fn count_all_queries(n: usize) -> Result<u64, ModelError> {
    if n < 3 {
        return Err(ModelError::TooFewObjects { n, min: 3 });
    }
    let n = n as u64;
    Ok(n * (n - 1) * (n - 2) / 2)
}

/// Enumerates all canonical queries in ascending `(head, pair)` order.
pub fn all_queries(n: usize) -> impl Iterator<Item = TripletQuery> {
    (0..n).flat_map(move |a| {
        (0..n).flat_map(move |b| {
            ((b + 1)..n).filter_map(move |c| {
                if a == b || a == c {
                    None
                } else {
                    Some(TripletQuery {
                        head: ObjectId(a),
                        pair: (ObjectId(b), ObjectId(c)),
                    })
                }
            })
        })
    })
}

/// Per-object auxiliary feature vectors, one row per object.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxFeatureMatrix {
    rows: Array2<f64>,
}

impl AuxFeatureMatrix {
    pub fn new(rows: Array2<f64>) -> Result<Self, ModelError> {
        if rows.ncols() == 0 {
            return Err(ModelError::NoFeatureColumns);
        }
        check_finite(&rows)?;
        Ok(Self { rows })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        Self::new(rows_to_array(rows)?)
    }

    /// Zero-column features, used by models without a parametric block.
    pub fn empty(n: usize) -> Self {
        Self {
            rows: Array2::zeros((n, 0)),
        }
    }

    pub fn n(&self) -> usize {
        self.rows.nrows()
    }

    pub fn d(&self) -> usize {
        self.rows.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.rows.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.rows
    }

    pub fn into_array(self) -> Array2<f64> {
        self.rows
    }
}

/// Nonnegative per-feature weights.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Array1<f64>);

impl WeightVector {
    pub fn new(w: Array1<f64>) -> Result<Self, ModelError> {
        for (index, &value) in w.iter().enumerate() {
            if !value.is_finite() {
                return Err(ModelError::NonFinite { row: 0, col: index });
            }
            if value < 0.0 {
                return Err(ModelError::NegativeWeight { index, value });
            }
        }
        Ok(Self(w))
    }

    pub fn from_vec(w: Vec<f64>) -> Result<Self, ModelError> {
        Self::new(Array1::from(w))
    }

    pub fn ones(d: usize) -> Self {
        Self(Array1::ones(d))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_array(&self) -> &Array1<f64> {
        &self.0
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.to_vec()
    }
}

/// Free (nonparametric) embedding coordinates, one row per object.
#[derive(Debug, Clone, PartialEq)]
pub struct FreeEmbedding(Array2<f64>);

impl FreeEmbedding {
    pub fn new(rows: Array2<f64>) -> Result<Self, ModelError> {
        check_finite(&rows)?;
        Ok(Self(rows))
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, ModelError> {
        Self::new(rows_to_array(rows)?)
    }

    pub fn zeros(n: usize, dhat: usize) -> Self {
        Self(Array2::zeros((n, dhat)))
    }

    pub fn n(&self) -> usize {
        self.0.nrows()
    }

    pub fn dim(&self) -> usize {
        self.0.ncols()
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.0.row(i)
    }

    pub fn as_array(&self) -> &Array2<f64> {
        &self.0
    }

    pub fn into_array(self) -> Array2<f64> {
        self.0
    }

    /// Largest absolute coordinate over all objects.
    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, v| m.max(v.abs()))
    }
}

/// Which family a model belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    /// Free embedding only.
    Ckl,
    /// Weighted auxiliary features followed by a free embedding.
    Tackl,
    /// Auxiliary features with unit weights and no free block.
    FeaturesOnly,
}

/// The block of each combined point that supplies distances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    /// Weighted features `w ∘ x_i` only.
    Parametric,
    /// Free coordinates `xhat_i` only.
    Free,
    /// The full concatenation `y_i`.
    Combined,
}

/// Features, weights, free embedding and `mu`: everything needed to
/// evaluate a triplet likelihood.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedModel {
    features: AuxFeatureMatrix,
    weights: WeightVector,
    free: FreeEmbedding,
    mu: f64,
}

impl CombinedModel {
    pub fn new(
        features: AuxFeatureMatrix,
        weights: WeightVector,
        free: FreeEmbedding,
        mu: f64,
    ) -> Result<Self, ModelError> {
        if features.n() != free.n() {
            return Err(ModelError::Shape(format!(
                "features have {} rows but free embedding has {}",
                features.n(),
                free.n()
            )));
        }
        if features.d() != weights.len() {
            return Err(ModelError::Shape(format!(
                "features have {} columns but {} weights were given",
                features.d(),
                weights.len()
            )));
        }
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(ModelError::InvalidMu(mu));
        }
        Ok(Self {
            features,
            weights,
            free,
            mu,
        })
    }

    /// A pure CKL model: zero auxiliary features.
    pub fn ckl(free: FreeEmbedding, mu: f64) -> Result<Self, ModelError> {
        let n = free.n();
        Self::new(AuxFeatureMatrix::empty(n), WeightVector::ones(0), free, mu)
    }

    /// Unit-weighted features with no free block.
    pub fn features_only(features: AuxFeatureMatrix, mu: f64) -> Result<Self, ModelError> {
        let (n, d) = (features.n(), features.d());
        Self::new(features, WeightVector::ones(d), FreeEmbedding::zeros(n, 0), mu)
    }

    pub fn n(&self) -> usize {
        self.free.n()
    }

    pub fn d(&self) -> usize {
        self.features.d()
    }

    pub fn dhat(&self) -> usize {
        self.free.dim()
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn features(&self) -> &AuxFeatureMatrix {
        &self.features
    }

    pub fn weights(&self) -> &WeightVector {
        &self.weights
    }

    pub fn free(&self) -> &FreeEmbedding {
        &self.free
    }

    pub fn with_weights(mut self, weights: WeightVector) -> Result<Self, ModelError> {
        if weights.len() != self.d() {
            return Err(ModelError::Shape(format!(
                "expected {} weights, got {}",
                self.d(),
                weights.len()
            )));
        }
        self.weights = weights;
        Ok(self)
    }

    pub fn with_free(mut self, free: FreeEmbedding) -> Result<Self, ModelError> {
        if free.n() != self.n() {
            return Err(ModelError::Shape(format!(
                "expected {} free rows, got {}",
                self.n(),
                free.n()
            )));
        }
        self.free = free;
        Ok(self)
    }

    pub fn into_parts(self) -> (AuxFeatureMatrix, WeightVector, FreeEmbedding, f64) {
        (self.features, self.weights, self.free, self.mu)
    }

    fn check(&self, i: ObjectId) -> Result<usize, ModelError> {
        i.checked(self.n()).map(ObjectId::index)
    }

    /// The concatenation `[w ∘ x_i, xhat_i]`.
    pub fn combined_point(&self, i: ObjectId) -> Result<Array1<f64>, ModelError> {
        let i = self.check(i)?;
        let x = self.features.row(i);
        let parametric = x.iter().zip(self.weights.0.iter()).map(|(x, w)| w * x);
        Ok(parametric.chain(self.free.row(i).iter().copied()).collect())
    }

    /// All combined points as an `n × (d + dhat)` matrix.
    pub fn combined_points(&self) -> Array2<f64> {
        let (n, d, dhat) = (self.n(), self.d(), self.dhat());
        let mut out = Array2::zeros((n, d + dhat));
        for i in 0..n {
            for k in 0..d {
                out[[i, k]] = self.weights.0[k] * self.features.rows[[i, k]];
            }
            for k in 0..dhat {
                out[[i, d + k]] = self.free.0[[i, k]];
            }
        }
        out
    }

    pub fn sq_dist(&self, i: ObjectId, j: ObjectId) -> Result<f64, ModelError> {
        self.sq_dist_in(Representation::Combined, i, j)
    }

    pub fn sq_dist_in(
        &self,
        repr: Representation,
        i: ObjectId,
        j: ObjectId,
    ) -> Result<f64, ModelError> {
        let (i, j) = (self.check(i)?, self.check(j)?);
        Ok(self.sq_dist_unchecked(repr, i, j))
    }

    pub(crate) fn sq_dist_unchecked(&self, repr: Representation, i: usize, j: usize) -> f64 {
        let mut total = 0.0;
        if repr != Representation::Free {
            total += parametric_sq_dist(
                self.weights.0.view(),
                self.features.row(i),
                self.features.row(j),
            );
        }
        if repr != Representation::Parametric {
            total += sq_dist(self.free.row(i), self.free.row(j));
        }
        total
    }

    pub fn triplet_likelihood(&self, r: &TripletResponse) -> Result<f64, ModelError> {
        self.triplet_likelihood_in(Representation::Combined, r)
    }

    pub fn triplet_likelihood_in(
        &self,
        repr: Representation,
        r: &TripletResponse,
    ) -> Result<f64, ModelError> {
        r.validate(self.n())?;
        Ok(self.likelihood_unchecked(repr, r))
    }

    pub(crate) fn likelihood_unchecked(&self, repr: Representation, r: &TripletResponse) -> f64 {
        let d_ab = self.sq_dist_unchecked(repr, r.head.0, r.closer.0);
        let d_ac = self.sq_dist_unchecked(repr, r.head.0, r.farther.0);
        likelihood_from_distances(self.mu, d_ab, d_ac)
    }

    /// Sum of log-likelihoods over `responses` on the given representation.
    pub fn log_likelihood(
        &self,
        responses: &[TripletResponse],
        repr: Representation,
    ) -> Result<f64, ModelError> {
        let n = self.n();
        for r in responses {
            r.validate(n)?;
        }
        Ok(responses
            .iter()
            .map(|r| self.likelihood_unchecked(repr, r).ln())
            .sum())
    }
}

/// `(mu + D_ac) / (2 mu + D_ac + D_ab)`.
///
/// The denominator sums the two distances before adding `2 mu`, so the
/// flipped response shares a bit-identical denominator.
#[inline]
pub fn likelihood_from_distances(mu: f64, d_ab: f64, d_ac: f64) -> f64 {
    (mu + d_ac) / (2.0 * mu + (d_ab + d_ac))
}

#[inline]
pub(crate) fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn parametric_sq_dist(
    w: ArrayView1<'_, f64>,
    a: ArrayView1<'_, f64>,
    b: ArrayView1<'_, f64>,
) -> f64 {
    w.iter()
        .zip(a.iter().zip(b.iter()))
        .map(|(w, (x, y))| {
            let t = w * (x - y);
            t * t
        })
        .sum()
}

fn check_finite(rows: &Array2<f64>) -> Result<(), ModelError> {
    for ((row, col), v) in rows.indexed_iter() {
        if !v.is_finite() {
            return Err(ModelError::NonFinite { row, col });
        }
    }
    Ok(())
}

fn rows_to_array(rows: &[Vec<f64>]) -> Result<Array2<f64>, ModelError> {
    let ncols = rows.first().map_or(0, Vec::len);
    if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
        return Err(ModelError::Shape(format!(
            "row {i} has {} columns, expected {ncols}",
            r.len()
        )));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Array2::from_shape_vec((rows.len(), ncols), flat).map_err(|e| ModelError::Shape(e.to_string()))
}
