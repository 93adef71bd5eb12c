use log::warn;
use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2};

use super::IoError;

/// A fitted principal-component projection.
#[derive(Debug, Clone, PartialEq)]
pub struct Pca {
    /// Projected rows, `n × k`.
    pub projected: Array2<f64>,
    /// Unit principal directions as rows, `k × d`.
    pub components: Array2<f64>,
    /// Variance along each component (sample variance, `n - 1` divisor).
    pub explained_variance: Vec<f64>,
    pub mean: Array1<f64>,
    /// Per-column divisor; all ones unless standardized.
    pub scale: Array1<f64>,
}

/// Projects centered (optionally unit-variance) rows onto the top `k`
/// principal directions, `1 <= k <= min(n - 1, d)`.
///
/// Components are ordered by descending variance, equal variances by the
/// column of their largest loading, and each direction's largest-magnitude
/// loading is positive. Zero-variance input yields zero columns.
pub fn pca_reduce(data: ArrayView2<'_, f64>, k: usize, standardize: bool) -> Result<Pca, IoError> {
    let (n, d) = data.dim();
    let max = n.saturating_sub(1).min(d);
    if k == 0 || k > max {
        return Err(IoError::ComponentsOutOfRange { k, max });
    }
    let mean = data.mean_axis(ndarray::Axis(0)).expect("n >= 2");
    let mut centered = &data - &mean;
    let mut scale = Array1::ones(d);
    if standardize {
        for (j, mut col) in centered.columns_mut().into_iter().enumerate() {
            let sd = (col.iter().map(|v| v * v).sum::<f64>() / (n - 1) as f64).sqrt();
            if sd > 0.0 {
                col /= sd;
                scale[j] = sd;
            }
        }
    }

    let cov = centered.t().dot(&centered) / (n - 1) as f64;
    let total: f64 = cov.diag().sum();
    if total <= 0.0 {
        warn!("PCA input has zero variance; returning zero columns");
        return Ok(Pca {
            projected: Array2::zeros((n, k)),
            components: Array2::zeros((k, d)),
            explained_variance: vec![0.0; k],
            mean,
            scale,
        });
    }

    let sym = DMatrix::from_fn(d, d, |i, j| cov[[i, j]]);
    let eig = SymmetricEigen::new(sym);
    let mut order: Vec<(f64, usize, Vec<f64>)> = (0..d)
        .map(|c| {
            let mut v: Vec<f64> = eig.eigenvectors.column(c).iter().copied().collect();
            let lead = argmax_abs(&v);
            if v[lead] < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            (eig.eigenvalues[c].max(0.0), lead, v)
        })
        .collect();
    let tol = 1e-12 * total;
    order.sort_by(|a, b| {
        if (a.0 - b.0).abs() <= tol {
            a.1.cmp(&b.1)
        } else {
            b.0.total_cmp(&a.0)
        }
    });
    order.truncate(k);

    let mut components = Array2::zeros((k, d));
    for (r, (_, _, v)) in order.iter().enumerate() {
        for (c, x) in v.iter().enumerate() {
            components[[r, c]] = *x;
        }
    }
    let projected = centered.dot(&components.t());
    Ok(Pca {
        projected,
        components,
        explained_variance: order.iter().map(|o| o.0).collect(),
        mean,
        scale,
    })
}

fn argmax_abs(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    best
}
