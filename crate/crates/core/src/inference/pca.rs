//! PCA fitted on core label vectors only.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcaTransform {
    pub mean: Array1<f64>,
    /// Retained principal axes as rows, `d' x d`, by decreasing variance.
    pub components: Array2<f64>,
    /// Variance along each retained axis.
    pub explained_variance: Vec<f64>,
    /// Retained share of the total variance.
    pub explained_ratio: f64,
    /// Input had no variance; a single placeholder axis was kept.
    pub degenerate: bool,
}

impl PcaTransform {
    pub fn input_dim(&self) -> usize {
        self.mean.len()
    }

    pub fn reduced_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn transform(&self, x: ArrayView2<'_, f64>) -> Array2<f64> {
        (&x - &self.mean).dot(&self.components.t())
    }

    pub fn inverse_transform(&self, z: ArrayView2<'_, f64>) -> Array2<f64> {
        z.dot(&self.components) + &self.mean
    }
}

/// Smallest number of leading axes whose variance share reaches `keep`.
pub fn fit_pca(rows: ArrayView2<'_, f64>, keep: f64) -> Result<PcaTransform> {
    let (m, d) = rows.dim();
    if m < 2 {
        return Err(Error::InvalidParameter(format!("PCA needs at least 2 rows, got {m}")));
    }
    if !(keep > 0.0 && keep <= 1.0) {
        return Err(Error::InvalidParameter(format!("variance share must be in (0, 1], got {keep}")));
    }
    let mean = rows.mean_axis(Axis(0)).expect("non-empty");
    let centered = &rows - &mean;
    let cov = centered.t().dot(&centered) / (m as f64 - 1.0);

    let eig = SymmetricEigen::new(DMatrix::from_fn(d, d, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let values: Vec<f64> = order.iter().map(|&j| eig.eigenvalues[j].max(0.0)).collect();
    let total: f64 = values.iter().sum();

    let scale = rows.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    if total <= 1e-24 * scale * scale * d as f64 {
        log::warn!("PCA input has zero variance; keeping one placeholder axis");
        let mut components = Array2::zeros((1, d));
        components[[0, 0]] = 1.0;
        return Ok(PcaTransform {
            mean,
            components,
            explained_variance: vec![0.0],
            explained_ratio: 1.0,
            degenerate: true,
        });
    }

    let mut kept = 0;
    let mut acc = 0.0;
    while kept < d {
        acc += values[kept];
        kept += 1;
        if acc / total >= keep - 1e-12 {
            break;
        }
    }
    let mut components = Array2::zeros((kept, d));
    for (r, &j) in order.iter().take(kept).enumerate() {
        let axis = eig.eigenvectors.column(j);
        // sign convention: largest-magnitude entry positive
        let pivot = axis.iter().fold(0.0f64, |best, &v| if v.abs() > best.abs() { v } else { best });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for c in 0..d {
            components[[r, c]] = sign * axis[c];
        }
    }
    Ok(PcaTransform {
        mean,
        components,
        explained_variance: values[..kept].to_vec(),
        explained_ratio: acc / total,
        degenerate: false,
    })
}
