use nalgebra::{DMatrix, SymmetricEigen};
use serde::Serialize;

use super::{EmbedMethod, Embedding};
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

/// Eigenvalues below this fraction of the largest one count as zero.
const RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PcaResult {
    /// Scores, one row per input row.
    pub embedding: Embedding,
    /// Variance (sum of squares) captured by each component, descending.
    pub explained_variance: Vec<f64>,
    pub explained_variance_ratio: Vec<f64>,
    /// Unit principal axes in input space, row-major `n_components x N`.
    pub components: Vec<f64>,
    /// Mean input row that was subtracted.
    pub mean: Vec<f64>,
}

impl PcaResult {
    pub fn component(&self, c: usize) -> &[f64] {
        let n = self.mean.len();
        &self.components[c * n..(c + 1) * n]
    }

    /// `mean + sum_c score_c * component_c` for row `i`.
    pub fn reconstruct(&self, i: usize) -> Vec<f64> {
        let mut out = self.mean.clone();
        for (c, s) in self.embedding.point(i).iter().enumerate() {
            for (o, v) in out.iter_mut().zip(self.component(c)) {
                *o += s * v;
            }
        }
        out
    }
}

/// PCA through the `K x K` Gram matrix of the mean-removed rows, which is
/// cheap when there are far fewer rows (models) than columns (texts).
pub fn pca(data: &dyn RowMatrix, n_components: usize) -> Result<PcaResult> {
    let (k, n) = (data.n_rows(), data.n_cols());
    if n_components == 0 || n_components > k.min(n) {
        return Err(Error::InvalidArgument(format!(
            "n_components must lie in 1..={}, got {n_components}",
            k.min(n)
        )));
    }
    let mut mean = vec![0.0; n];
    for i in 0..k {
        for (m, v) in mean.iter_mut().zip(data.row(i)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= k as f64;
    }
    let centered = DMatrix::from_fn(k, n, |i, j| data.row(i)[j] - mean[j]);
    let gram = &centered * centered.transpose();
    let eig = SymmetricEigen::new(gram);

    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let top = eig.eigenvalues[order[0]].max(0.0);
    let total: f64 = eig.eigenvalues.iter().map(|v| v.max(0.0)).sum();
    let usable: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&c| top > 0.0 && eig.eigenvalues[c] > RANK_TOL * top)
        .take(n_components)
        .collect();
    let mut warnings = Vec::new();
    if usable.len() < n_components {
        warnings.push(format!(
            "data has rank {}; returning {} of {n_components} requested components",
            usable.len(),
            usable.len()
        ));
    }

    let dim = usable.len();
    let mut scores = vec![0.0; k * dim];
    let mut components = Vec::with_capacity(dim * n);
    let mut explained_variance = Vec::with_capacity(dim);
    for (c, &idx) in usable.iter().enumerate() {
        let lambda = eig.eigenvalues[idx];
        let sd = lambda.sqrt();
        let u = eig.eigenvectors.column(idx);
        let mut axis: Vec<f64> = (0..n)
            .map(|j| (0..k).map(|i| centered[(i, j)] * u[i]).sum::<f64>() / sd)
            .collect();
        // Sign convention: the largest-magnitude axis entry is positive.
        let pivot = axis
            .iter()
            .copied()
            .fold(0.0f64, |a, v| if v.abs() > a.abs() { v } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for v in &mut axis {
            *v *= sign;
        }
        for i in 0..k {
            scores[i * dim + c] = sign * u[i] * sd;
        }
        components.extend(axis);
        explained_variance.push(lambda);
    }

    Ok(PcaResult {
        embedding: Embedding {
            coords: scores,
            n_points: k,
            dim,
            method: EmbedMethod::Pca,
            tsne_params: None,
            initial_objective: None,
            final_objective: None,
            warnings,
        },
        explained_variance_ratio: explained_variance.iter().map(|v| v / total).collect(),
        explained_variance,
        components,
        mean,
    })
}
