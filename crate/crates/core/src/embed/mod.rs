//! Low-dimensional coordinates for plotting model maps, plus diagnostics for
//! oscillating trajectories and shared shift directions.

mod acf;
mod pca;
mod shift;
pub mod tsne;

pub use acf::{autocorrelation, spiral_period, spiral_period_with, AcfResult, PeriodEstimate};
pub use pca::{pca, PcaResult};
pub use shift::{
    cosine_similarity_report, shift_vectors, CosineReport, GroupCosine, Shift, ShiftSet,
    DEFAULT_RANDOM_TRIALS, DEFAULT_SAMPLE_SIZE,
};
pub use tsne::{tsne_from_coords, tsne_from_sq_distances, TsneInit, TsneParams};

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMethod {
    Pca,
    Tsne,
}

/// Point coordinates, row-major `n_points x dim`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Embedding {
    pub coords: Vec<f64>,
    pub n_points: usize,
    pub dim: usize,
    pub method: EmbedMethod,
    pub tsne_params: Option<TsneParams>,
    /// t-SNE objective `KL(P || Q)` before and after optimization.
    pub initial_objective: Option<f64>,
    pub final_objective: Option<f64>,
    pub warnings: Vec<String>,
}

impl Embedding {
    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }
}

/// Orthogonal Procrustes: rotates (and possibly reflects) centered `coords`
/// onto centered `reference`, then moves them to the reference centroid.
pub fn procrustes_align(coords: &[f64], reference: &[f64], dim: usize) -> Result<Vec<f64>> {
    if dim == 0 || coords.len() != reference.len() || !coords.len().is_multiple_of(dim) {
        return Err(Error::Dimension(
            "Procrustes inputs must have equal shapes".into(),
        ));
    }
    let n = coords.len() / dim;
    let x = DMatrix::from_row_slice(n, dim, coords);
    let y = DMatrix::from_row_slice(n, dim, reference);
    let mx = x.row_mean();
    let my = y.row_mean();
    let xc = DMatrix::from_fn(n, dim, |i, j| x[(i, j)] - mx[j]);
    let yc = DMatrix::from_fn(n, dim, |i, j| y[(i, j)] - my[j]);
    let svd = (xc.transpose() * &yc).svd(true, true);
    let (u, v_t) = match (svd.u, svd.v_t) {
        (Some(u), Some(v_t)) => (u, v_t),
        _ => return Err(Error::Numerical("SVD failed in Procrustes alignment".into())),
    };
    let aligned = xc * (u * v_t);
    let mut out = Vec::with_capacity(n * dim);
    for i in 0..n {
        for j in 0..dim {
            out.push(aligned[(i, j)] + my[j]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn procrustes_recovers_rotation() {
        let pts = [0.0, 0.0, 1.0, 0.0, 0.0, 2.0, -1.0, 0.5];
        let (s, c) = (0.6f64.sin(), 0.6f64.cos());
        let rotated: Vec<f64> = pts
            .chunks(2)
            .flat_map(|p| [c * p[0] - s * p[1] + 3.0, s * p[0] + c * p[1] - 1.0])
            .collect();
        let aligned = procrustes_align(&rotated, &pts, 2).unwrap();
        for (a, b) in aligned.iter().zip(pts) {
            assert!((a - b).abs() < 1e-10);
        }
    }
}
