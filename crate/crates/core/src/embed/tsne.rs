//! Exact t-SNE.
//!
//! Input affinities come from per-point Gaussian kernels whose bandwidth is
//! found by bisection so that each conditional distribution has the requested
//! perplexity. The embedding minimizes `KL(P || Q)` for Student-t output
//! affinities with momentum gradient descent, per-coordinate gains and an
//! early-exaggeration phase. All reductions run in a fixed order, so results
//! are bit-identical for a given seed whatever the thread count.

use std::f64::consts::LN_2;

use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{EmbedMethod, Embedding};
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;

/// Bisection stops once the row entropy is this close to `log2(perplexity)`.
pub const ENTROPY_TOL_BITS: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 200;
const MIN_GAIN: f64 = 0.01;
const P_FLOOR: f64 = 1e-12;
const INIT_SCALE: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TsneInit {
    /// Classical scaling of the input distances, rescaled to a small spread.
    Pca,
    Random,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub dim: usize,
    pub perplexity: f64,
    pub seed: u64,
    pub iterations: usize,
    pub early_exaggeration: f64,
    pub exaggeration_iterations: usize,
    /// `None` picks `K / 12` clamped to `[50, 500]`.
    pub learning_rate: Option<f64>,
    pub initial_momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub init: TsneInit,
}

impl TsneParams {
    pub fn new(dim: usize, perplexity: f64, seed: u64) -> Self {
        Self {
            dim,
            perplexity,
            seed,
            iterations: 1000,
            early_exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: None,
            initial_momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            init: TsneInit::Pca,
        }
    }

    fn learning_rate_for(&self, k: usize) -> f64 {
        self.learning_rate
            .unwrap_or_else(|| (k as f64 / 12.0).clamp(50.0, 500.0))
    }
}

fn validate(k: usize, params: &TsneParams) -> Result<()> {
    if !(params.dim == 2 || params.dim == 3) {
        return Err(Error::InvalidArgument(format!(
            "t-SNE output dimension must be 2 or 3, got {}",
            params.dim
        )));
    }
    if k < 4 {
        return Err(Error::InvalidArgument(format!(
            "t-SNE needs at least 4 points, got {k}"
        )));
    }
    if !(params.perplexity > 1.0 && params.perplexity < (k - 1) as f64 / 3.0) {
        return Err(Error::InvalidArgument(format!(
            "perplexity {} infeasible for {k} points (must lie in (1, {:.3}))",
            params.perplexity,
            (k - 1) as f64 / 3.0
        )));
    }
    Ok(())
}

/// Squared Euclidean distances between rows.
pub fn squared_distances(data: &dyn RowMatrix) -> Vec<f64> {
    let k = data.n_rows();
    let mut d2 = vec![0.0; k * k];
    for i in 0..k {
        for j in i + 1..k {
            let v: f64 = data
                .row(i)
                .iter()
                .zip(data.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            d2[i * k + j] = v;
            d2[j * k + i] = v;
        }
    }
    d2
}

/// Entropy in bits of the row distribution `exp(-beta d_j)`, and the
/// distribution itself.
fn row_distribution(dists: &[f64], i: usize, beta: f64, out: &mut [f64]) -> f64 {
    let dmin = dists
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &d)| d)
        .fold(f64::INFINITY, f64::min);
    let mut z = 0.0;
    let mut weighted = 0.0;
    for (j, (&d, o)) in dists.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *o = 0.0;
            continue;
        }
        let shifted = d - dmin;
        let p = (-beta * shifted).exp();
        *o = p;
        z += p;
        weighted += shifted * p;
    }
    for o in out.iter_mut() {
        *o /= z;
    }
    (z.ln() + beta * weighted / z) / LN_2
}

/// Conditional affinities `p_{j|i}` (row-major) and the precision `beta_i`
/// of each row, calibrated to `perplexity`.
pub fn conditional_probabilities(
    sq_dist: &[f64],
    k: usize,
    perplexity: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if sq_dist.len() != k * k {
        return Err(Error::Dimension(format!(
            "distance matrix has {} entries, expected {}",
            sq_dist.len(),
            k * k
        )));
    }
    if sq_dist.iter().any(|d| !d.is_finite() || *d < 0.0) {
        return Err(Error::InvalidArgument(
            "distances must be finite and non-negative".into(),
        ));
    }
    let target = perplexity.log2();
    let rows: Vec<(Vec<f64>, f64)> = (0..k)
        .into_par_iter()
        .map(|i| {
            let dists = &sq_dist[i * k..(i + 1) * k];
            let mut row = vec![0.0; k];
            let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
            for _ in 0..MAX_BISECTION_STEPS {
                let h = row_distribution(dists, i, beta, &mut row);
                if (h - target).abs() < ENTROPY_TOL_BITS {
                    break;
                }
                if h > target {
                    lo = beta;
                    beta = if hi.is_finite() { 0.5 * (beta + hi) } else { beta * 2.0 };
                } else {
                    hi = beta;
                    beta = 0.5 * (beta + lo);
                }
            }
            row_distribution(dists, i, beta, &mut row);
            (row, beta)
        })
        .collect();
    let mut p = Vec::with_capacity(k * k);
    let mut betas = Vec::with_capacity(k);
    for (row, beta) in rows {
        p.extend(row);
        betas.push(beta);
    }
    Ok((p, betas))
}

/// Symmetrized joint affinities `(p_{j|i} + p_{i|j}) / 2K`, floored.
pub fn joint_probabilities(conditional: &[f64], k: usize) -> Vec<f64> {
    let mut p = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                let v = (conditional[i * k + j] + conditional[j * k + i]) / (2.0 * k as f64);
                p[i * k + j] = v.max(P_FLOOR);
            }
        }
    }
    p
}

fn student_weights(y: &[f64], k: usize, dim: usize) -> (Vec<f64>, f64) {
    let rows: Vec<(Vec<f64>, f64)> = (0..k)
        .into_par_iter()
        .map(|i| {
            let yi = &y[i * dim..(i + 1) * dim];
            let mut w = vec![0.0; k];
            let mut sum = 0.0;
            for (j, wj) in w.iter_mut().enumerate() {
                if j == i {
                    continue;
                }
                let yj = &y[j * dim..(j + 1) * dim];
                let d2: f64 = yi.iter().zip(yj).map(|(a, b)| (a - b) * (a - b)).sum();
                *wj = 1.0 / (1.0 + d2);
                sum += *wj;
            }
            (w, sum)
        })
        .collect();
    let mut weights = Vec::with_capacity(k * k);
    let mut z = 0.0;
    for (w, s) in rows {
        weights.extend(w);
        z += s;
    }
    (weights, z)
}

/// `KL(P || Q)` for embedding `y` (row-major `k x dim`).
pub fn kl_objective(p: &[f64], y: &[f64], k: usize, dim: usize) -> f64 {
    let (w, z) = student_weights(y, k, dim);
    let mut kl = 0.0;
    for idx in 0..k * k {
        if p[idx] > 0.0 {
            let q = (w[idx] / z).max(f64::MIN_POSITIVE);
            kl += p[idx] * (p[idx] / q).ln();
        }
    }
    kl
}

/// Gradient of [`kl_objective`] with respect to `y`:
/// `4 sum_j (p_ij - q_ij) (y_i - y_j) / (1 + |y_i - y_j|^2)`.
pub fn kl_gradient(p: &[f64], y: &[f64], k: usize, dim: usize) -> Vec<f64> {
    let (w, z) = student_weights(y, k, dim);
    let rows: Vec<Vec<f64>> = (0..k)
        .into_par_iter()
        .map(|i| {
            let yi = &y[i * dim..(i + 1) * dim];
            let mut g = vec![0.0; dim];
            for j in 0..k {
                if j == i {
                    continue;
                }
                let wij = w[i * k + j];
                let coeff = 4.0 * (p[i * k + j] - wij / z) * wij;
                let yj = &y[j * dim..(j + 1) * dim];
                for d in 0..dim {
                    g[d] += coeff * (yi[d] - yj[d]);
                }
            }
            g
        })
        .collect();
    rows.concat()
}

/// Classical scaling of squared distances: top `dim` eigenvectors of the
/// double-centered `-D/2`.
fn classical_scaling(sq_dist: &[f64], k: usize, dim: usize) -> Vec<f64> {
    let d = DMatrix::from_row_slice(k, k, sq_dist);
    let row_means: Vec<f64> = (0..k).map(|i| d.row(i).mean()).collect();
    let grand = row_means.iter().sum::<f64>() / k as f64;
    let b = DMatrix::from_fn(k, k, |i, j| {
        -0.5 * (d[(i, j)] - row_means[i] - row_means[j] + grand)
    });
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let mut y = vec![0.0; k * dim];
    for (c, &idx) in order.iter().take(dim).enumerate() {
        let scale = eig.eigenvalues[idx].max(0.0).sqrt();
        let v = eig.eigenvectors.column(idx);
        let pivot = v.iter().copied().fold(0.0f64, |a, x| if x.abs() > a.abs() { x } else { a });
        let sign = if pivot < 0.0 { -1.0 } else { 1.0 };
        for i in 0..k {
            y[i * dim + c] = sign * v[i] * scale;
        }
    }
    y
}

fn initial_embedding(sq_dist: &[f64], k: usize, params: &TsneParams) -> Vec<f64> {
    let dim = params.dim;
    match params.init {
        TsneInit::Pca => {
            let mut y = classical_scaling(sq_dist, k, dim);
            let first: Vec<f64> = (0..k).map(|i| y[i * dim]).collect();
            let m = first.iter().sum::<f64>() / k as f64;
            let sd = (first.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / k as f64).sqrt();
            if sd > 0.0 {
                for v in &mut y {
                    *v *= INIT_SCALE / sd;
                }
                return y;
            }
            random_embedding(k, params)
        }
        TsneInit::Random => random_embedding(k, params),
    }
}

fn random_embedding(k: usize, params: &TsneParams) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let normal = Normal::new(0.0, INIT_SCALE).expect("valid normal");
    (0..k * params.dim).map(|_| normal.sample(&mut rng)).collect()
}

/// t-SNE of the rows of `data` using squared Euclidean distances.
pub fn tsne_from_coords(data: &dyn RowMatrix, params: &TsneParams) -> Result<Embedding> {
    if (0..data.n_rows()).any(|i| data.row(i).iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("input coordinates must be finite".into()));
    }
    tsne_from_sq_distances(&squared_distances(data), data.n_rows(), params)
}

/// t-SNE from a precomputed `k x k` matrix of squared distances (a KL matrix
/// on the model map is one).
pub fn tsne_from_sq_distances(sq_dist: &[f64], k: usize, params: &TsneParams) -> Result<Embedding> {
    validate(k, params)?;
    let (conditional, _) = conditional_probabilities(sq_dist, k, params.perplexity)?;
    let p = joint_probabilities(&conditional, k);
    let dim = params.dim;
    let mut y = initial_embedding(sq_dist, k, params);
    let initial_objective = kl_objective(&p, &y, k, dim);

    let lr = params.learning_rate_for(k);
    let mut update = vec![0.0; k * dim];
    let mut gains = vec![1.0f64; k * dim];
    let exaggerated: Vec<f64> = p.iter().map(|v| v * params.early_exaggeration).collect();
    for it in 0..params.iterations {
        let target = if it < params.exaggeration_iterations {
            &exaggerated
        } else {
            &p
        };
        let momentum = if it < params.momentum_switch {
            params.initial_momentum
        } else {
            params.final_momentum
        };
        let grad = kl_gradient(target, &y, k, dim);
        for idx in 0..k * dim {
            let same_sign = (grad[idx] > 0.0) == (update[idx] > 0.0);
            gains[idx] = if same_sign {
                (gains[idx] * 0.8).max(MIN_GAIN)
            } else {
                gains[idx] + 0.2
            };
            update[idx] = momentum * update[idx] - lr * gains[idx] * grad[idx];
            y[idx] += update[idx];
        }
    }
    let final_objective = kl_objective(&p, &y, k, dim);
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("t-SNE diverged".into()));
    }
    Ok(Embedding {
        coords: y,
        n_points: k,
        dim,
        method: EmbedMethod::Tsne,
        tsne_params: Some(*params),
        initial_objective: Some(initial_objective),
        final_objective: Some(final_objective),
        warnings: Vec::new(),
    })
}
