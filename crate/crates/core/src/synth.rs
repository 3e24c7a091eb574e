//! Synthetic trajectories with known exponents.
//!
//! Fractional Brownian motion is sampled exactly from its covariance via a
//! Cholesky factor. Generalized Takagi–Landsberg maps
//! `f(W) = sum_k a_k lambda^(-k alpha) S(lambda^k b_k . W)`, with `S` the
//! distance to the nearest integer, are alpha-Hölder and fold a smooth input
//! path into a rough one; pushing Brownian paths through them checks the
//! Hölder estimate `c_q / c_w` end to end.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scaling::{fit_trajectory, holder_exponent, ScalingFit, Space, Trajectory, Window};
use crate::stats::mean;

/// Diagonal jitter added when the covariance factorization fails.
pub const CHOLESKY_JITTER: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FbmSpec {
    pub hurst: f64,
    pub n_steps: usize,
    /// Number of independent coordinates.
    pub dim: usize,
    pub seed: u64,
}

impl FbmSpec {
    fn validate(&self) -> Result<()> {
        if !(self.hurst > 0.0 && self.hurst < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Hurst exponent must lie in (0, 1), got {}",
                self.hurst
            )));
        }
        if self.n_steps < 2 {
            return Err(Error::InvalidArgument("fBm needs at least 2 steps".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("fBm dimension must be positive".into()));
        }
        Ok(())
    }
}

/// `Cov(B_s, B_t) = (s^2H + t^2H - |s - t|^2H) / 2`.
pub fn fbm_covariance(hurst: f64, s: f64, t: f64) -> f64 {
    let h2 = 2.0 * hurst;
    0.5 * (s.powf(h2) + t.powf(h2) - (s - t).abs().powf(h2))
}

/// Cholesky factor of the fBm covariance on `t = 1..=n`, reusable across
/// ensemble members.
#[derive(Debug, Clone)]
pub struct FbmSampler {
    hurst: f64,
    factor: DMatrix<f64>,
    jitter_applied: bool,
}

impl FbmSampler {
    pub fn new(hurst: f64, n_steps: usize) -> Result<Self> {
        FbmSpec {
            hurst,
            n_steps,
            dim: 1,
            seed: 0,
        }
        .validate()?;
        let cov = DMatrix::from_fn(n_steps, n_steps, |i, j| {
            fbm_covariance(hurst, (i + 1) as f64, (j + 1) as f64)
        });
        if let Some(ch) = cov.clone().cholesky() {
            return Ok(Self {
                hurst,
                factor: ch.unpack(),
                jitter_applied: false,
            });
        }
        let jittered = cov + DMatrix::identity(n_steps, n_steps) * CHOLESKY_JITTER;
        let ch = jittered.cholesky().ok_or_else(|| {
            Error::Numerical(format!(
                "fBm covariance (H = {hurst}, n = {n_steps}) is not positive definite"
            ))
        })?;
        Ok(Self {
            hurst,
            factor: ch.unpack(),
            jitter_applied: true,
        })
    }

    pub fn hurst(&self) -> f64 {
        self.hurst
    }

    pub fn n_steps(&self) -> usize {
        self.factor.nrows()
    }

    pub fn jitter_applied(&self) -> bool {
        self.jitter_applied
    }

    /// One `dim`-dimensional path at steps `1..=n`.
    pub fn sample(&self, dim: usize, rng: &mut impl Rng) -> Trajectory {
        let n = self.n_steps();
        // Column-major fill: each column is one coordinate's white noise.
        let noise = DMatrix::from_fn(n, dim, |_, _| rng.sample::<f64, _>(StandardNormal));
        let path = &self.factor * noise;
        let points: Vec<Vec<f64>> = (0..n)
            .map(|t| (0..dim).map(|d| path[(t, d)]).collect())
            .collect();
        Trajectory::new((1..=n as u64).collect(), &points, Space::Weights)
            .expect("sampler produces a well-formed trajectory")
    }
}

fn member_rng(seed: u64, member: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member);
    rng
}

#[derive(Debug, Clone)]
pub struct FbmPath {
    pub trajectory: Trajectory,
    pub jitter_applied: bool,
}

/// Exact-covariance fBm path; deterministic given the seed.
pub fn fbm_generate(spec: &FbmSpec) -> Result<FbmPath> {
    spec.validate()?;
    let sampler = FbmSampler::new(spec.hurst, spec.n_steps)?;
    Ok(FbmPath {
        trajectory: sampler.sample(spec.dim, &mut member_rng(spec.seed, 0)),
        jitter_applied: sampler.jitter_applied(),
    })
}

/// `n_paths` independent paths sharing one factorization. Member `i` uses
/// stream `i` of the seeded generator, so member 0 equals [`fbm_generate`].
pub fn fbm_ensemble(spec: &FbmSpec, n_paths: usize) -> Result<Vec<Trajectory>> {
    spec.validate()?;
    let sampler = FbmSampler::new(spec.hurst, spec.n_steps)?;
    Ok((0..n_paths as u64)
        .into_par_iter()
        .map(|i| sampler.sample(spec.dim, &mut member_rng(spec.seed, i)))
        .collect())
}

/// Distance from `x` to the nearest integer.
pub fn sawtooth(x: f64) -> f64 {
    (x - x.round()).abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TakagiSpec {
    pub alpha: f64,
    pub lambda: f64,
    pub k_max: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// Seeds the random unit directions `a_k` and `b_k`.
    pub seed: u64,
}

impl TakagiSpec {
    /// Smallest truncation whose tail is below `rel_tol` of the full series
    /// weight `sum_k lambda^(-k alpha)`.
    pub fn default_k_max(alpha: f64, lambda: f64, rel_tol: f64) -> usize {
        let r = lambda.powf(-alpha);
        (rel_tol.ln() / r.ln()).ceil().max(1.0) as usize
    }

    fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Takagi alpha must lie in (0, 1), got {}",
                self.alpha
            )));
        }
        if !(self.lambda > 1.0) {
            return Err(Error::InvalidArgument(format!(
                "Takagi lambda must exceed 1, got {}",
                self.lambda
            )));
        }
        if self.k_max == 0 || self.input_dim == 0 || self.output_dim == 0 {
            return Err(Error::InvalidArgument(
                "k_max and dimensions must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Truncated generalized Takagi–Landsberg map.
#[derive(Debug, Clone)]
pub struct TakagiMap {
    alpha: f64,
    lambda: f64,
    /// `a_k`, one output-space direction per scale.
    out_dirs: Vec<Vec<f64>>,
    /// `b_k`, one input-space direction per scale.
    in_dirs: Vec<Vec<f64>>,
}

fn unit_vector(dim: usize, rng: &mut impl Rng) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| rng.sample(StandardNormal)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

impl TakagiMap {
    /// Draws `a_k`, `b_k` uniformly on the unit spheres, in the order
    /// `a_1, b_1, a_2, b_2, ...`, so a longer truncation extends a shorter
    /// one with the same seed.
    pub fn new(spec: &TakagiSpec) -> Result<Self> {
        spec.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut out_dirs = Vec::with_capacity(spec.k_max);
        let mut in_dirs = Vec::with_capacity(spec.k_max);
        for _ in 0..spec.k_max {
            out_dirs.push(unit_vector(spec.output_dim, &mut rng));
            in_dirs.push(unit_vector(spec.input_dim, &mut rng));
        }
        Ok(Self {
            alpha: spec.alpha,
            lambda: spec.lambda,
            out_dirs,
            in_dirs,
        })
    }

    /// Map with explicit directions; `out_dirs[k - 1]` and `in_dirs[k - 1]`
    /// belong to scale `k`.
    pub fn from_directions(
        alpha: f64,
        lambda: f64,
        out_dirs: Vec<Vec<f64>>,
        in_dirs: Vec<Vec<f64>>,
    ) -> Result<Self> {
        if out_dirs.is_empty() || out_dirs.len() != in_dirs.len() {
            return Err(Error::Dimension(
                "need the same positive number of a_k and b_k".into(),
            ));
        }
        let (od, id) = (out_dirs[0].len(), in_dirs[0].len());
        if out_dirs.iter().any(|a| a.len() != od) || in_dirs.iter().any(|b| b.len() != id) {
            return Err(Error::Dimension("direction lengths differ".into()));
        }
        TakagiSpec {
            alpha,
            lambda,
            k_max: out_dirs.len(),
            input_dim: id,
            output_dim: od,
            seed: 0,
        }
        .validate()?;
        Ok(Self {
            alpha,
            lambda,
            out_dirs,
            in_dirs,
        })
    }

    pub fn k_max(&self) -> usize {
        self.out_dirs.len()
    }

    pub fn input_dim(&self) -> usize {
        self.in_dirs[0].len()
    }

    pub fn output_dim(&self) -> usize {
        self.out_dirs[0].len()
    }

    /// `sum_{k > k_max} lambda^(-k alpha)`; times 1/2 bounds the truncation
    /// error for unit `a_k`.
    pub fn tail_bound(&self) -> f64 {
        let r = self.lambda.powf(-self.alpha);
        r.powi(self.k_max() as i32 + 1) / (1.0 - r)
    }

    /// `sum_{k=1}^{k_max} lambda^(-k alpha) / 2`, a bound on `|f(W)|`.
    pub fn output_bound(&self) -> f64 {
        0.5 * (1..=self.k_max())
            .map(|k| self.lambda.powf(-(k as f64) * self.alpha))
            .sum::<f64>()
    }

    pub fn apply(&self, w: &[f64]) -> Vec<f64> {
        assert_eq!(w.len(), self.input_dim(), "input dimension mismatch");
        let mut out = vec![0.0; self.output_dim()];
        for (k, (a, b)) in self.out_dirs.iter().zip(&self.in_dirs).enumerate() {
            let scale = self.lambda.powi(k as i32 + 1);
            let proj: f64 = b.iter().zip(w).map(|(x, y)| x * y).sum();
            let amp = self.lambda.powf(-((k + 1) as f64) * self.alpha) * sawtooth(scale * proj);
            for (o, ai) in out.iter_mut().zip(a) {
                *o += ai * amp;
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum FoldingMap {
    Identity,
    Takagi(TakagiSpec),
}

/// Brownian (or fBm) input paths pushed through a folding map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FoldingSpec {
    pub fbm: FbmSpec,
    pub map: FoldingMap,
    /// Multiplies the unit-variance input path. Displacements must sit
    /// between `lambda^-k_max` and `1 / lambda` for the map to act as a
    /// power law.
    pub input_scale: f64,
}

impl FoldingSpec {
    /// Defaults used by `modelmap synth folding`: Brownian input in 8
    /// dimensions, 2048 steps, `lambda = 2`, `k_max = 40`, 16 outputs.
    pub fn takagi_default(alpha: f64, seed: u64) -> Self {
        Self {
            fbm: FbmSpec {
                hurst: 0.5,
                n_steps: 2048,
                dim: 8,
                seed,
            },
            map: FoldingMap::Takagi(TakagiSpec {
                alpha,
                lambda: 2.0,
                k_max: 40,
                input_dim: 8,
                output_dim: 16,
                seed: seed ^ 0x7a6b,
            }),
            input_scale: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldingResult {
    pub c_w: f64,
    pub c_q: f64,
    pub alpha_hat: f64,
    pub fit_w: ScalingFit,
    pub fit_q: ScalingFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FoldingEnsemble {
    pub spec: FoldingSpec,
    pub runs: Vec<FoldingResult>,
    pub mean_c_w: f64,
    pub mean_c_q: f64,
    pub mean_alpha_hat: f64,
    pub jitter_applied: bool,
}

fn fold_one(path: &Trajectory, spec: &FoldingSpec, map: Option<&TakagiMap>) -> Result<FoldingResult> {
    let scaled = path.map_points(Space::Weights, |p| {
        p.iter().map(|x| x * spec.input_scale).collect()
    })?;
    let mapped = match map {
        None => scaled.map_points(Space::LoglikMap, <[f64]>::to_vec)?,
        Some(m) => scaled.map_points(Space::LoglikMap, |p| m.apply(p))?,
    };
    let t0 = scaled.steps()[0];
    let fit_w = fit_trajectory(&scaled, t0, Window::All)?;
    let fit_q = fit_trajectory(&mapped, t0, Window::All)?;
    Ok(FoldingResult {
        c_w: fit_w.c,
        c_q: fit_q.c,
        alpha_hat: holder_exponent(&fit_w, &fit_q)?,
        fit_w,
        fit_q,
    })
}

/// Fits input-space and output-space exponents on the whole path (from its
/// first step) and returns their ratio.
pub fn folding_experiment(spec: &FoldingSpec) -> Result<FoldingResult> {
    Ok(folding_ensemble(spec, 1)?.runs.remove(0))
}

/// [`folding_experiment`] over `n_paths` input paths and one fixed map.
pub fn folding_ensemble(spec: &FoldingSpec, n_paths: usize) -> Result<FoldingEnsemble> {
    if n_paths == 0 {
        return Err(Error::InvalidArgument("ensemble needs at least one path".into()));
    }
    if !(spec.input_scale > 0.0) {
        return Err(Error::InvalidArgument("input scale must be positive".into()));
    }
    let map = match &spec.map {
        FoldingMap::Identity => None,
        FoldingMap::Takagi(t) => {
            if t.input_dim != spec.fbm.dim {
                return Err(Error::Dimension(format!(
                    "map input dimension {} differs from path dimension {}",
                    t.input_dim, spec.fbm.dim
                )));
            }
            Some(TakagiMap::new(t)?)
        }
    };
    spec.fbm.validate()?;
    let sampler = FbmSampler::new(spec.fbm.hurst, spec.fbm.n_steps)?;
    let runs = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let path = sampler.sample(spec.fbm.dim, &mut member_rng(spec.fbm.seed, i));
            fold_one(&path, spec, map.as_ref())
        })
        .collect::<Result<Vec<_>>>()?;
    let pick = |f: fn(&FoldingResult) -> f64| mean(&runs.iter().map(f).collect::<Vec<_>>());
    Ok(FoldingEnsemble {
        spec: *spec,
        mean_c_w: pick(|r| r.c_w),
        mean_c_q: pick(|r| r.c_q),
        mean_alpha_hat: pick(|r| r.alpha_hat),
        jitter_applied: sampler.jitter_applied(),
        runs,
    })
}
