//! Diffusion exponents of trajectories and the quantities derived from them.
//!
//! For a trajectory `x_t` and a start step `t0`, the squared displacement
//! `|x_t - x_t0|^2` is fit as a power law `A * (t - t0)^c` by least squares on
//! log-log axes. Under a fractional Brownian motion reading `H = c / 2` and the
//! trajectory has fractal dimension `D = 2 / c`; the ratio `c_q / c_w` of the
//! exponents in output and input space is a trajectory-level Hölder exponent.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::divergence::trajectory_rows;
use crate::error::{Error, Result};
use crate::matrix::RowMatrix;
use crate::stats::{mean, population_sd};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Space {
    Weights,
    LoglikMap,
    ExpMap,
}

/// Step-indexed points of one training run (or a synthetic path).
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    steps: Vec<u64>,
    points: Vec<f64>,
    dim: usize,
    space: Space,
}

impl Trajectory {
    pub fn new(steps: Vec<u64>, points: &[Vec<f64>], space: Space) -> Result<Self> {
        if steps.len() != points.len() {
            return Err(Error::Dimension(format!(
                "{} steps but {} points",
                steps.len(),
                points.len()
            )));
        }
        if steps.is_empty() {
            return Err(Error::InvalidArgument("empty trajectory".into()));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(
                "trajectory steps must be strictly increasing".into(),
            ));
        }
        let dim = points[0].len();
        if let Some(bad) = points.iter().position(|p| p.len() != dim) {
            return Err(Error::Dimension(format!(
                "point {bad} has dimension {}, expected {dim}",
                points[bad].len()
            )));
        }
        Ok(Self {
            steps,
            points: points.concat(),
            dim,
            space,
        })
    }

    /// Rows of `m` belonging to `group` (all rows when `None`), ordered by
    /// the step recorded in their metadata.
    pub fn from_group(m: &dyn RowMatrix, group: Option<&str>, space: Space) -> Result<Self> {
        let rows = trajectory_rows(m.models(), group);
        if rows.is_empty() {
            return Err(Error::EmptySelection(format!(
                "no stepped models in group {group:?}"
            )));
        }
        let steps = rows.iter().map(|&r| m.models()[r].step.unwrap()).collect();
        let points: Vec<Vec<f64>> = rows.iter().map(|&r| m.row(r).to_vec()).collect();
        Self::new(steps, &points, space)
    }

    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn steps(&self) -> &[u64] {
        &self.steps
    }

    pub fn space(&self) -> Space {
        self.space
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    /// Applies `f` pointwise, producing a trajectory in `space`.
    pub fn map_points(&self, space: Space, f: impl Fn(&[f64]) -> Vec<f64>) -> Result<Self> {
        let points: Vec<Vec<f64>> = (0..self.len()).map(|i| f(self.point(i))).collect();
        Self::new(self.steps.clone(), &points, space)
    }
}

/// Which later checkpoints count as "inside the window" past `t0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "value")]
pub enum Window {
    /// The next `n` checkpoints after `t0`.
    Checkpoints(usize),
    /// Every checkpoint with `t0 < t <= t0 + span`.
    Steps(u64),
    /// Every later checkpoint.
    All,
}

impl Default for Window {
    fn default() -> Self {
        Window::Checkpoints(10)
    }
}

/// `(t - t0, |x_t - x_t0|^2)` for the checkpoints inside the window.
pub fn squared_displacement(traj: &Trajectory, t0: u64, window: Window) -> Result<Vec<(f64, f64)>> {
    let start = traj
        .steps
        .binary_search(&t0)
        .map_err(|_| Error::InvalidArgument(format!("t0 = {t0} is not a checkpoint")))?;
    let later = &traj.steps[start + 1..];
    let take = match window {
        Window::Checkpoints(n) => n.min(later.len()),
        Window::Steps(span) => later.iter().take_while(|&&t| t - t0 <= span).count(),
        Window::All => later.len(),
    };
    if take < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 checkpoints after t0 = {t0} inside the window, found {take}"
        )));
    }
    let origin = traj.point(start);
    Ok((start + 1..=start + take)
        .map(|i| {
            let d2 = traj
                .point(i)
                .iter()
                .zip(origin)
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            ((traj.steps[i] - t0) as f64, d2)
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScalingFit {
    /// Slope of `ln(displacement)` on `ln(lag)`.
    pub c: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    pub t0: Option<u64>,
    /// Largest lag used, in steps.
    pub window: f64,
    pub n_points: usize,
    /// Non-positive displacements left out of the fit.
    pub dropped: usize,
}

/// Ordinary least squares of `ln d` on `ln lag`. Non-positive displacements
/// are dropped and counted; at least three must remain.
pub fn fit_exponent(pairs: &[(f64, f64)]) -> Result<ScalingFit> {
    if let Some((lag, _)) = pairs.iter().find(|(lag, _)| !(*lag > 0.0)) {
        return Err(Error::Fit(format!("lag {lag} is not positive")));
    }
    let pts: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|(_, d)| *d > 0.0)
        .map(|&(lag, d)| (lag.ln(), d.ln()))
        .collect();
    let dropped = pairs.len() - pts.len();
    if pts.len() < 3 {
        return Err(Error::Fit(format!(
            "{} positive displacements, need at least 3 ({dropped} dropped)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(x, y) in &pts {
        sxx += (x - mx) * (x - mx);
        sxy += (x - mx) * (y - my);
        syy += (y - my) * (y - my);
    }
    if sxx == 0.0 {
        return Err(Error::Fit("all lags are equal".into()));
    }
    let c = sxy / sxx;
    let log_intercept = my - c * mx;
    let ss_res: f64 = pts
        .iter()
        .map(|&(x, y)| {
            let r = y - (log_intercept + c * x);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 {
        1.0
    } else {
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    Ok(ScalingFit {
        c,
        log_intercept,
        r_squared,
        t0: None,
        window: pairs.iter().map(|p| p.0).fold(0.0, f64::max),
        n_points: pts.len(),
        dropped,
    })
}

/// Displacement fit of `traj` from `t0`.
pub fn fit_trajectory(traj: &Trajectory, t0: u64, window: Window) -> Result<ScalingFit> {
    let pairs = squared_displacement(traj, t0, window)?;
    let mut fit = fit_exponent(&pairs)?;
    fit.t0 = Some(t0);
    Ok(fit)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepEntry {
    pub t0: u64,
    pub fit: Option<ScalingFit>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExponentSweep {
    pub space: Space,
    pub entries: Vec<SweepEntry>,
}

impl ExponentSweep {
    pub fn fits(&self) -> impl Iterator<Item = &ScalingFit> {
        self.entries.iter().filter_map(|e| e.fit.as_ref())
    }

    /// Mean and population SD of R² over the successful fits.
    pub fn r_squared_summary(&self) -> Option<(f64, f64)> {
        let r2: Vec<f64> = self.fits().map(|f| f.r_squared).collect();
        (!r2.is_empty()).then(|| (mean(&r2), population_sd(&r2)))
    }
}

/// One fit per start step; failures are recorded per entry, not raised.
pub fn exponent_sweep(traj: &Trajectory, t0_grid: &[u64], window: Window) -> ExponentSweep {
    let mut grid = t0_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let entries = grid
        .par_iter()
        .map(|&t0| match fit_trajectory(traj, t0, window) {
            Ok(fit) => SweepEntry {
                t0,
                fit: Some(fit),
                error: None,
            },
            Err(e) => SweepEntry {
                t0,
                fit: None,
                error: Some(e.to_string()),
            },
        })
        .collect();
    ExponentSweep {
        space: traj.space,
        entries,
    }
}

/// `alpha = c_q / c_w`.
pub fn holder_from_exponents(c_w: f64, c_q: f64) -> Result<f64> {
    if !(c_w > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "weight-space exponent must be positive, got {c_w}"
        )));
    }
    Ok(c_q / c_w)
}

pub fn holder_exponent(fit_w: &ScalingFit, fit_q: &ScalingFit) -> Result<f64> {
    holder_from_exponents(fit_w.c, fit_q.c)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FractalDimension {
    pub c: f64,
    /// `2 / c`
    pub dimension: f64,
    /// `c / 2`
    pub hurst: f64,
}

pub fn fractal_dimension(c: f64) -> Result<FractalDimension> {
    if !(c > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "diffusion exponent must be positive, got {c}"
        )));
    }
    Ok(FractalDimension {
        c,
        dimension: 2.0 / c,
        hurst: c / 2.0,
    })
}

/// Exponents of one trajectory viewed in weight space, map space and
/// exponentiated map space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SpaceComparison {
    pub t0: u64,
    pub fit_w: Option<ScalingFit>,
    pub fit_q: ScalingFit,
    pub fit_exp_q: Option<ScalingFit>,
    pub c_w: Option<f64>,
    pub c_q: f64,
    pub alpha: Option<f64>,
    pub c_exp_q: Option<f64>,
    /// `c_exp_q - c_q`
    pub diff: Option<f64>,
}

pub fn compare_spaces(
    traj_w: Option<&Trajectory>,
    traj_q: &Trajectory,
    traj_exp_q: Option<&Trajectory>,
    t0: u64,
    window: Window,
) -> Result<SpaceComparison> {
    for other in [traj_w, traj_exp_q].into_iter().flatten() {
        if other.steps != traj_q.steps {
            return Err(Error::Dimension(format!(
                "{:?} trajectory steps are not aligned with the map trajectory",
                other.space
            )));
        }
    }
    let fit_q = fit_trajectory(traj_q, t0, window)?;
    let fit_w = traj_w.map(|t| fit_trajectory(t, t0, window)).transpose()?;
    let fit_exp_q = traj_exp_q
        .map(|t| fit_trajectory(t, t0, window))
        .transpose()?;
    let alpha = fit_w
        .as_ref()
        .map(|w| holder_exponent(w, &fit_q))
        .transpose()?;
    Ok(SpaceComparison {
        t0,
        c_w: fit_w.map(|f| f.c),
        c_q: fit_q.c,
        alpha,
        c_exp_q: fit_exp_q.map(|f| f.c),
        diff: fit_exp_q.map(|f| f.c - fit_q.c),
        fit_w,
        fit_q,
        fit_exp_q,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn line(n: u64, v: f64) -> Trajectory {
        let steps: Vec<u64> = (0..n).collect();
        let pts: Vec<Vec<f64>> = steps.iter().map(|&t| vec![v * t as f64, 0.5]).collect();
        Trajectory::new(steps, &pts, Space::Weights).unwrap()
    }

    #[test]
    fn ballistic_motion_has_exponent_two() {
        let t = line(30, 0.7);
        let d = squared_displacement(&t, 4, Window::All).unwrap();
        assert_eq!(d.len(), 25);
        for &(lag, disp) in &d {
            assert!((disp - 0.49 * lag * lag).abs() < 1e-9);
        }
        let fit = fit_trajectory(&t, 4, Window::All).unwrap();
        assert!((fit.c - 2.0).abs() < 1e-9);
    }

    #[test]
    fn displacement_errors() {
        let single = Trajectory::new(vec![5], &[vec![1.0]], Space::Weights).unwrap();
        assert!(squared_displacement(&single, 5, Window::All).is_err());
        let t = line(10, 1.0);
        assert!(squared_displacement(&t, 42, Window::All).is_err());
        assert!(squared_displacement(&t, 7, Window::All).is_err());
    }

    #[test]
    fn window_variants() {
        let steps: Vec<u64> = (0..40).map(|i| 1000 * i).collect();
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![i as f64]).collect();
        let t = Trajectory::new(steps, &pts, Space::LoglikMap).unwrap();
        assert_eq!(squared_displacement(&t, 5000, Window::default()).unwrap().len(), 10);
        let span = squared_displacement(&t, 5000, Window::Steps(10_000)).unwrap();
        assert_eq!(span.len(), 10);
        assert_eq!(span.last().unwrap().0, 10_000.0);
    }

    #[test]
    fn exact_power_law() {
        let pairs: Vec<(f64, f64)> = (1..=20).map(|l| (l as f64, 4.0 * (l as f64).powf(0.7))).collect();
        let fit = fit_exponent(&pairs).unwrap();
        assert!((fit.c - 0.7).abs() < 1e-9);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!((fit.log_intercept - 4f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn zero_displacements_dropped() {
        let mut pairs: Vec<(f64, f64)> = (1..=6).map(|l| (l as f64, l as f64)).collect();
        pairs[1].1 = 0.0;
        let fit = fit_exponent(&pairs).unwrap();
        assert_eq!((fit.n_points, fit.dropped), (5, 1));
        let zeros: Vec<(f64, f64)> = (1..=6).map(|l| (l as f64, 0.0)).collect();
        assert!(matches!(fit_exponent(&zeros), Err(Error::Fit(_))));
    }

    #[test]
    fn constant_trajectory_sweep_reports_every_failure() {
        let steps: Vec<u64> = (0..20).collect();
        let pts = vec![vec![1.0, 2.0]; 20];
        let t = Trajectory::new(steps, &pts, Space::Weights).unwrap();
        let sweep = exponent_sweep(&t, &[6, 0, 3], Window::default());
        let t0s: Vec<u64> = sweep.entries.iter().map(|e| e.t0).collect();
        assert_eq!(t0s, [0, 3, 6]);
        assert!(sweep.entries.iter().all(|e| e.fit.is_none() && e.error.is_some()));
        assert_eq!(sweep.r_squared_summary(), None);
    }

    #[test]
    fn holder_and_dimension_algebra() {
        assert_eq!(holder_from_exponents(0.8, 0.8).unwrap(), 1.0);
        assert!(holder_from_exponents(0.0, 0.3).is_err());
        assert_eq!(fractal_dimension(1.0).unwrap().dimension, 2.0);
        assert!((fractal_dimension(0.2).unwrap().dimension - 10.0).abs() < 1e-12);
        assert_eq!(fractal_dimension(2.0).unwrap().dimension, 1.0);
        assert_eq!(fractal_dimension(0.5).unwrap().hurst, 0.25);
        assert!(fractal_dimension(-1.0).is_err());
    }

    #[test]
    fn identical_spaces_give_unit_alpha() {
        let t = line(25, 0.3);
        let cmp = compare_spaces(Some(&t), &t, Some(&t), 2, Window::default()).unwrap();
        assert_eq!(cmp.alpha, Some(1.0));
        assert_eq!(cmp.diff, Some(0.0));
        assert_eq!(cmp.alpha.unwrap(), cmp.c_q / cmp.c_w.unwrap());

        let shifted = Trajectory::new(
            t.steps().iter().map(|s| s + 1).collect(),
            &(0..25).map(|i| t.point(i).to_vec()).collect::<Vec<_>>(),
            Space::Weights,
        )
        .unwrap();
        assert!(compare_spaces(Some(&shifted), &t, None, 2, Window::default()).is_err());
    }

    proptest! {
        #[test]
        fn noiseless_power_law_is_exact(c in 0.05f64..2.5, a in 0.01f64..100.0, n in 3usize..60) {
            let pairs: Vec<(f64, f64)> = (1..=n).map(|l| (l as f64, a * (l as f64).powf(c))).collect();
            let fit = fit_exponent(&pairs).unwrap();
            prop_assert!((fit.c - c).abs() < 1e-9);
            prop_assert!((fit.r_squared - 1.0).abs() < 1e-9);
        }

        #[test]
        fn scale_changes_intercept_only(
            disp in prop::collection::vec(0.01f64..10.0, 3..40),
            scale in 0.001f64..1000.0,
        ) {
            let pairs: Vec<(f64, f64)> = disp.iter().enumerate().map(|(i, &d)| ((i + 1) as f64, d)).collect();
            let scaled: Vec<(f64, f64)> = pairs.iter().map(|&(l, d)| (l, d * scale)).collect();
            let (a, b) = (fit_exponent(&pairs).unwrap(), fit_exponent(&scaled).unwrap());
            prop_assert!((a.c - b.c).abs() < 1e-12);
            prop_assert!((b.log_intercept - a.log_intercept - scale.ln()).abs() < 1e-9);
        }

        #[test]
        fn lag_relabeling_keeps_slope(disp in prop::collection::vec(0.01f64..10.0, 3..40)) {
            let pairs: Vec<(f64, f64)> = disp.iter().enumerate().map(|(i, &d)| ((i + 1) as f64, d)).collect();
            let doubled: Vec<(f64, f64)> = pairs.iter().map(|&(l, d)| (2.0 * l, d)).collect();
            let (a, b) = (fit_exponent(&pairs).unwrap(), fit_exponent(&doubled).unwrap());
            prop_assert!((a.c - b.c).abs() < 1e-9);
        }
    }
}
