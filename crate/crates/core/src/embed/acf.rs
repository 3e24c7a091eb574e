use serde::Serialize;

use crate::error::{Error, Result};

/// Default significance multiplier for [`spiral_period`]: the peak must exceed
/// `z / sqrt(n)`, the white-noise band of a biased ACF.
pub const DEFAULT_PERIOD_Z: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AcfResult {
    pub lags: Vec<usize>,
    pub values: Vec<f64>,
    /// Fractional lags where the ACF changes sign, ascending.
    pub zero_crossings: Vec<f64>,
    /// Length of the input series.
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodEstimate {
    pub lag: usize,
    pub acf: f64,
    /// The second and third zero crossings that bracket `lag`.
    pub window: (f64, f64),
}

/// Mean-removed autocorrelation normalized by `n` at every lag (biased
/// estimator), up to `max_lag` (default `n - 1`).
pub fn autocorrelation(series: &[f64], max_lag: Option<usize>) -> Result<AcfResult> {
    let n = series.len();
    if n < 8 {
        return Err(Error::InvalidArgument(format!(
            "autocorrelation needs at least 8 samples, got {n}"
        )));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidArgument("series contains non-finite values".into()));
    }
    let mean = series.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = series.iter().map(|v| v - mean).collect();
    let c0: f64 = x.iter().map(|v| v * v).sum();
    if c0 / n as f64 <= (1e-12 * mean.abs().max(1.0)).powi(2) {
        return Err(Error::InvalidArgument("series is constant".into()));
    }
    let max_lag = max_lag.unwrap_or(n - 1).min(n - 1);
    let lags: Vec<usize> = (0..=max_lag).collect();
    let values: Vec<f64> = lags
        .iter()
        .map(|&h| {
            let c: f64 = x[..n - h].iter().zip(&x[h..]).map(|(a, b)| a * b).sum();
            (c / c0).clamp(-1.0, 1.0)
        })
        .collect();
    let mut zero_crossings = Vec::new();
    for h in 1..values.len() {
        let (a, b) = (values[h - 1], values[h]);
        if a == 0.0 && h > 1 {
            continue;
        }
        if b == 0.0 {
            zero_crossings.push(h as f64);
        } else if (a > 0.0 && b < 0.0) || (a < 0.0 && b > 0.0) {
            zero_crossings.push((h - 1) as f64 + a / (a - b));
        }
    }
    Ok(AcfResult {
        lags,
        values,
        zero_crossings,
        n,
    })
}

/// Lag of the ACF maximum strictly between the second and third zero
/// crossings, with the default significance gate.
pub fn spiral_period(acf: &AcfResult) -> Option<PeriodEstimate> {
    spiral_period_with(acf, DEFAULT_PERIOD_Z)
}

/// As [`spiral_period`], rejecting peaks at or below `z / sqrt(n)` so that
/// sign flips of noise do not read as a period. `z = 0` disables the gate.
pub fn spiral_period_with(acf: &AcfResult, z: f64) -> Option<PeriodEstimate> {
    if acf.zero_crossings.len() < 3 {
        return None;
    }
    let (lo, hi) = (acf.zero_crossings[1], acf.zero_crossings[2]);
    let best = acf
        .lags
        .iter()
        .zip(&acf.values)
        .filter(|(&h, _)| (h as f64) > lo && (h as f64) < hi)
        .fold(None::<(usize, f64)>, |best, (&h, &v)| match best {
            Some((_, bv)) if bv >= v => best,
            _ => Some((h, v)),
        })?;
    if best.1 <= z / (acf.n as f64).sqrt() {
        return None;
    }
    Some(PeriodEstimate {
        lag: best.0,
        acf: best.1,
        window: (lo, hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cosine_period() {
        let s: Vec<f64> = (0..400)
            .map(|t| (2.0 * std::f64::consts::PI * t as f64 / 20.0).cos())
            .collect();
        let acf = autocorrelation(&s, None).unwrap();
        assert_eq!(acf.values[0], 1.0);
        assert!((acf.zero_crossings[0] - 5.0).abs() < 0.1);
        let p = spiral_period(&acf).unwrap();
        assert_eq!(p.lag, 20);
    }

    #[test]
    fn constant_and_short_series_rejected() {
        assert!(autocorrelation(&[1.0; 20], None).is_err());
        assert!(autocorrelation(&[1.0, 2.0, 3.0], None).is_err());
    }

    #[test]
    fn too_few_crossings_is_no_period() {
        let s: Vec<f64> = (0..50).map(|t| t as f64).collect();
        let acf = autocorrelation(&s, None).unwrap();
        if acf.zero_crossings.len() < 3 {
            assert!(spiral_period(&acf).is_none());
        }
    }

    proptest! {
        #[test]
        fn acf_bounded_and_period_inside_window(
            s in proptest::collection::vec(-10.0f64..10.0, 8..120)
        ) {
            let Ok(acf) = autocorrelation(&s, None) else { return Ok(()); };
            prop_assert!((acf.values[0] - 1.0).abs() < 1e-12);
            for v in &acf.values {
                prop_assert!(v.abs() <= 1.0 + 1e-9);
            }
            if let Some(p) = spiral_period_with(&acf, 0.0) {
                prop_assert!((p.lag as f64) > p.window.0 && (p.lag as f64) < p.window.1);
            }
        }
    }
}
