//! Outlier texts, broken checkpoints and anomalous seeds.
//!
//! Texts are scored by their largest jump in log-likelihood between
//! consecutive checkpoints. Checkpoint and seed scans flag values above
//! `median + k * MAD`; when the MAD is zero they fall back to flagging values
//! above `100 * median`.

use std::collections::BTreeSet;

use serde::Serialize;

use crate::divergence::{consecutive_kl, trajectory_rows, ConsecutiveKl, KlMatrixResult};
use crate::error::{Error, Result};
use crate::matrix::{LogLikelihoodMatrix, RowMatrix};
use crate::stats::{mad, median, pearson};

/// End of the learning-rate warmup in the reference training schedule.
pub const DEFAULT_WARMUP_STEP: u64 = 1430;
/// Fraction of top-scored texts removed by default (300 of 10,000).
pub const DEFAULT_REMOVAL_FRACTION: f64 = 0.03;
pub const DEFAULT_CHECKPOINT_K: f64 = 10.0;
pub const DEFAULT_SEED_K: f64 = 5.0;
/// Ratio to the median used when the MAD vanishes.
pub const ZERO_MAD_RATIO: f64 = 100.0;
/// Removal counts swept when choosing how many texts to drop.
pub const DEFAULT_SWEEP_COUNTS: [usize; 11] = [10, 100, 200, 300, 400, 500, 600, 700, 800, 900, 1000];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TextOutlierReport {
    pub text_ids: Vec<String>,
    /// Max over trajectories and consecutive checkpoint pairs of
    /// `|l_{t+1}(x) - l_t(x)|`, in nats.
    pub max_scores: Vec<f64>,
    /// Population SD of the signed differences, per text.
    pub std_scores: Vec<f64>,
    /// Text indices by descending max score, ties by ascending index.
    pub ranking: Vec<usize>,
    pub removal_count: usize,
    pub post_warmup_step: u64,
}

impl TextOutlierReport {
    /// Indices of the `removal_count` highest-scoring texts.
    pub fn removal_indices(&self) -> &[usize] {
        &self.ranking[..self.removal_count]
    }

    pub fn removal_ids(&self) -> Vec<&str> {
        self.removal_indices()
            .iter()
            .map(|&i| self.text_ids[i].as_str())
            .collect()
    }

    /// Correlation between the max and SD variants of the score.
    pub fn max_std_correlation(&self) -> Option<f64> {
        pearson(&self.max_scores, &self.std_scores)
    }
}

/// Scores every text over a set of checkpoint trajectories (one matrix per
/// model size, rows carrying steps). Only checkpoints at or after
/// `post_warmup_step` contribute.
pub fn text_outlier_scores(
    trajectories: &[LogLikelihoodMatrix],
    post_warmup_step: u64,
    removal_fraction: f64,
) -> Result<TextOutlierReport> {
    let first = trajectories
        .first()
        .ok_or_else(|| Error::InvalidArgument("no trajectories given".into()))?;
    if !(0.0..1.0).contains(&removal_fraction) {
        return Err(Error::InvalidArgument(format!(
            "removal fraction must lie in [0, 1), got {removal_fraction}"
        )));
    }
    let n = first.n_texts();
    let mut max_scores = vec![0.0f64; n];
    let mut sums = vec![0.0f64; n];
    let mut sq_sums = vec![0.0f64; n];
    let mut count = 0usize;

    for (t, traj) in trajectories.iter().enumerate() {
        if traj.texts().ids() != first.texts().ids() {
            return Err(Error::Dimension(format!(
                "trajectory {t} uses a different text set"
            )));
        }
        let rows: Vec<usize> = trajectory_rows(traj.models(), None)
            .into_iter()
            .filter(|&r| traj.models()[r].step.unwrap() >= post_warmup_step)
            .collect();
        if rows.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "trajectory {t} has fewer than 2 checkpoints after step {post_warmup_step}"
            )));
        }
        for w in rows.windows(2) {
            let (a, b) = (traj.row(w[0]), traj.row(w[1]));
            for s in 0..n {
                let d = b[s] - a[s];
                max_scores[s] = max_scores[s].max(d.abs());
                sums[s] += d;
                sq_sums[s] += d * d;
            }
            count += 1;
        }
    }

    let c = count as f64;
    let std_scores = sums
        .iter()
        .zip(&sq_sums)
        .map(|(s, q)| (q / c - (s / c) * (s / c)).max(0.0).sqrt())
        .collect();
    let mut ranking: Vec<usize> = (0..n).collect();
    ranking.sort_by(|&a, &b| max_scores[b].total_cmp(&max_scores[a]).then(a.cmp(&b)));
    Ok(TextOutlierReport {
        text_ids: first.texts().ids().to_vec(),
        max_scores,
        std_scores,
        ranking,
        removal_count: (removal_fraction * n as f64).round() as usize,
        post_warmup_step,
    })
}

/// Drops the given text columns; byte-length metadata is recomputed.
pub fn remove_texts(m: &LogLikelihoodMatrix, indices: &[usize]) -> Result<LogLikelihoodMatrix> {
    let n = m.n_texts();
    let drop: BTreeSet<usize> = indices.iter().copied().collect();
    if let Some(&bad) = drop.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index: bad, len: n });
    }
    let keep: Vec<usize> = (0..n).filter(|i| !drop.contains(i)).collect();
    if keep.is_empty() {
        return Err(Error::InvalidArgument("cannot remove every text".into()));
    }
    m.select_columns(&keep)
}

/// Consecutive-checkpoint KL per trajectory after removing the top
/// `count` texts, for each count in `counts` that leaves texts behind.
pub fn removal_sweep(
    m: &LogLikelihoodMatrix,
    report: &TextOutlierReport,
    counts: &[usize],
    groups: &[Option<String>],
) -> Result<Vec<RemovalSweepPoint>> {
    let mut out = Vec::new();
    for &count in counts.iter().filter(|&&c| c < m.n_texts()) {
        let reduced = remove_texts(m, &report.ranking[..count])?;
        let map = reduced.double_center()?.rescale_bits_per_byte()?;
        for group in groups {
            let rows = trajectory_rows(map.models(), group.as_deref());
            out.push(RemovalSweepPoint {
                removed: count,
                group: group.clone(),
                consecutive: consecutive_kl(&map, &rows)?,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RemovalSweepPoint {
    pub removed: usize,
    pub group: Option<String>,
    pub consecutive: Vec<ConsecutiveKl>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdRule {
    /// `median + k * MAD`
    Mad,
    /// `ZERO_MAD_RATIO * median`, used when the MAD is zero.
    MedianRatio,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
struct RobustThreshold {
    median: f64,
    mad: f64,
    threshold: f64,
    rule: ThresholdRule,
}

fn robust_threshold(values: &[f64], k: f64) -> RobustThreshold {
    let med = median(values);
    let dev = mad(values);
    if dev > 0.0 {
        RobustThreshold {
            median: med,
            mad: dev,
            threshold: med + k * dev,
            rule: ThresholdRule::Mad,
        }
    } else {
        RobustThreshold {
            median: med,
            mad: dev,
            threshold: ZERO_MAD_RATIO * med,
            rule: ThresholdRule::MedianRatio,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnomalyScan {
    pub steps: Vec<u64>,
    pub values: Vec<f64>,
    pub median: f64,
    pub mad: f64,
    pub k: f64,
    pub threshold: f64,
    pub rule: ThresholdRule,
    pub flagged: Vec<u64>,
}

/// Flags steps whose statistic (KL to the next checkpoint, squared weight
/// distance, ...) exceeds the robust threshold.
pub fn checkpoint_anomaly_scan(series: &[(u64, f64)], k: f64) -> Result<AnomalyScan> {
    if series.len() < 5 {
        return Err(Error::InvalidArgument(format!(
            "anomaly scan needs at least 5 points, got {}",
            series.len()
        )));
    }
    if let Some((s, v)) = series.iter().find(|(_, v)| !v.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "non-finite statistic {v} at step {s}"
        )));
    }
    let values: Vec<f64> = series.iter().map(|&(_, v)| v).collect();
    let t = robust_threshold(&values, k);
    let flagged = series
        .iter()
        .filter(|(_, v)| *v > t.threshold)
        .map(|&(s, _)| s)
        .collect();
    Ok(AnomalyScan {
        steps: series.iter().map(|&(s, _)| s).collect(),
        values,
        median: t.median,
        mad: t.mad,
        k,
        threshold: t.threshold,
        rule: t.rule,
        flagged,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SeedScan {
    pub model_ids: Vec<String>,
    /// Median off-diagonal KL of each row.
    pub row_medians: Vec<f64>,
    pub median: f64,
    pub mad: f64,
    pub k: f64,
    pub threshold: f64,
    pub rule: ThresholdRule,
    pub flagged: Vec<String>,
}

/// Flags models whose typical divergence to the others is anomalously large.
pub fn seed_anomaly_scan(kl: &KlMatrixResult, k: f64) -> Result<SeedScan> {
    let m = kl.len();
    if m < 3 {
        return Err(Error::InvalidArgument(format!(
            "seed scan needs at least 3 models, got {m}"
        )));
    }
    let row_medians: Vec<f64> = (0..m)
        .map(|a| {
            let off: Vec<f64> = (0..m).filter(|&b| b != a).map(|b| kl.value(a, b)).collect();
            median(&off)
        })
        .collect();
    let t = robust_threshold(&row_medians, k);
    let flagged = row_medians
        .iter()
        .zip(&kl.model_ids)
        .filter(|(v, _)| **v > t.threshold)
        .map(|(_, id)| id.clone())
        .collect();
    Ok(SeedScan {
        model_ids: kl.model_ids.clone(),
        row_medians,
        median: t.median,
        mad: t.mad,
        k,
        threshold: t.threshold,
        rule: t.rule,
        flagged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::divergence::kl_matrix;
    use crate::matrix::{ModelMeta, TextSetMeta};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn trajectory(rows: &[Vec<f64>], steps: &[u64]) -> LogLikelihoodMatrix {
        let models = steps
            .iter()
            .map(|s| ModelMeta::new(format!("ckpt{s}")).with_step(*s))
            .collect();
        LogLikelihoodMatrix::from_rows(rows, models, TextSetMeta::synthetic(rows[0].len())).unwrap()
    }

    #[test]
    fn hand_computed_score() {
        let t = trajectory(&[vec![-1.0], vec![-5.0], vec![-2.0]], &[2000, 3000, 4000]);
        let r = text_outlier_scores(&[t], 0, 0.0).unwrap();
        assert_eq!(r.max_scores, [4.0]);
        // diffs -4, +3: mean -0.5, population SD 3.5
        assert!((r.std_scores[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn constant_in_time_scores_zero() {
        let row = vec![-3.0, -1.0, -7.0];
        let t = trajectory(&[row.clone(), row.clone(), row], &[1, 2, 3]);
        let r = text_outlier_scores(&[t], 0, 0.0).unwrap();
        assert!(r.max_scores.iter().all(|&s| s == 0.0));
        assert_eq!(r.ranking, [0, 1, 2]);
    }

    #[test]
    fn warmup_checkpoints_are_ignored() {
        // Huge jump before warmup ends, small jump afterwards.
        let t = trajectory(
            &[vec![-100.0, -1.0], vec![-2.0, -1.0], vec![-2.5, -1.2]],
            &[1000, 2000, 3000],
        );
        let r = text_outlier_scores(std::slice::from_ref(&t), 1430, 0.0).unwrap();
        assert!((r.max_scores[0] - 0.5).abs() < 1e-12);
        assert!(text_outlier_scores(&[t], 2500, 0.0).is_err());
    }

    #[test]
    fn ranking_and_removal_count() {
        let t = trajectory(
            &[vec![0.0, 0.0, 0.0, 0.0], vec![-1.0, -3.0, -1.0, -0.5]],
            &[10, 20],
        );
        let r = text_outlier_scores(&[t], 0, 0.5).unwrap();
        assert_eq!(r.ranking, [1, 0, 2, 3]);
        assert_eq!(r.removal_count, 2);
        assert_eq!(r.removal_ids(), ["t1", "t0"]);
    }

    #[test]
    fn remove_texts_recomputes_mean_bytes() {
        let m = LogLikelihoodMatrix::new(
            vec![-1.0, -2.0, -3.0, -4.0, -5.0, -6.0],
            ModelMeta::synthetic(2),
            TextSetMeta::new(vec!["a".into(), "b".into(), "c".into()], vec![100, 200, 600])
                .unwrap(),
        )
        .unwrap();
        assert_eq!(remove_texts(&m, &[]).unwrap(), m);
        let r = remove_texts(&m, &[2]).unwrap();
        assert_eq!(r.n_texts(), 2);
        assert!((r.texts().mean_bytes() - 150.0).abs() < 1e-12);
        assert_eq!(r.row(1), &[-4.0, -5.0]);
        assert!(remove_texts(&m, &[0, 1, 2]).is_err());
        assert!(remove_texts(&m, &[3]).is_err());
    }

    #[test]
    fn remove_then_center_commutes() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = LogLikelihoodMatrix::new(
            (0..4 * 10).map(|_| -rng.random_range(0.0..3.0)).collect(),
            ModelMeta::synthetic(4),
            TextSetMeta::synthetic(10),
        )
        .unwrap();
        let a = remove_texts(&m, &[1, 7]).unwrap().double_center().unwrap();
        let keep: Vec<usize> = (0..10).filter(|i| *i != 1 && *i != 7).collect();
        let b = m.select_columns(&keep).unwrap().double_center().unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_spike_flagged() {
        let series: Vec<(u64, f64)> = (0..20)
            .map(|i| (1000 * i, if i == 13 { 1000.0 } else { 1.0 }))
            .collect();
        let scan = checkpoint_anomaly_scan(&series, DEFAULT_CHECKPOINT_K).unwrap();
        assert_eq!(scan.flagged, [13000]);
        assert_eq!(scan.rule, ThresholdRule::MedianRatio);
    }

    #[test]
    fn adjacent_pair_flagged() {
        // A corrupted checkpoint at step t inflates both d(t-1, t) and d(t, t+1).
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let series: Vec<(u64, f64)> = (100..140u64)
            .map(|s| {
                let base = 1.0 + 0.05 * rng.sample::<f64, _>(StandardNormal);
                let v = if s == 115 || s == 116 { 4.0 * base } else { base };
                (s * 1000, v)
            })
            .collect();
        let scan = checkpoint_anomaly_scan(&series, DEFAULT_CHECKPOINT_K).unwrap();
        assert_eq!(scan.rule, ThresholdRule::Mad);
        assert_eq!(scan.flagged, [115_000, 116_000]);
        assert_eq!(scan, checkpoint_anomaly_scan(&series, DEFAULT_CHECKPOINT_K).unwrap());
    }

    #[test]
    fn scan_needs_five_points() {
        assert!(checkpoint_anomaly_scan(&[(1, 1.0), (2, 1.0)], 10.0).is_err());
    }

    #[test]
    fn distant_seed_flagged() {
        let n = 16;
        let mut rows = vec![vec![-1.0; n]; 5];
        rows.push((0..n).map(|s| if s % 2 == 0 { -9.0 } else { 1.0 }).collect());
        let m = LogLikelihoodMatrix::from_rows(&rows, ModelMeta::synthetic(6), TextSetMeta::synthetic(n))
            .unwrap();
        let kl = kl_matrix(&m.double_center().unwrap(), None).unwrap();
        let scan = seed_anomaly_scan(&kl, DEFAULT_SEED_K).unwrap();
        assert_eq!(scan.flagged, ["m5"]);
    }
}
