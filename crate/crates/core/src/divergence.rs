//! KL divergence between models as squared distance on the model map.
//!
//! With raw double-centered coordinates `Q`, `KL(p_i, p_j) ~ |q_i - q_j|^2 / 2N`
//! nats; after [`CenteredMap::rescale_bits_per_byte`] the plain squared
//! distance is the estimate in bits/byte. The standard error treats the
//! per-text terms `(Q_ik - Q_jk)^2 / 2` as independent, ignoring the small
//! dependence introduced by centering.

use std::f64::consts::LN_2;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{CenteredMap, LogLikelihoodMatrix, ModelMeta, RowMatrix, Scale};
use crate::stats::{mean, median, pearson, population_sd};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KlEstimate {
    pub i: usize,
    pub j: usize,
    /// KL estimate, clamped at 0.
    pub value: f64,
    /// Value before clamping.
    pub raw_value: f64,
    pub std_error: f64,
    /// The standard-error radicand was negative and clamped to 0.
    pub radicand_clamped: bool,
    pub scale: Scale,
}

impl KlEstimate {
    fn zero(i: usize, j: usize, scale: Scale) -> Self {
        Self {
            i,
            j,
            value: 0.0,
            raw_value: 0.0,
            std_error: 0.0,
            radicand_clamped: false,
            scale,
        }
    }
}

/// KL estimate and standard error between rows `i` and `j`.
pub fn kl_pair(c: &CenteredMap, i: usize, j: usize) -> Result<KlEstimate> {
    let k = c.n_models();
    for idx in [i, j] {
        if idx >= k {
            return Err(Error::IndexOutOfRange { index: idx, len: k });
        }
    }
    if i == j {
        return Ok(KlEstimate::zero(i, j, c.scale()));
    }
    let n = c.n_texts() as f64;
    let (mut sum2, mut sum4) = (0.0, 0.0);
    for (a, b) in c.row(i).iter().zip(c.row(j)) {
        let d2 = (a - b) * (a - b);
        sum2 += d2;
        sum4 += d2 * d2;
    }
    let (raw_value, radicand) = match c.scale() {
        Scale::BitsPerByte => (sum2, sum4 - sum2 * sum2 / n),
        Scale::RawNats => {
            let kl = sum2 / (2.0 * n);
            (kl, sum4 / (4.0 * n * n) - kl * kl / n)
        }
    };
    Ok(KlEstimate {
        i,
        j,
        value: raw_value.max(0.0),
        raw_value,
        std_error: radicand.max(0.0).sqrt(),
        radicand_clamped: radicand < 0.0,
        scale: c.scale(),
    })
}

/// Symmetric matrix of pairwise estimates over a subset of rows.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KlMatrixResult {
    /// Row indices into the source map, in output order.
    pub indices: Vec<usize>,
    pub model_ids: Vec<String>,
    /// Row-major `len x len` estimates.
    pub estimates: Vec<KlEstimate>,
    pub scale: Scale,
    pub clamped_radicands: usize,
}

impl KlMatrixResult {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, a: usize, b: usize) -> &KlEstimate {
        &self.estimates[a * self.len() + b]
    }

    pub fn value(&self, a: usize, b: usize) -> f64 {
        self.get(a, b).value
    }

    pub fn values(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.value).collect()
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.estimates.iter().map(|e| e.std_error).collect()
    }

    /// Row-major values as a table whose "texts" are the model ids, so the
    /// matrix can be written with the ordinary container writers.
    pub fn as_table(&self) -> KlTable {
        KlTable {
            values: self.values(),
            models: self.model_ids.iter().map(ModelMeta::new).collect(),
            n: self.len(),
        }
    }
}

pub struct KlTable {
    values: Vec<f64>,
    models: Vec<ModelMeta>,
    n: usize,
}

impl RowMatrix for KlTable {
    fn n_rows(&self) -> usize {
        self.n
    }

    fn n_cols(&self) -> usize {
        self.n
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n..(i + 1) * self.n]
    }

    fn models(&self) -> &[ModelMeta] {
        &self.models
    }
}

/// All pairwise estimates. Pairs are evaluated in parallel; each entry is
/// computed independently so the result does not depend on scheduling.
pub fn kl_matrix(c: &CenteredMap, subset: Option<&[usize]>) -> Result<KlMatrixResult> {
    let indices: Vec<usize> = match subset {
        Some(s) => s.to_vec(),
        None => (0..c.n_models()).collect(),
    };
    if let Some(&bad) = indices.iter().find(|&&i| i >= c.n_models()) {
        return Err(Error::IndexOutOfRange {
            index: bad,
            len: c.n_models(),
        });
    }
    let m = indices.len();
    let upper: Vec<(usize, usize)> = (0..m)
        .flat_map(|a| (a + 1..m).map(move |b| (a, b)))
        .collect();
    let computed: Vec<KlEstimate> = upper
        .par_iter()
        .map(|&(a, b)| kl_pair(c, indices[a], indices[b]))
        .collect::<Result<_>>()?;

    let mut estimates: Vec<KlEstimate> = (0..m * m)
        .map(|p| KlEstimate::zero(indices[p / m], indices[p % m], c.scale()))
        .collect();
    let mut clamped_radicands = 0;
    for (&(a, b), est) in upper.iter().zip(computed) {
        clamped_radicands += usize::from(est.radicand_clamped);
        estimates[a * m + b] = est;
        estimates[b * m + a] = KlEstimate {
            i: est.j,
            j: est.i,
            ..est
        };
    }
    Ok(KlMatrixResult {
        model_ids: indices
            .iter()
            .map(|&i| c.models()[i].model_id.clone())
            .collect(),
        indices,
        estimates,
        scale: c.scale(),
        clamped_radicands,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsecutiveKl {
    pub from_step: u64,
    pub to_step: u64,
    pub from_id: String,
    pub to_id: String,
    pub estimate: KlEstimate,
}

/// Row indices of the models in `group` (all models when `None`) that carry
/// a step, ordered by step.
pub fn trajectory_rows(models: &[ModelMeta], group: Option<&str>) -> Vec<usize> {
    let mut rows: Vec<usize> = models
        .iter()
        .enumerate()
        .filter(|(_, m)| m.step.is_some() && (group.is_none() || m.group.as_deref() == group))
        .map(|(i, _)| i)
        .collect();
    rows.sort_by_key(|&i| (models[i].step, i));
    rows
}

/// KL between successive checkpoints of one trajectory, ordered by step
/// regardless of the order of `rows`.
pub fn consecutive_kl(c: &CenteredMap, rows: &[usize]) -> Result<Vec<ConsecutiveKl>> {
    let models = c.models();
    let mut ordered = Vec::with_capacity(rows.len());
    for &r in rows {
        let meta = models.get(r).ok_or(Error::IndexOutOfRange {
            index: r,
            len: models.len(),
        })?;
        let step = meta.step.ok_or_else(|| {
            Error::InvalidArgument(format!("model `{}` has no step", meta.model_id))
        })?;
        ordered.push((step, r));
    }
    if ordered.len() < 2 {
        return Err(Error::InvalidArgument(
            "a trajectory needs at least two checkpoints".into(),
        ));
    }
    ordered.sort();
    if let Some(w) = ordered.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::InvalidArgument(format!(
            "duplicate step {} in trajectory",
            w[0].0
        )));
    }
    ordered
        .windows(2)
        .map(|w| {
            let ((s0, a), (s1, b)) = (w[0], w[1]);
            Ok(ConsecutiveKl {
                from_step: s0,
                to_step: s1,
                from_id: models[a].model_id.clone(),
                to_id: models[b].model_id.clone(),
                estimate: kl_pair(c, a, b)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntropyBound {
    pub bits_per_byte: f64,
    pub model_index: usize,
    pub model_id: String,
}

/// Minimum over models of the negative mean log-likelihood, in bits/byte.
/// Upper-bounds the entropy of the text source.
pub fn entropy_upper_bound(m: &LogLikelihoodMatrix) -> Result<EntropyBound> {
    if m.n_models() == 0 || m.n_texts() == 0 {
        return Err(Error::InvalidArgument("empty matrix".into()));
    }
    let denom = m.texts().mean_bytes() * LN_2;
    let (model_index, bits_per_byte) = (0..m.n_models())
        .map(|i| (i, -mean(m.row(i)) / denom))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("nonempty");
    Ok(EntropyBound {
        bits_per_byte,
        model_index,
        model_id: m.models()[model_index].model_id.clone(),
    })
}

/// Pearson correlation of per-pair KL estimates computed independently on
/// two column subsets, each centered and rescaled on its own.
pub fn subset_correlation(
    m: &LogLikelihoodMatrix,
    split_a: &[usize],
    split_b: &[usize],
    pairs: &[(usize, usize)],
) -> Result<f64> {
    if pairs.len() < 2 {
        return Err(Error::InvalidArgument(
            "subset correlation needs at least two model pairs".into(),
        ));
    }
    let kl_on = |cols: &[usize]| -> Result<Vec<f64>> {
        if cols.len() < 2 {
            return Err(Error::InvalidArgument(
                "each text subset needs at least two texts".into(),
            ));
        }
        let map = m
            .select_columns(cols)?
            .double_center()?
            .rescale_bits_per_byte()?;
        pairs
            .iter()
            .map(|&(i, j)| kl_pair(&map, i, j).map(|e| e.value))
            .collect()
    };
    let a = kl_on(split_a)?;
    let b = kl_on(split_b)?;
    pearson(&a, &b).ok_or_else(|| Error::Numerical("KL values have zero variance".into()))
}

/// Median, mean and population SD of one setting's KL values.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSummary {
    pub setting: String,
    pub median: f64,
    pub mean: f64,
    pub sd: f64,
    pub n: usize,
}

/// Summary statistics; the median averages the two middle values for even
/// counts and the SD divides by `n`.
pub fn group_summary(setting: &str, values: &[f64]) -> Result<GroupSummary> {
    if values.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "setting `{setting}` has no values"
        )));
    }
    Ok(GroupSummary {
        setting: setting.to_owned(),
        median: median(values),
        mean: mean(values),
        sd: population_sd(values),
        n: values.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::TextSetMeta;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(k: usize, n: usize, seed: u64) -> LogLikelihoodMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..k * n).map(|_| -rng.random_range(0.0..20.0)).collect();
        let lengths = (0..n).map(|_| rng.random_range(50..2000)).collect();
        let ids = (0..n).map(|i| format!("t{i}")).collect();
        LogLikelihoodMatrix::new(
            values,
            ModelMeta::synthetic(k),
            TextSetMeta::new(ids, lengths).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn self_pair_is_zero() {
        let c = random_matrix(3, 10, 1).double_center().unwrap();
        let e = kl_pair(&c, 1, 1).unwrap();
        assert_eq!((e.value, e.std_error), (0.0, 0.0));
        assert!(kl_pair(&c, 0, 3).is_err());
    }

    #[test]
    fn pair_is_symmetric_and_scale_consistent() {
        let m = random_matrix(5, 40, 2);
        let raw = m.double_center().unwrap();
        let bits = raw.rescale_bits_per_byte().unwrap();
        let denom = m.texts().mean_bytes() * LN_2;
        for i in 0..5 {
            for j in 0..5 {
                let a = kl_pair(&bits, i, j).unwrap();
                let b = kl_pair(&bits, j, i).unwrap();
                assert_eq!(a.value, b.value);
                assert_eq!(a.std_error, b.std_error);
                let nat = kl_pair(&raw, i, j).unwrap();
                assert!((nat.value / denom - a.value).abs() <= 1e-12 * a.value.max(1.0));
                assert!((nat.std_error / denom - a.std_error).abs() <= 1e-12 * a.std_error.max(1.0));
            }
        }
    }

    #[test]
    fn identical_rows_give_zero_matrix() {
        let row = vec![-1.0, -4.0, -2.5, -0.5];
        let m = LogLikelihoodMatrix::from_rows(
            &[row.clone(), row.clone(), row],
            ModelMeta::synthetic(3),
            TextSetMeta::synthetic(4),
        )
        .unwrap();
        let r = kl_matrix(&m.double_center().unwrap(), None).unwrap();
        assert!(r.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn matrix_matches_pairs() {
        let c = random_matrix(6, 30, 3).double_center().unwrap();
        let r = kl_matrix(&c, Some(&[4, 0, 2])).unwrap();
        assert_eq!(r.model_ids, ["m4", "m0", "m2"]);
        for a in 0..3 {
            assert_eq!(r.value(a, a), 0.0);
            for b in 0..3 {
                let p = kl_pair(&c, r.indices[a], r.indices[b]).unwrap();
                assert_eq!(r.value(a, b), p.value);
                assert_eq!(r.value(a, b), r.value(b, a));
            }
        }
    }

    #[test]
    fn consecutive_is_order_independent() {
        let models = vec![
            ModelMeta::new("s3").with_step(3000).with_group("g"),
            ModelMeta::new("s1").with_step(1000).with_group("g"),
            ModelMeta::new("other").with_step(1000).with_group("h"),
            ModelMeta::new("s2").with_step(2000).with_group("g"),
        ];
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let values = (0..4 * 12).map(|_| -rng.random_range(0.0..5.0)).collect();
        let c = LogLikelihoodMatrix::new(values, models, TextSetMeta::synthetic(12))
            .unwrap()
            .double_center()
            .unwrap();
        let rows = trajectory_rows(c.models(), Some("g"));
        assert_eq!(rows, [1, 3, 0]);
        let fwd = consecutive_kl(&c, &rows).unwrap();
        let rev = consecutive_kl(&c, &[0, 3, 1]).unwrap();
        assert_eq!(fwd, rev);
        assert_eq!(fwd.len(), 2);
        assert_eq!((fwd[0].from_step, fwd[0].to_step), (1000, 2000));
        assert_eq!(fwd[1].to_id, "s3");

        let two = consecutive_kl(&c, &[1, 3]).unwrap();
        assert_eq!(two.len(), 1);
        assert!(consecutive_kl(&c, &[1]).is_err());
    }

    #[test]
    fn entropy_bound_unit_case() {
        let b = 800u64;
        let per_text = -(b as f64) * LN_2;
        let m = LogLikelihoodMatrix::new(
            vec![per_text, per_text, per_text, 2.0 * per_text, per_text, per_text],
            vec![ModelMeta::new("good"), ModelMeta::new("worse")],
            TextSetMeta::new(vec!["a".into(), "b".into(), "c".into()], vec![b; 3]).unwrap(),
        )
        .unwrap();
        let e = entropy_upper_bound(&m).unwrap();
        assert!((e.bits_per_byte - 1.0).abs() < 1e-12);
        assert_eq!(e.model_id, "good");
    }

    #[test]
    fn subset_correlation_identical_subsets() {
        let m = random_matrix(6, 50, 5);
        let cols: Vec<usize> = (0..25).collect();
        let pairs = [(0, 1), (0, 2), (1, 3), (4, 5)];
        let r = subset_correlation(&m, &cols, &cols, &pairs).unwrap();
        assert!((r - 1.0).abs() < 1e-12);
        assert!(subset_correlation(&m, &cols, &cols, &pairs[..1]).is_err());
        assert!(subset_correlation(&m, &[0], &cols, &pairs).is_err());
    }

    #[test]
    fn summary_of_one_two_three() {
        let s = group_summary("x", &[3.0, 1.0, 2.0]).unwrap();
        assert_eq!(s.median, 2.0);
        assert_eq!(s.mean, 2.0);
        assert!((s.sd - (2.0f64 / 3.0).sqrt()).abs() < 1e-15);
        let single = group_summary("y", &[0.44]).unwrap();
        assert_eq!(single.sd, 0.0);
        assert_eq!(group_summary("z", &[1.0, 4.0]).unwrap().median, 2.5);
        assert!(group_summary("empty", &[]).is_err());
    }
}
