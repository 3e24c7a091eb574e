use std::collections::BTreeMap;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::matrix::{CenteredMap, RowMatrix};

pub const DEFAULT_RANDOM_TRIALS: usize = 100;
pub const DEFAULT_SAMPLE_SIZE: usize = 9;

/// Difference `q_variant - q_base` between two models on the same map.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Shift {
    pub base_id: String,
    pub variant_id: String,
    /// Group of the base model, or `""` when it has none.
    pub group: String,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShiftSet {
    pub shifts: Vec<Shift>,
}

impl ShiftSet {
    pub fn len(&self) -> usize {
        self.shifts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifts.is_empty()
    }

    /// Shift indices per group, groups in lexicographic order.
    pub fn groups(&self) -> BTreeMap<&str, Vec<usize>> {
        let mut out: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in self.shifts.iter().enumerate() {
            out.entry(s.group.as_str()).or_default().push(i);
        }
        out
    }
}

pub fn shift_vectors(c: &CenteredMap, pairs: &[(String, String)]) -> Result<ShiftSet> {
    let lookup = |id: &str| c.model_index(id).ok_or_else(|| Error::UnknownModel(id.to_string()));
    let shifts = pairs
        .iter()
        .map(|(base, variant)| {
            let (b, v) = (lookup(base)?, lookup(variant)?);
            Ok(Shift {
                base_id: base.clone(),
                variant_id: variant.clone(),
                group: c.models()[b].group.clone().unwrap_or_default(),
                vector: c.row(v).iter().zip(c.row(b)).map(|(x, y)| x - y).collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ShiftSet { shifts })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupCosine {
    pub group: String,
    pub mean_cosine: f64,
    pub n_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CosineReport {
    pub groups: Vec<GroupCosine>,
    /// Mean within-sample cosine over random draws that ignore groups.
    pub random_baseline_mean: f64,
    pub n_random: usize,
    pub sample_size: usize,
    /// Pairs left out because one of the vectors has zero norm.
    pub skipped_pairs: usize,
}

fn cosine(a: &[f64], b: &[f64]) -> Option<f64> {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    (na > 0.0 && nb > 0.0).then(|| (dot / (na * nb)).clamp(-1.0, 1.0))
}

/// Mean pairwise cosine over `idx`, plus how many pairs were skipped.
fn mean_pairwise(s: &ShiftSet, idx: &[usize]) -> (Option<f64>, usize, usize) {
    let (mut sum, mut n, mut skipped) = (0.0, 0, 0);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            match cosine(&s.shifts[i].vector, &s.shifts[j].vector) {
                Some(c) => {
                    sum += c;
                    n += 1;
                }
                None => skipped += 1,
            }
        }
    }
    ((n > 0).then(|| sum / n as f64), n, skipped)
}

/// Within-group mean cosine for every group, and a baseline averaging the
/// mean cosine of `n_random` seeded samples of `sample_size` shifts drawn
/// without replacement from all groups.
pub fn cosine_similarity_report(
    s: &ShiftSet,
    n_random: usize,
    sample_size: usize,
    seed: u64,
) -> Result<CosineReport> {
    let mut skipped_pairs = 0;
    let mut groups = Vec::new();
    for (name, idx) in s.groups() {
        if idx.len() < 2 {
            return Err(Error::InvalidArgument(format!(
                "group {name:?} has {} shift vector(s); need at least 2",
                idx.len()
            )));
        }
        let (mean, n_pairs, skipped) = mean_pairwise(s, &idx);
        skipped_pairs += skipped;
        groups.push(GroupCosine {
            group: name.to_string(),
            mean_cosine: mean.unwrap_or(f64::NAN),
            n_pairs,
        });
    }
    if sample_size < 2 || sample_size > s.len() {
        return Err(Error::InvalidArgument(format!(
            "baseline sample size must lie in 2..={}, got {sample_size}",
            s.len()
        )));
    }
    if n_random == 0 {
        return Err(Error::InvalidArgument("n_random must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trial_means = Vec::with_capacity(n_random);
    for _ in 0..n_random {
        let idx = sample(&mut rng, s.len(), sample_size).into_vec();
        if let (Some(m), _, _) = mean_pairwise(s, &idx) {
            trial_means.push(m);
        }
    }
    let random_baseline_mean = if trial_means.is_empty() {
        f64::NAN
    } else {
        trial_means.iter().sum::<f64>() / trial_means.len() as f64
    };
    Ok(CosineReport {
        groups,
        random_baseline_mean,
        n_random,
        sample_size,
        skipped_pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(vectors: &[(&str, Vec<f64>)]) -> ShiftSet {
        ShiftSet {
            shifts: vectors
                .iter()
                .enumerate()
                .map(|(i, (g, v))| Shift {
                    base_id: format!("b{i}"),
                    variant_id: format!("v{i}"),
                    group: g.to_string(),
                    vector: v.clone(),
                })
                .collect(),
        }
    }

    #[test]
    fn orthogonal_vectors_average_zero() {
        let s = set(&[("a", vec![1.0, 0.0]), ("a", vec![0.0, 1.0])]);
        let r = cosine_similarity_report(&s, 3, 2, 0).unwrap();
        assert_eq!(r.groups[0].mean_cosine, 0.0);
    }

    #[test]
    fn zero_vector_pairs_are_skipped() {
        let s = set(&[
            ("a", vec![1.0, 0.0]),
            ("a", vec![2.0, 0.0]),
            ("a", vec![0.0, 0.0]),
        ]);
        let r = cosine_similarity_report(&s, 1, 2, 0).unwrap();
        assert_eq!(r.skipped_pairs, 2);
        assert_eq!(r.groups[0].n_pairs, 1);
        assert!((r.groups[0].mean_cosine - 1.0).abs() < 1e-15);
    }

    #[test]
    fn singleton_group_rejected() {
        let s = set(&[("a", vec![1.0]), ("a", vec![1.0]), ("b", vec![1.0])]);
        assert!(cosine_similarity_report(&s, 1, 2, 0).is_err());
    }
}
