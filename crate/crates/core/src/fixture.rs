//! Synthetic data set with known structure, used by `modelmap synth fixture`,
//! the smoke tests and the README walkthrough.
//!
//! Each group is a training run whose weights follow a Brownian path in a
//! small latent space; log-likelihoods are a per-text baseline plus a fixed
//! linear readout of the weights. Alongside the runs there are seed
//! replicates of the last checkpoint of the first run (one planted far away)
//! and quantized variants sharing a per-group shift direction.

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::Serialize;
use serde_json::json;

use crate::error::{Error, Result};
use crate::io::{save_matrix, MatrixFormat};
use crate::matrix::{LogLikelihoodMatrix, ModelMeta, TextSetMeta};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureSpec {
    pub n_texts: usize,
    pub groups: Vec<String>,
    pub steps: Vec<u64>,
    pub weight_dim: usize,
    /// Weight-noise scale per unit step.
    pub step_sigma: f64,
    pub n_seeds: usize,
    /// Number of final checkpoints per group that get a quantized variant.
    pub n_quantized: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        Self {
            n_texts: 200,
            groups: vec!["small".into(), "large".into()],
            steps: (0..24).map(|i| i * 100).collect(),
            weight_dim: 12,
            step_sigma: 0.01,
            n_seeds: 9,
            n_quantized: 3,
            seed: 20240501,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fixture {
    pub loglik: LogLikelihoodMatrix,
    /// One row per stepped checkpoint, columns are weight coordinates.
    pub weights: LogLikelihoodMatrix,
    pub shift_pairs: Vec<(String, String)>,
    /// Id of the planted outlying seed replicate, if any.
    pub planted_seed: Option<String>,
}

const BASE_BITS_PER_BYTE: f64 = 0.9;
const READOUT_NOISE: f64 = 0.01;

pub fn generate_fixture(spec: &FixtureSpec) -> Result<Fixture> {
    if spec.groups.is_empty() || spec.steps.len() < 5 || spec.n_texts < 4 || spec.weight_dim == 0 {
        return Err(Error::InvalidArgument(
            "fixture needs a group, 5 steps, 4 texts and a weight dimension".into(),
        ));
    }
    if spec.steps.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::InvalidArgument("fixture steps must increase".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (n, d) = (spec.n_texts, spec.weight_dim);
    let byte_lengths: Vec<u64> = (0..n).map(|_| rng.random_range(100..400)).collect();
    let baseline: Vec<f64> = byte_lengths
        .iter()
        .map(|&b| -(b as f64) * BASE_BITS_PER_BYTE * std::f64::consts::LN_2)
        .collect();
    let readout: Vec<f64> = (0..n * d).map(|_| rng.sample(StandardNormal)).collect();
    let noise = Normal::new(0.0, READOUT_NOISE).expect("valid normal");
    let loglik_row = |w: &[f64], rng: &mut ChaCha8Rng| -> Vec<f64> {
        (0..n)
            .map(|x| {
                let lin: f64 = readout[x * d..(x + 1) * d].iter().zip(w).map(|(a, b)| a * b).sum();
                baseline[x] + lin + noise.sample(rng)
            })
            .collect::<Vec<f64>>()
    };

    let init: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.1).collect();
    let mut ll_rows = Vec::new();
    let mut models = Vec::new();
    let mut w_rows = Vec::new();
    let mut w_models = Vec::new();
    let mut finals = Vec::new();
    for group in &spec.groups {
        let mut w = init.clone();
        let mut prev = spec.steps[0];
        let mut path = Vec::new();
        for &step in &spec.steps {
            let sd = spec.step_sigma * ((step - prev) as f64).sqrt();
            for v in &mut w {
                *v += sd * rng.sample::<f64, _>(StandardNormal);
            }
            prev = step;
            let id = format!("{group}-{step}");
            let meta = ModelMeta::new(&id).with_group(group).with_step(step);
            ll_rows.push(loglik_row(&w, &mut rng));
            models.push(meta.clone());
            w_rows.push(w.clone());
            w_models.push(meta);
            path.push((id, w.clone()));
        }
        finals.push((group.clone(), path));
    }

    let mut planted_seed = None;
    if spec.n_seeds > 0 {
        let (_, path) = &finals[0];
        let (base_id, base_w) = path.last().expect("nonempty path");
        for s in 0..spec.n_seeds {
            let spread = if s + 1 == spec.n_seeds { 1.0 } else { 0.003 };
            let w: Vec<f64> = base_w
                .iter()
                .map(|v| v + spread * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let id = format!("seed{s}");
            if s + 1 == spec.n_seeds {
                planted_seed = Some(id.clone());
            }
            ll_rows.push(loglik_row(&w, &mut rng));
            models.push(
                ModelMeta::new(id)
                    .with_group("seeds")
                    .with_tag("seed", s.to_string())
                    .with_tag("replicates", base_id.clone()),
            );
        }
    }

    let mut shift_pairs = Vec::new();
    for (group, path) in &finals {
        let direction: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal) * 0.05).collect();
        for (id, w) in path.iter().rev().take(spec.n_quantized) {
            let shifted: Vec<f64> = w
                .iter()
                .zip(&direction)
                .map(|(a, u)| a + u + 0.005 * rng.sample::<f64, _>(StandardNormal))
                .collect();
            let variant = format!("{id}-8bit");
            ll_rows.push(loglik_row(&shifted, &mut rng));
            models.push(
                ModelMeta::new(&variant)
                    .with_group(group)
                    .with_tag("quant", "8bit")
                    .with_tag("base", id.clone()),
            );
            shift_pairs.push((id.clone(), variant));
        }
    }

    let texts = TextSetMeta::new((0..n).map(|i| format!("text{i:04}")).collect(), byte_lengths)?;
    let loglik = LogLikelihoodMatrix::from_rows(&ll_rows, models, texts)?;
    let w_texts = TextSetMeta::new((0..d).map(|i| format!("w{i}")).collect(), vec![1; d])?;
    let weights = LogLikelihoodMatrix::from_rows(&w_rows, w_models, w_texts)?;
    Ok(Fixture {
        loglik,
        weights,
        shift_pairs,
        planted_seed,
    })
}

/// Paths written by [`write_fixture`].
#[derive(Debug, Clone, Serialize)]
pub struct FixtureFiles {
    pub matrix: PathBuf,
    pub weights: PathBuf,
    pub config: PathBuf,
}

/// Writes the fixture (binary log-likelihoods, CSV weights, sidecars) and a
/// config exercising every analysis block.
pub fn write_fixture(dir: &Path, spec: &FixtureSpec) -> Result<FixtureFiles> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let fx = generate_fixture(spec)?;
    let matrix = dir.join("loglik.bin");
    let weights = dir.join("weights.csv");
    save_matrix(&fx.loglik, &matrix, MatrixFormat::Binary)?;
    save_matrix(&fx.weights, &weights, MatrixFormat::Csv)?;

    let t0 = spec.steps[spec.steps.len() / 3];
    let k = fx.loglik.n_models();
    let perplexity = ((k - 1) as f64 / 3.0 - 1.0).clamp(2.0, 30.0).floor();
    let config = json!({
        "inputs": { "matrix": "loglik.bin", "weights": "weights.csv" },
        "output_dir": "out",
        "preprocess": {
            "clip_quantile": 0.02,
            "text_outliers": {
                "removal_fraction": 0.03,
                "post_warmup_step": spec.steps[1],
                "sweep_counts": [2, 5]
            }
        },
        "center": { "bits_per_byte": true, "recenter": false },
        "kl": { "pairs": "consecutive" },
        "outliers": { "checkpoint_k": 10.0, "seed_groups": ["seeds"], "seed_k": 5.0 },
        "scaling": {
            "t0": [t0],
            "window": { "kind": "checkpoints", "value": 10 },
            "exp_map": true,
            "sweep_t0": spec.steps[..spec.steps.len() / 2].to_vec()
        },
        "embed": {
            "method": "tsne",
            "perplexity": perplexity,
            "seed": spec.seed,
            "acf": { "group": spec.groups[0], "component": 0 }
        },
        "shift": { "pairs": fx.shift_pairs, "n_random": 20, "sample_size": 2 * spec.n_quantized.max(1), "seed": spec.seed },
        "synth": {
            "fbm": { "hurst": 0.3, "n_steps": 128, "dim": 4, "n_paths": 4, "seed": spec.seed },
            "folding": { "alpha": 0.3, "n_paths": 2, "n_steps": 512, "seed": spec.seed }
        }
    });
    let path = dir.join("config.json");
    let mut text = serde_json::to_string_pretty(&config).expect("config serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(FixtureFiles {
        matrix,
        weights,
        config: path,
    })
}
