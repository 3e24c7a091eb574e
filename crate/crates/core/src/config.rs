//! Experiment configuration for `modelmap run`.
//!
//! A config is one JSON document. Unknown keys are rejected, relative paths
//! are resolved against the config file's directory, and every stochastic
//! block must carry a seed unless a global seed override is supplied. The
//! JSON Schema in `schema/experiment.schema.json` describes the same shape.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::embed::{TsneInit, DEFAULT_RANDOM_TRIALS, DEFAULT_SAMPLE_SIZE};
use crate::error::{Error, Result};
use crate::io::MatrixFormat;
use crate::matrix::DEFAULT_CLIP_QUANTILE;
use crate::outlier::{DEFAULT_CHECKPOINT_K, DEFAULT_REMOVAL_FRACTION, DEFAULT_SEED_K, DEFAULT_WARMUP_STEP};
use crate::scaling::Window;

/// JSON Schema for config files, embedded so the CLI can print it.
pub const SCHEMA: &str = include_str!("../schema/experiment.schema.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub inputs: Inputs,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub preprocess: Preprocess,
    #[serde(default)]
    pub center: CenterBlock,
    #[serde(default)]
    pub kl: Option<KlBlock>,
    #[serde(default)]
    pub outliers: Option<OutlierScanBlock>,
    #[serde(default)]
    pub scaling: Option<ScalingBlock>,
    #[serde(default)]
    pub embed: Option<EmbedBlock>,
    #[serde(default)]
    pub shift: Option<ShiftBlock>,
    #[serde(default)]
    pub synth: Option<SynthBlock>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FormatName {
    Binary,
    Csv,
}

impl From<FormatName> for MatrixFormat {
    fn from(f: FormatName) -> Self {
        match f {
            FormatName::Binary => MatrixFormat::Binary,
            FormatName::Csv => MatrixFormat::Csv,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Inputs {
    /// Log-likelihood matrix (binary container or CSV) with its sidecar.
    pub matrix: PathBuf,
    /// Inferred from the extension when absent.
    #[serde(default)]
    pub format: Option<FormatName>,
    /// Optional weight-space trajectories: one row per checkpoint, matched
    /// to the log-likelihood rows by model id.
    #[serde(default)]
    pub weights: Option<PathBuf>,
    /// Replace `-inf` log-likelihoods with this value instead of failing.
    #[serde(default)]
    pub neg_inf_floor: Option<f64>,
}

impl Inputs {
    pub fn matrix_format(&self) -> MatrixFormat {
        self.format
            .map(Into::into)
            .unwrap_or_else(|| MatrixFormat::from_path(&self.matrix))
    }

    pub fn weights_format(&self) -> Option<MatrixFormat> {
        self.weights.as_deref().map(MatrixFormat::from_path)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    /// Raise every entry below this quantile to the quantile; `null` skips.
    #[serde(default = "default_clip")]
    pub clip_quantile: Option<f64>,
    #[serde(default)]
    pub text_outliers: Option<TextOutlierBlock>,
}

fn default_clip() -> Option<f64> {
    Some(DEFAULT_CLIP_QUANTILE)
}

impl Default for Preprocess {
    fn default() -> Self {
        Self {
            clip_quantile: default_clip(),
            text_outliers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TextOutlierBlock {
    #[serde(default = "default_removal_fraction")]
    pub removal_fraction: f64,
    #[serde(default = "default_warmup")]
    pub post_warmup_step: u64,
    /// Also report consecutive KL after removing each of these counts.
    #[serde(default)]
    pub sweep_counts: Vec<usize>,
}

fn default_removal_fraction() -> f64 {
    DEFAULT_REMOVAL_FRACTION
}

fn default_warmup() -> u64 {
    DEFAULT_WARMUP_STEP
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CenterBlock {
    /// Rescale centered coordinates to bits/byte.
    #[serde(default = "yes")]
    pub bits_per_byte: bool,
    /// Center each analyzed subset on its own instead of inheriting the
    /// joint centering of the full matrix.
    #[serde(default)]
    pub recenter: bool,
}

fn yes() -> bool {
    true
}

impl Default for CenterBlock {
    fn default() -> Self {
        Self {
            bits_per_byte: true,
            recenter: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairsMode {
    All,
    Consecutive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KlBlock {
    pub pairs: PairsMode,
    /// Restrict to these groups; all groups when absent.
    #[serde(default)]
    pub groups: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutlierScanBlock {
    /// MAD multiplier for consecutive-checkpoint KL spikes.
    #[serde(default = "default_checkpoint_k")]
    pub checkpoint_k: f64,
    /// Groups whose models are seeds of one configuration, scanned for
    /// distant members.
    #[serde(default)]
    pub seed_groups: Vec<String>,
    #[serde(default = "default_seed_k")]
    pub seed_k: f64,
}

fn default_checkpoint_k() -> f64 {
    DEFAULT_CHECKPOINT_K
}

fn default_seed_k() -> f64 {
    DEFAULT_SEED_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScalingBlock {
    #[serde(default)]
    pub groups: Option<Vec<String>>,
    /// Start steps; each must be a checkpoint of every analyzed group.
    pub t0: Vec<u64>,
    #[serde(default)]
    pub window: Window,
    /// Also fit exponents of `exp(q)` computed from raw-nat coordinates.
    #[serde(default)]
    pub exp_map: bool,
    /// Start steps for an exponent sweep; empty skips the sweep.
    #[serde(default)]
    pub sweep_t0: Vec<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMethodName {
    Pca,
    Tsne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedInput {
    /// Centered coordinates.
    Coords,
    /// Pairwise KL estimates used as squared distances (t-SNE only).
    Kl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedBlock {
    pub method: EmbedMethodName,
    #[serde(default = "default_dim")]
    pub dim: usize,
    #[serde(default = "default_input")]
    pub input: EmbedInput,
    #[serde(default = "default_perplexity")]
    pub perplexity: f64,
    #[serde(default = "default_iterations")]
    pub iterations: usize,
    #[serde(default = "default_init")]
    pub init: TsneInit,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Scale trajectory segment widths by consecutive KL.
    #[serde(default = "yes")]
    pub kl_line_width: bool,
    /// Autocorrelation of one PCA component along one group's trajectory.
    #[serde(default)]
    pub acf: Option<AcfBlock>,
}

fn default_dim() -> usize {
    2
}

fn default_input() -> EmbedInput {
    EmbedInput::Coords
}

fn default_perplexity() -> f64 {
    30.0
}

fn default_iterations() -> usize {
    1000
}

fn default_init() -> TsneInit {
    TsneInit::Pca
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AcfBlock {
    pub group: String,
    /// Zero-based principal component.
    pub component: usize,
    #[serde(default)]
    pub from_step: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftBlock {
    /// `[base_id, variant_id]` pairs.
    pub pairs: Vec<(String, String)>,
    #[serde(default = "default_n_random")]
    pub n_random: usize,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_n_random() -> usize {
    DEFAULT_RANDOM_TRIALS
}

fn default_sample_size() -> usize {
    DEFAULT_SAMPLE_SIZE
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthBlock {
    #[serde(default)]
    pub fbm: Option<FbmBlock>,
    #[serde(default)]
    pub folding: Option<FoldingBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FbmBlock {
    pub hurst: f64,
    pub n_steps: usize,
    #[serde(default = "one")]
    pub dim: usize,
    #[serde(default = "one")]
    pub n_paths: usize,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FoldingBlock {
    /// Hölder exponent of the Takagi map; `null` uses the identity map.
    #[serde(default)]
    pub alpha: Option<f64>,
    #[serde(default = "default_folding_paths")]
    pub n_paths: usize,
    #[serde(default)]
    pub n_steps: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_folding_paths() -> usize {
    20
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads, resolves relative paths against the file's directory, and
    /// validates.
    pub fn load(path: &Path, seed_override: Option<u64>) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate(seed_override)?;
        Ok(cfg)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.inputs.matrix);
        if let Some(w) = self.inputs.weights.as_mut() {
            fix(w);
        }
        fix(&mut self.output_dir);
    }

    /// Checks that inputs exist, parameters are in range, and stochastic
    /// blocks are seeded.
    pub fn validate(&self, seed_override: Option<u64>) -> Result<()> {
        let err = |m: String| Err(Error::Config(m));
        for p in std::iter::once(&self.inputs.matrix).chain(self.inputs.weights.as_ref()) {
            if !p.is_file() {
                return err(format!("input file {} does not exist", p.display()));
            }
        }
        if let Some(q) = self.preprocess.clip_quantile {
            if !(0.0..1.0).contains(&q) {
                return err(format!("clip_quantile must lie in [0, 1), got {q}"));
            }
        }
        if let Some(t) = &self.preprocess.text_outliers {
            if !(0.0..1.0).contains(&t.removal_fraction) {
                return err(format!(
                    "removal_fraction must lie in [0, 1), got {}",
                    t.removal_fraction
                ));
            }
        }
        let seeded = |block: &str, seed: Option<u64>| {
            if seed.is_none() && seed_override.is_none() {
                Err(Error::Config(format!("block `{block}` needs an explicit seed")))
            } else {
                Ok(())
            }
        };
        if let Some(s) = &self.scaling {
            if s.t0.is_empty() {
                return err("scaling.t0 must list at least one start step".into());
            }
        }
        if let Some(o) = &self.outliers {
            if !(o.checkpoint_k > 0.0 && o.seed_k > 0.0) {
                return err("outlier multipliers must be positive".into());
            }
        }
        if let Some(e) = &self.embed {
            match e.method {
                EmbedMethodName::Tsne => {
                    if !(e.dim == 2 || e.dim == 3) {
                        return err(format!("t-SNE dim must be 2 or 3, got {}", e.dim));
                    }
                    seeded("embed", e.seed)?;
                }
                EmbedMethodName::Pca => {
                    if e.input == EmbedInput::Kl {
                        return err("PCA runs on coordinates; use input = \"coords\"".into());
                    }
                    if e.dim == 0 {
                        return err("embed.dim must be positive".into());
                    }
                }
            }
        }
        if let Some(s) = &self.shift {
            if s.pairs.is_empty() {
                return err("shift.pairs is empty".into());
            }
            seeded("shift", s.seed)?;
        }
        if let Some(s) = &self.synth {
            if let Some(f) = &s.fbm {
                if !(f.hurst > 0.0 && f.hurst < 1.0) {
                    return err(format!("synth.fbm.hurst must lie in (0, 1), got {}", f.hurst));
                }
                seeded("synth.fbm", f.seed)?;
            }
            if let Some(f) = &s.folding {
                if let Some(a) = f.alpha {
                    if !(a > 0.0 && a < 1.0) {
                        return err(format!("synth.folding.alpha must lie in (0, 1), got {a}"));
                    }
                }
                seeded("synth.folding", f.seed)?;
            }
        }
        Ok(())
    }
}
