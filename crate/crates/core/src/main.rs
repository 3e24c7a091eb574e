use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use modelmap::config::{
    CenterBlock, EmbedBlock, EmbedInput, EmbedMethodName, ExperimentConfig, Inputs, KlBlock,
    OutlierScanBlock, PairsMode, Preprocess, ScalingBlock, ShiftBlock, TextOutlierBlock, SCHEMA,
};
use modelmap::embed::{TsneInit, DEFAULT_RANDOM_TRIALS, DEFAULT_SAMPLE_SIZE};
use modelmap::fixture::{write_fixture, FixtureSpec};
use modelmap::io::{load_matrix, save_centered, save_matrix, IngestOptions, MatrixFormat};
use modelmap::matrix::DEFAULT_CLIP_QUANTILE;
use modelmap::outlier::{DEFAULT_CHECKPOINT_K, DEFAULT_REMOVAL_FRACTION, DEFAULT_SEED_K, DEFAULT_WARMUP_STEP};
use modelmap::pipeline::{self, hash_file, OutputDir, RunOptions};
use modelmap::scaling::Window;
use modelmap::synth::{TakagiMap, TakagiSpec};
use modelmap::{Error, Result};

#[derive(Parser)]
#[command(name = "modelmap", version, about = "Model maps from log-likelihood vectors")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Directory for every file a command writes.
    #[arg(long, global = true, default_value = ".")]
    output_dir: PathBuf,
    /// Overrides the seed of every stochastic step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true, env = "MODELMAP_THREADS")]
    threads: Option<usize>,
    /// Center each analyzed subset on its own instead of inheriting the
    /// joint centering.
    #[arg(long, global = true)]
    recenter: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run every block of an experiment config.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Validate a matrix, optionally clip it and convert between formats.
    Ingest {
        input: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
        /// Write the (clipped) matrix here; the format follows the extension.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Double-center a matrix and write the map coordinates.
    Center {
        input: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
        /// Keep raw nats instead of rescaling to bits/byte.
        #[arg(long)]
        nats: bool,
        #[arg(long, default_value = "centered.bin")]
        out: PathBuf,
    },
    /// KL estimates with standard errors.
    Kl {
        input: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
        #[arg(long, value_enum, default_value = "all")]
        pairs: Pairs,
        /// Ordering key for consecutive pairs; only `step` is supported.
        #[arg(long, default_value = "step")]
        group_by: String,
        /// Restrict to these groups (repeatable).
        #[arg(long = "group")]
        groups: Vec<String>,
        #[arg(long)]
        nats: bool,
    },
    /// Text outlier scores and checkpoint/seed anomaly scans.
    Outliers {
        input: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
        #[arg(long, default_value_t = DEFAULT_WARMUP_STEP)]
        post_warmup_step: u64,
        #[arg(long, default_value_t = DEFAULT_REMOVAL_FRACTION)]
        removal_fraction: f64,
        /// Removal counts for the consecutive-KL sweep (repeatable).
        #[arg(long = "sweep")]
        sweep_counts: Vec<usize>,
        #[arg(long, default_value_t = DEFAULT_CHECKPOINT_K)]
        checkpoint_k: f64,
        /// Group holding seed replicates to scan (repeatable).
        #[arg(long = "seed-group")]
        seed_groups: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_SEED_K)]
        seed_k: f64,
        /// Weight-space trajectories for the weight-distance scan.
        #[arg(long)]
        weights: Option<PathBuf>,
    },
    /// Diffusion exponents along checkpoint trajectories.
    Scaling {
        input: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
        /// Start step (repeatable).
        #[arg(long, required = true)]
        t0: Vec<u64>,
        /// Window span in steps past t0.
        #[arg(long, conflicts_with_all = ["window_checkpoints", "window_all"])]
        window: Option<u64>,
        /// Window as a number of checkpoints past t0 (default 10).
        #[arg(long, conflicts_with = "window_all")]
        window_checkpoints: Option<usize>,
        /// Use every checkpoint after t0.
        #[arg(long)]
        window_all: bool,
        #[arg(long = "group")]
        groups: Vec<String>,
        /// Also fit exp(q) computed from raw-nat coordinates.
        #[arg(long)]
        exp_map: bool,
        #[arg(long)]
        weights: Option<PathBuf>,
        /// Start steps for an exponent sweep (repeatable).
        #[arg(long = "sweep-t0")]
        sweep_t0: Vec<u64>,
    },
    /// PCA or t-SNE coordinates for plotting.
    Embed {
        input: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
        #[arg(long, value_enum, default_value = "tsne")]
        method: Method,
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 30.0)]
        perplexity: f64,
        #[arg(long, default_value_t = 1000)]
        iterations: usize,
        /// Start t-SNE from random coordinates instead of classical scaling.
        #[arg(long)]
        random_init: bool,
        /// Embed pairwise KL values as squared distances.
        #[arg(long)]
        from_kl: bool,
        /// Group whose PCA component series gets an autocorrelation report.
        #[arg(long)]
        acf_group: Option<String>,
        #[arg(long, default_value_t = 0)]
        acf_component: usize,
    },
    /// Synthetic generators.
    Synth {
        #[command(subcommand)]
        kind: Synth,
    },
    /// Cosine similarity of shift vectors between paired models.
    Shift {
        input: PathBuf,
        #[command(flatten)]
        load: LoadArgs,
        /// `base_id:variant_id` (repeatable).
        #[arg(long = "pair", required = true)]
        pairs: Vec<String>,
        #[arg(long, default_value_t = DEFAULT_RANDOM_TRIALS)]
        n_random: usize,
        #[arg(long, default_value_t = DEFAULT_SAMPLE_SIZE)]
        sample_size: usize,
    },
    /// Check an output directory against its manifest and print the summary.
    Summarize { dir: PathBuf },
    /// Print the experiment config JSON Schema.
    Schema,
}

#[derive(Args)]
struct LoadArgs {
    /// Input format; inferred from the extension when omitted.
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Replace -inf log-likelihoods with this value.
    #[arg(long, allow_hyphen_values = true)]
    neg_inf_floor: Option<f64>,
    /// Bottom quantile to clip at; 0 disables clipping.
    #[arg(long, default_value_t = DEFAULT_CLIP_QUANTILE)]
    clip: f64,
}

#[derive(Subcommand)]
enum Synth {
    /// Fractional Brownian motion paths.
    Fbm {
        #[arg(long)]
        hurst: f64,
        #[arg(long, default_value_t = 1024)]
        n_steps: usize,
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value_t = 1)]
        n_paths: usize,
    },
    /// Evaluate a Takagi map along a line through the origin.
    Takagi {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 2.0)]
        lambda: f64,
        #[arg(long)]
        k_max: Option<usize>,
        #[arg(long, default_value_t = 1)]
        output_dim: usize,
        #[arg(long, default_value_t = 1025)]
        n_points: usize,
    },
    /// Brownian input pushed through a folding map; reports c_w, c_q, alpha.
    Folding {
        /// Hölder exponent of the Takagi map; omit for the identity map.
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long, default_value_t = 20)]
        n_paths: usize,
        #[arg(long)]
        n_steps: Option<usize>,
    },
    /// Write a synthetic data set and a config exercising every block.
    Fixture,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Binary,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum Pairs {
    All,
    Consecutive,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pca,
    Tsne,
}

const DEFAULT_SEED: u64 = 0;

impl LoadArgs {
    fn format_for(&self, path: &Path) -> MatrixFormat {
        match self.format {
            Some(Format::Binary) => MatrixFormat::Binary,
            Some(Format::Csv) => MatrixFormat::Csv,
            None => MatrixFormat::from_path(path),
        }
    }

    fn clip(&self) -> Option<f64> {
        (self.clip > 0.0).then_some(self.clip)
    }
}

fn base_config(input: &Path, load: &LoadArgs, g: &Global) -> ExperimentConfig {
    ExperimentConfig {
        inputs: Inputs {
            matrix: input.to_path_buf(),
            format: load.format.map(|f| match f {
                Format::Binary => modelmap::config::FormatName::Binary,
                Format::Csv => modelmap::config::FormatName::Csv,
            }),
            weights: None,
            neg_inf_floor: load.neg_inf_floor,
        },
        output_dir: g.output_dir.clone(),
        preprocess: Preprocess {
            clip_quantile: load.clip(),
            text_outliers: None,
        },
        center: CenterBlock {
            bits_per_byte: true,
            recenter: g.recenter,
        },
        kl: None,
        outliers: None,
        scaling: None,
        embed: None,
        shift: None,
        synth: None,
    }
}

fn run_config(cfg: ExperimentConfig, g: &Global) -> Result<serde_json::Value> {
    cfg.validate(g.seed)?;
    let manifest = pipeline::run(
        &cfg,
        &RunOptions {
            seed: g.seed,
            recenter: g.recenter,
        },
    )?;
    Ok(json!({
        "output_dir": cfg.output_dir,
        "outputs": manifest.outputs.iter().map(|o| &o.path).collect::<Vec<_>>(),
    }))
}

fn execute(cli: Cli) -> Result<serde_json::Value> {
    let g = &cli.global;
    let seed = g.seed.unwrap_or(DEFAULT_SEED);
    match cli.command {
        Command::Run { config } => {
            let mut cfg = ExperimentConfig::load(&config, g.seed)?;
            if g.output_dir != Path::new(".") {
                cfg.output_dir = g.output_dir.clone();
            }
            run_config(cfg, g)
        }
        Command::Ingest { input, load, out } => {
            let loaded = load_matrix(
                &input,
                load.format_for(&input),
                &IngestOptions {
                    neg_inf_floor: load.neg_inf_floor,
                },
            )?;
            let mut m = loaded.matrix;
            if let Some(q) = load.clip() {
                m = m.clip_bottom_quantile(q)?;
            }
            if let Some(out) = &out {
                let path = g.output_dir.join(out);
                std::fs::create_dir_all(&g.output_dir).map_err(|e| Error::Io {
                    path: g.output_dir.clone(),
                    source: e,
                })?;
                save_matrix(&m, &path, MatrixFormat::from_path(&path))?;
            }
            Ok(json!({
                "input": hash_file(&input)?,
                "n_models": m.n_models(),
                "n_texts": m.n_texts(),
                "mean_bytes": m.texts().mean_bytes(),
                "sidecar_missing": loaded.sidecar_missing,
                "floored": loaded.floored,
                "clip_quantile": load.clip(),
            }))
        }
        Command::Center {
            input,
            load,
            nats,
            out,
        } => {
            let mut m = load_matrix(
                &input,
                load.format_for(&input),
                &IngestOptions {
                    neg_inf_floor: load.neg_inf_floor,
                },
            )?
            .matrix;
            if let Some(q) = load.clip() {
                m = m.clip_bottom_quantile(q)?;
            }
            let mut c = m.double_center()?;
            if !nats {
                c = c.rescale_bits_per_byte()?;
            }
            let mut dir = OutputDir::create(&g.output_dir)?;
            let path = dir.path(&out.to_string_lossy());
            save_centered(&c, &path, MatrixFormat::from_path(&path))?;
            let name = out.to_string_lossy().to_string();
            dir.register(&name);
            dir.register(&modelmap::io::sidecar_path(&out).to_string_lossy());
            dir.finish(vec![hash_file(&input)?])?;
            Ok(json!({ "written": name, "scale": c.scale(), "residual": c.centering_residual() }))
        }
        Command::Kl {
            input,
            load,
            pairs,
            group_by,
            groups,
            nats,
        } => {
            if group_by != "step" {
                return Err(Error::Config(format!(
                    "unsupported --group-by `{group_by}`; only `step` is available"
                )));
            }
            let mut cfg = base_config(&input, &load, g);
            cfg.center.bits_per_byte = !nats;
            cfg.kl = Some(KlBlock {
                pairs: match pairs {
                    Pairs::All => PairsMode::All,
                    Pairs::Consecutive => PairsMode::Consecutive,
                },
                groups: (!groups.is_empty()).then_some(groups),
            });
            run_config(cfg, g)
        }
        Command::Outliers {
            input,
            load,
            post_warmup_step,
            removal_fraction,
            sweep_counts,
            checkpoint_k,
            seed_groups,
            seed_k,
            weights,
        } => {
            let mut cfg = base_config(&input, &load, g);
            cfg.inputs.weights = weights;
            cfg.preprocess.text_outliers = Some(TextOutlierBlock {
                removal_fraction,
                post_warmup_step,
                sweep_counts,
            });
            cfg.outliers = Some(OutlierScanBlock {
                checkpoint_k,
                seed_groups,
                seed_k,
            });
            run_config(cfg, g)
        }
        Command::Scaling {
            input,
            load,
            t0,
            window,
            window_checkpoints,
            window_all,
            groups,
            exp_map,
            weights,
            sweep_t0,
        } => {
            let mut cfg = base_config(&input, &load, g);
            cfg.inputs.weights = weights;
            let window = match (window, window_checkpoints, window_all) {
                (Some(span), _, _) => Window::Steps(span),
                (_, _, true) => Window::All,
                (_, Some(n), _) => Window::Checkpoints(n),
                _ => Window::default(),
            };
            cfg.scaling = Some(ScalingBlock {
                groups: (!groups.is_empty()).then_some(groups),
                t0,
                window,
                exp_map,
                sweep_t0,
            });
            run_config(cfg, g)
        }
        Command::Embed {
            input,
            load,
            method,
            dim,
            perplexity,
            iterations,
            random_init,
            from_kl,
            acf_group,
            acf_component,
        } => {
            let mut cfg = base_config(&input, &load, g);
            cfg.embed = Some(EmbedBlock {
                method: match method {
                    Method::Pca => EmbedMethodName::Pca,
                    Method::Tsne => EmbedMethodName::Tsne,
                },
                dim,
                input: if from_kl { EmbedInput::Kl } else { EmbedInput::Coords },
                perplexity,
                iterations,
                init: if random_init { TsneInit::Random } else { TsneInit::Pca },
                seed: Some(seed),
                kl_line_width: true,
                acf: acf_group.map(|group| modelmap::config::AcfBlock {
                    group,
                    component: acf_component,
                    from_step: None,
                }),
            });
            run_config(cfg, g)
        }
        Command::Shift {
            input,
            load,
            pairs,
            n_random,
            sample_size,
        } => {
            let pairs = pairs
                .iter()
                .map(|p| {
                    p.split_once(':')
                        .map(|(a, b)| (a.to_string(), b.to_string()))
                        .ok_or_else(|| Error::Config(format!("pair `{p}` is not base:variant")))
                })
                .collect::<Result<Vec<_>>>()?;
            let mut cfg = base_config(&input, &load, g);
            cfg.shift = Some(ShiftBlock {
                pairs,
                n_random,
                sample_size,
                seed: Some(seed),
            });
            run_config(cfg, g)
        }
        Command::Synth { kind } => synth(kind, g, seed),
        Command::Summarize { dir } => summarize(&dir),
        Command::Schema => {
            print!("{SCHEMA}");
            Ok(serde_json::Value::Null)
        }
    }
}

fn synth(kind: Synth, g: &Global, seed: u64) -> Result<serde_json::Value> {
    match kind {
        Synth::Fbm {
            hurst,
            n_steps,
            dim,
            n_paths,
        } => {
            let mut dir = OutputDir::create(&g.output_dir)?;
            let spec = modelmap::synth::FbmSpec {
                hurst,
                n_steps,
                dim,
                seed,
            };
            let paths = modelmap::synth::fbm_ensemble(&spec, n_paths)?;
            let mut header = vec!["path".to_string(), "step".to_string()];
            header.extend((0..dim).map(|d| format!("x{d}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let mut rows = Vec::new();
            for (p, traj) in paths.iter().enumerate() {
                for i in 0..traj.len() {
                    let mut row = vec![p.to_string(), traj.steps()[i].to_string()];
                    row.extend(traj.point(i).iter().map(|v| v.to_string()));
                    rows.push(row);
                }
            }
            dir.write_csv("fbm.csv", &header, &rows)?;
            dir.finish(vec![])?;
            Ok(json!({ "written": "fbm.csv", "spec": spec, "n_paths": n_paths }))
        }
        Synth::Takagi {
            alpha,
            lambda,
            k_max,
            output_dim,
            n_points,
        } => {
            let spec = TakagiSpec {
                alpha,
                lambda,
                k_max: k_max.unwrap_or_else(|| TakagiSpec::default_k_max(alpha, lambda, 1e-6)),
                input_dim: 1,
                output_dim,
                seed,
            };
            let map = TakagiMap::new(&spec)?;
            if n_points < 2 {
                return Err(Error::InvalidArgument("need at least 2 points".into()));
            }
            let mut header = vec!["x".to_string()];
            header.extend((0..output_dim).map(|d| format!("y{d}")));
            let header: Vec<&str> = header.iter().map(String::as_str).collect();
            let rows: Vec<Vec<String>> = (0..n_points)
                .map(|i| {
                    let x = i as f64 / (n_points - 1) as f64;
                    std::iter::once(x.to_string())
                        .chain(map.apply(&[x]).iter().map(|v| v.to_string()))
                        .collect()
                })
                .collect();
            let mut dir = OutputDir::create(&g.output_dir)?;
            dir.write_csv("takagi.csv", &header, &rows)?;
            dir.finish(vec![])?;
            Ok(json!({ "written": "takagi.csv", "spec": spec, "tail_bound": map.tail_bound() }))
        }
        Synth::Folding {
            alpha,
            n_paths,
            n_steps,
        } => {
            folding_only(alpha, n_paths, n_steps, g, seed)
        }
        Synth::Fixture => {
            let files = write_fixture(&g.output_dir, &FixtureSpec::default())?;
            Ok(json!(files))
        }
    }
}

/// The folding experiment without a matrix input.
fn folding_only(
    alpha: Option<f64>,
    n_paths: usize,
    n_steps: Option<usize>,
    g: &Global,
    seed: u64,
) -> Result<serde_json::Value> {
    if let Some(a) = alpha {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Config(format!("--alpha must lie in (0, 1), got {a}")));
        }
    }
    let mut spec = modelmap::synth::FoldingSpec::takagi_default(alpha.unwrap_or(0.5), seed);
    if alpha.is_none() {
        spec.map = modelmap::synth::FoldingMap::Identity;
    }
    if let Some(n) = n_steps {
        spec.fbm.n_steps = n;
    }
    let ens = modelmap::synth::folding_ensemble(&spec, n_paths)?;
    let rows: Vec<Vec<String>> = ens
        .runs
        .iter()
        .enumerate()
        .map(|(i, r)| vec![i.to_string(), r.c_w.to_string(), r.c_q.to_string(), r.alpha_hat.to_string()])
        .collect();
    let mut dir = OutputDir::create(&g.output_dir)?;
    dir.write_csv("synth_folding.csv", &["path", "c_w", "c_q", "alpha_hat"], &rows)?;
    let summary = json!({
        "alpha": alpha,
        "n_paths": n_paths,
        "mean_c_w": ens.mean_c_w,
        "mean_c_q": ens.mean_c_q,
        "mean_alpha_hat": ens.mean_alpha_hat,
    });
    dir.write_json("folding.json", &summary)?;
    dir.finish(vec![])?;
    Ok(summary)
}

fn summarize(dir: &Path) -> Result<serde_json::Value> {
    let manifest_path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&manifest_path).map_err(|e| Error::Io {
        path: manifest_path.clone(),
        source: e,
    })?;
    let manifest: serde_json::Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: manifest_path.clone(),
        message: e.to_string(),
    })?;
    let mut mismatched = Vec::new();
    let outputs = manifest["outputs"].as_array().cloned().unwrap_or_default();
    for o in &outputs {
        let name = o["path"].as_str().unwrap_or_default();
        let actual = hash_file(&dir.join(name))?;
        if Some(actual.sha256.as_str()) != o["sha256"].as_str() {
            mismatched.push(name.to_string());
        }
    }
    let summary = std::fs::read_to_string(dir.join("summary.json"))
        .ok()
        .and_then(|s| serde_json::from_str::<serde_json::Value>(&s).ok());
    if !mismatched.is_empty() {
        return Err(Error::Parse {
            path: manifest_path,
            message: format!("hash mismatch for {}", mismatched.join(", ")),
        });
    }
    Ok(json!({ "verified_outputs": outputs.len(), "summary": summary }))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("{}", json!({ "error": "config", "message": e.to_string() }));
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(serde_json::Value::Null) => ExitCode::SUCCESS,
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serializable"));
            ExitCode::SUCCESS
        }
        Err(e) => {
            let kind = e.kind();
            eprintln!(
                "{}",
                json!({ "error": kind.as_str(), "message": e.to_string(), "exit_code": kind.exit_code() })
            );
            ExitCode::from(kind.exit_code() as u8)
        }
    }
}
