//! Config-driven execution: ingest, preprocess, center, then each requested
//! analysis block in a fixed order. Every file written lands in the output
//! directory and is listed with its SHA-256 in `manifest.json`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::config::{EmbedInput, EmbedMethodName, ExperimentConfig, PairsMode};
use crate::divergence::{
    consecutive_kl, entropy_upper_bound, group_summary, kl_matrix, trajectory_rows, ConsecutiveKl,
    KlMatrixResult,
};
use crate::embed::{
    autocorrelation, cosine_similarity_report, pca, shift_vectors, spiral_period, tsne_from_coords,
    tsne_from_sq_distances, Embedding, TsneParams,
};
use crate::error::{Error, Result};
use crate::io::{load_matrix, save_centered, IngestOptions, MatrixFormat};
use crate::matrix::{CenteredMap, LogLikelihoodMatrix, RowMatrix, Scale};
use crate::outlier::{
    checkpoint_anomaly_scan, remove_texts, removal_sweep, seed_anomaly_scan, text_outlier_scores,
};
use crate::plot::{displacement_svg, embedding_svg, DisplacementSeries};
use crate::scaling::{
    compare_spaces, exponent_sweep, fit_trajectory, fractal_dimension, squared_displacement, Space,
    Trajectory, Window,
};
use crate::synth::{fbm_ensemble, folding_ensemble, FbmSpec, FoldingMap, FoldingSpec};

/// Command-line overrides applied on top of a config.
#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    /// Replaces the seed of every stochastic block.
    pub seed: Option<u64>,
    /// Forces per-subset centering.
    pub recenter: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub inputs: Vec<FileEntry>,
    pub outputs: Vec<FileEntry>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<FileEntry> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(FileEntry {
        path: path.display().to_string(),
        sha256: sha256_hex(&bytes),
        bytes: bytes.len() as u64,
    })
}

/// Tracks what has been written to the output directory.
pub struct OutputDir {
    root: PathBuf,
    written: BTreeSet<String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            written: BTreeSet::new(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Records a file written by other means (e.g. a matrix container).
    pub fn register(&mut self, name: &str) {
        self.written.insert(name.to_string());
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        self.register(name);
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("value serializes");
        bytes.push(b'\n');
        self.write_bytes(name, &bytes)
    }

    pub fn write_csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        self.write_bytes(name, &csv_bytes(header, rows))
    }

    /// Hashes every registered file; `manifest.json` itself is excluded.
    pub fn manifest(&self, inputs: Vec<FileEntry>) -> Result<Manifest> {
        let outputs = self
            .written
            .iter()
            .map(|name| {
                let mut e = hash_file(&self.path(name))?;
                e.path = name.clone();
                Ok(e)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            inputs,
            outputs,
        })
    }

    pub fn finish(&mut self, inputs: Vec<FileEntry>) -> Result<Manifest> {
        let manifest = self.manifest(inputs)?;
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        let path = self.path("manifest.json");
        std::fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
        Ok(manifest)
    }
}

pub fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

/// Column suffix naming the unit of KL values on a map of this scale.
pub fn unit_suffix(scale: Scale) -> &'static str {
    match scale {
        Scale::BitsPerByte => "bits_per_byte",
        Scale::RawNats => "nats",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Groups that contain at least one model with a step, sorted.
pub fn stepped_groups(models: &[crate::matrix::ModelMeta]) -> Vec<String> {
    models
        .iter()
        .filter(|m| m.step.is_some())
        .filter_map(|m| m.group.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect()
}

/// Centering policy for group-level analyses.
pub struct Maps {
    pub raw: LogLikelihoodMatrix,
    pub joint: CenteredMap,
    pub joint_raw_nats: CenteredMap,
    pub bits_per_byte: bool,
    pub recenter: bool,
}

impl Maps {
    pub fn new(raw: LogLikelihoodMatrix, bits_per_byte: bool, recenter: bool) -> Result<Self> {
        let joint_raw_nats = raw.double_center()?;
        let joint = if bits_per_byte {
            joint_raw_nats.rescale_bits_per_byte()?
        } else {
            joint_raw_nats.clone()
        };
        Ok(Self {
            raw,
            joint,
            joint_raw_nats,
            bits_per_byte,
            recenter,
        })
    }

    fn finish_scale(&self, c: CenteredMap) -> Result<CenteredMap> {
        if self.bits_per_byte {
            c.rescale_bits_per_byte()
        } else {
            Ok(c)
        }
    }

    /// Map restricted to one group, either recentered or inheriting the
    /// joint centering.
    pub fn group(&self, group: &str) -> Result<CenteredMap> {
        let pred = |m: &crate::matrix::ModelMeta| m.group.as_deref() == Some(group);
        if self.recenter {
            self.finish_scale(self.raw.select_rows(pred)?.double_center()?)
        } else {
            self.joint.select_rows(pred)
        }
    }

    /// Same restriction in raw nats, the input to the exponential map.
    pub fn group_raw_nats(&self, group: &str) -> Result<CenteredMap> {
        let pred = |m: &crate::matrix::ModelMeta| m.group.as_deref() == Some(group);
        if self.recenter {
            self.raw.select_rows(pred)?.double_center()
        } else {
            self.joint_raw_nats.select_rows(pred)
        }
    }
}

fn kl_row(e: &crate::divergence::KlEstimate) -> [String; 2] {
    [e.value.to_string(), e.std_error.to_string()]
}

fn consecutive_rows(group: &str, series: &[ConsecutiveKl]) -> Vec<Vec<String>> {
    series
        .iter()
        .map(|c| {
            let [v, se] = kl_row(&c.estimate);
            vec![
                group.to_string(),
                c.from_step.to_string(),
                c.to_step.to_string(),
                c.from_id.clone(),
                c.to_id.clone(),
                v,
                se,
            ]
        })
        .collect()
}

/// Runs every block requested by `cfg` and writes the manifest last.
pub fn run(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<Manifest> {
    let mut out = OutputDir::create(&cfg.output_dir)?;
    let mut summary: BTreeMap<&str, Value> = BTreeMap::new();
    let mut warnings: Vec<String> = Vec::new();
    let seed_for = |block: Option<u64>| opts.seed.or(block).expect("validated config is seeded");

    // Ingest.
    let loaded = load_matrix(
        &cfg.inputs.matrix,
        cfg.inputs.matrix_format(),
        &IngestOptions {
            neg_inf_floor: cfg.inputs.neg_inf_floor,
        },
    )?;
    if loaded.sidecar_missing {
        warnings.push("matrix sidecar missing; ids are synthetic and byte lengths are 1".into());
    }
    if loaded.floored > 0 {
        warnings.push(format!("{} -inf entries replaced by the floor", loaded.floored));
    }
    let mut inputs = vec![hash_file(&cfg.inputs.matrix)?];
    let side = crate::io::sidecar_path(&cfg.inputs.matrix);
    if side.is_file() {
        inputs.push(hash_file(&side)?);
    }
    let mut m = loaded.matrix;
    summary.insert(
        "input",
        json!({ "n_models": m.n_models(), "n_texts": m.n_texts(), "mean_bytes": m.texts().mean_bytes() }),
    );

    // Preprocess.
    if let Some(q) = cfg.preprocess.clip_quantile {
        m = m.clip_bottom_quantile(q)?;
    }
    let groups = stepped_groups(m.models());
    if let Some(t) = &cfg.preprocess.text_outliers {
        let per_group: Vec<LogLikelihoodMatrix> = groups
            .iter()
            .map(|g| m.select_rows(|meta| meta.group.as_deref() == Some(g.as_str()) && meta.step.is_some()))
            .collect::<Result<_>>()?;
        let report = text_outlier_scores(&per_group, t.post_warmup_step, t.removal_fraction)?;
        let removed: BTreeSet<usize> = report.removal_indices().iter().copied().collect();
        let mut rank = vec![0; report.text_ids.len()];
        for (r, &i) in report.ranking.iter().enumerate() {
            rank[i] = r + 1;
        }
        let rows: Vec<Vec<String>> = (0..report.text_ids.len())
            .map(|i| {
                vec![
                    report.text_ids[i].clone(),
                    report.max_scores[i].to_string(),
                    report.std_scores[i].to_string(),
                    rank[i].to_string(),
                    removed.contains(&i).to_string(),
                ]
            })
            .collect();
        out.write_csv(
            "text_outliers.csv",
            &["text_id", "max_score_nats", "std_score_nats", "rank", "removed"],
            &rows,
        )?;
        if !t.sweep_counts.is_empty() {
            let group_opts: Vec<Option<String>> = groups.iter().cloned().map(Some).collect();
            let sweep = removal_sweep(&m, &report, &t.sweep_counts, &group_opts)?;
            let mut rows = Vec::new();
            for point in &sweep {
                for c in &point.consecutive {
                    rows.push(vec![
                        point.removed.to_string(),
                        point.group.clone().unwrap_or_default(),
                        c.from_step.to_string(),
                        c.to_step.to_string(),
                        c.estimate.value.to_string(),
                    ]);
                }
            }
            out.write_csv(
                "removal_sweep.csv",
                &["removed", "group", "from_step", "to_step", "kl_bits_per_byte"],
                &rows,
            )?;
        }
        summary.insert(
            "text_outliers",
            json!({
                "removed": report.removal_count,
                "post_warmup_step": report.post_warmup_step,
                "max_std_correlation": report.max_std_correlation(),
            }),
        );
        m = remove_texts(&m, report.removal_indices())?;
    }

    // Center and rescale.
    let recenter = cfg.center.recenter || opts.recenter;
    let entropy = entropy_upper_bound(&m)?;
    let maps = Maps::new(m, cfg.center.bits_per_byte, recenter)?;
    save_centered(&maps.joint, &out.path("centered.bin"), MatrixFormat::Binary)?;
    out.register("centered.bin");
    out.register("centered.meta.json");
    let unit = unit_suffix(maps.joint.scale());
    let kl_col = format!("kl_{unit}");
    let se_col = format!("se_{unit}");
    summary.insert(
        "map",
        json!({
            "n_models": maps.joint.n_models(),
            "n_texts": maps.joint.n_texts(),
            "scale": maps.joint.scale(),
            "recenter": recenter,
            "centering_residual": maps.joint.centering_residual(),
            "entropy_upper_bound_bits_per_byte": entropy.bits_per_byte,
            "entropy_bound_model": entropy.model_id,
        }),
    );

    // Consecutive KL per group is shared by several blocks.
    let mut consecutive: BTreeMap<String, Vec<ConsecutiveKl>> = BTreeMap::new();
    for g in &groups {
        let map = maps.group(g)?;
        let rows = trajectory_rows(map.models(), Some(g));
        if rows.len() >= 2 {
            consecutive.insert(g.clone(), consecutive_kl(&map, &rows)?);
        }
    }

    if let Some(kl) = &cfg.kl {
        let wanted: Vec<String> = kl.groups.clone().unwrap_or_else(|| groups.clone());
        match kl.pairs {
            PairsMode::Consecutive => {
                let mut rows = Vec::new();
                let mut summaries = Vec::new();
                for g in &wanted {
                    let series = consecutive.get(g).ok_or_else(|| {
                        Error::EmptySelection(format!("group `{g}` has fewer than two checkpoints"))
                    })?;
                    rows.extend(consecutive_rows(g, series));
                    let values: Vec<f64> = series.iter().map(|c| c.estimate.value).collect();
                    summaries.push(group_summary(g, &values)?);
                }
                out.write_csv(
                    "kl_consecutive.csv",
                    &["group", "from_step", "to_step", "from_id", "to_id", &kl_col, &se_col],
                    &rows,
                )?;
                summary.insert("kl_group_summaries", json!(summaries));
            }
            PairsMode::All => {
                let subset: Vec<usize> = match &kl.groups {
                    None => (0..maps.joint.n_models()).collect(),
                    Some(gs) => (0..maps.joint.n_models())
                        .filter(|&i| {
                            maps.joint.models()[i]
                                .group
                                .as_ref()
                                .is_some_and(|g| gs.contains(g))
                        })
                        .collect(),
                };
                let res = kl_matrix(&maps.joint, Some(&subset))?;
                let mut rows = Vec::new();
                for a in 0..res.len() {
                    for b in a + 1..res.len() {
                        let [v, se] = kl_row(res.get(a, b));
                        rows.push(vec![res.model_ids[a].clone(), res.model_ids[b].clone(), v, se]);
                    }
                }
                out.write_csv("kl_pairs.csv", &["model_a", "model_b", &kl_col, &se_col], &rows)?;
                summary.insert("kl_clamped_radicands", json!(res.clamped_radicands));
            }
        }
    }

    let weights = match (&cfg.inputs.weights, cfg.inputs.weights_format()) {
        (Some(path), Some(format)) => {
            inputs.push(hash_file(path)?);
            let side = crate::io::sidecar_path(path);
            if side.is_file() {
                inputs.push(hash_file(&side)?);
            }
            Some(load_matrix(path, format, &IngestOptions::default())?.matrix)
        }
        _ => None,
    };

    if let Some(o) = &cfg.outliers {
        let mut checkpoint = BTreeMap::new();
        for (g, series) in &consecutive {
            let kl_series: Vec<(u64, f64)> = series.iter().map(|c| (c.from_step, c.estimate.value)).collect();
            let mut entry = json!({});
            match checkpoint_anomaly_scan(&kl_series, o.checkpoint_k) {
                Ok(scan) => entry["kl"] = json!(scan),
                Err(e) => warnings.push(format!("checkpoint scan of `{g}` skipped: {e}")),
            }
            if let Some(w) = &weights {
                let traj = Trajectory::from_group(w, Some(g), Space::Weights)?;
                let w_series: Vec<(u64, f64)> = (1..traj.len())
                    .map(|i| {
                        let d2 = traj.point(i).iter().zip(traj.point(i - 1)).map(|(a, b)| (a - b) * (a - b)).sum();
                        (traj.steps()[i - 1], d2)
                    })
                    .collect();
                match checkpoint_anomaly_scan(&w_series, o.checkpoint_k) {
                    Ok(scan) => entry["weight_distance"] = json!(scan),
                    Err(e) => warnings.push(format!("weight-distance scan of `{g}` skipped: {e}")),
                }
            }
            checkpoint.insert(g.clone(), entry);
        }
        let mut seeds = BTreeMap::new();
        for g in &o.seed_groups {
            let idx: Vec<usize> = (0..maps.joint.n_models())
                .filter(|&i| maps.joint.models()[i].group.as_deref() == Some(g.as_str()))
                .collect();
            let map = if recenter { maps.group(g)? } else { maps.joint.clone() };
            let res = if recenter { kl_matrix(&map, None)? } else { kl_matrix(&map, Some(&idx))? };
            seeds.insert(g.clone(), seed_anomaly_scan(&res, o.seed_k)?);
        }
        out.write_json("outliers.json", &json!({ "checkpoints": checkpoint, "seeds": seeds }))?;
    }

    if let Some(s) = &cfg.scaling {
        let wanted: Vec<String> = s.groups.clone().unwrap_or_else(|| groups.clone());
        let mut rows = Vec::new();
        let mut holder_rows = Vec::new();
        let mut sweep_rows = Vec::new();
        for g in &wanted {
            let map = maps.group(g)?;
            let q = Trajectory::from_group(&map, Some(g), Space::LoglikMap)?;
            let exp_q = if s.exp_map {
                let exp = maps.group_raw_nats(g)?.exp_coordinates()?;
                if exp.capped() > 0 {
                    warnings.push(format!("{} exp-map entries capped in group `{g}`", exp.capped()));
                }
                Some(Trajectory::from_group(&exp, Some(g), Space::ExpMap)?)
            } else {
                None
            };
            let w = weights
                .as_ref()
                .map(|w| Trajectory::from_group(w, Some(g), Space::Weights))
                .transpose()?;
            for &t0 in &s.t0 {
                let cmp = compare_spaces(w.as_ref(), &q, exp_q.as_ref(), t0, s.window)?;
                let fits = [
                    (Space::Weights, cmp.fit_w.as_ref()),
                    (Space::LoglikMap, Some(&cmp.fit_q)),
                    (Space::ExpMap, cmp.fit_exp_q.as_ref()),
                ];
                for (space, fit) in fits {
                    let Some(fit) = fit else { continue };
                    let fd = fractal_dimension(fit.c).ok();
                    rows.push(vec![
                        g.clone(),
                        space_name(space).into(),
                        t0.to_string(),
                        fit.window.to_string(),
                        fit.c.to_string(),
                        fit.log_intercept.to_string(),
                        fit.r_squared.to_string(),
                        fit.n_points.to_string(),
                        opt(fd.map(|f| f.hurst)),
                        opt(fd.map(|f| f.dimension)),
                    ]);
                }
                holder_rows.push(vec![
                    g.clone(),
                    t0.to_string(),
                    opt(cmp.c_w),
                    cmp.c_q.to_string(),
                    opt(cmp.alpha),
                    opt(cmp.c_exp_q),
                ]);
            }
            let first = s.t0[0];
            let mut series_data: Vec<(&str, Vec<(f64, f64)>, _)> = Vec::new();
            for traj in [w.as_ref(), Some(&q), exp_q.as_ref()].into_iter().flatten() {
                let pairs = squared_displacement(traj, first, s.window)?;
                let fit = fit_trajectory(traj, first, s.window)?;
                series_data.push((space_name(traj.space()), pairs, fit));
            }
            let series: Vec<DisplacementSeries<'_>> = series_data
                .iter()
                .map(|(label, pairs, fit)| DisplacementSeries {
                    label,
                    pairs,
                    fit: Some(fit),
                })
                .collect();
            out.write_bytes(
                &format!("displacement_{}.svg", file_stem(g)),
                displacement_svg(&series, &format!("{g}: squared displacement from step {first}"))?.as_bytes(),
            )?;
            if !s.sweep_t0.is_empty() {
                for traj in [w.as_ref(), Some(&q), exp_q.as_ref()].into_iter().flatten() {
                    let sweep = exponent_sweep(traj, &s.sweep_t0, s.window);
                    for e in &sweep.entries {
                        sweep_rows.push(vec![
                            g.clone(),
                            space_name(sweep.space).into(),
                            e.t0.to_string(),
                            opt(e.fit.as_ref().map(|f| f.c)),
                            opt(e.fit.as_ref().map(|f| f.r_squared)),
                            e.error.clone().unwrap_or_default(),
                        ]);
                    }
                }
            }
        }
        out.write_csv(
            "scaling.csv",
            &[
                "group", "space", "t0", "window", "c", "log_intercept", "r_squared", "n_points", "hurst",
                "fractal_dimension",
            ],
            &rows,
        )?;
        out.write_csv("holder.csv", &["group", "t0", "c_w", "c_q", "alpha", "c_exp_q"], &holder_rows)?;
        if !s.sweep_t0.is_empty() {
            out.write_csv("sweep.csv", &["group", "space", "t0", "c", "r_squared", "error"], &sweep_rows)?;
        }
    }

    if let Some(e) = &cfg.embed {
        let map = &maps.joint;
        let emb: Embedding = match e.method {
            EmbedMethodName::Pca => pca(map, e.dim)?.embedding,
            EmbedMethodName::Tsne => {
                let mut params = TsneParams::new(e.dim, e.perplexity, seed_for(e.seed));
                params.iterations = e.iterations;
                params.init = e.init;
                match e.input {
                    EmbedInput::Coords => tsne_from_coords(map, &params)?,
                    EmbedInput::Kl => {
                        let res = kl_matrix(map, None)?;
                        tsne_from_sq_distances(&kl_square(&res), res.len(), &params)?
                    }
                }
            }
        };
        let header: Vec<String> = std::iter::once("model_id".to_string())
            .chain((0..emb.dim).map(|d| match d {
                0..=2 => ["x", "y", "z"][d].to_string(),
                _ => format!("c{d}"),
            }))
            .collect();
        let header: Vec<&str> = header.iter().map(String::as_str).collect();
        let rows: Vec<Vec<String>> = (0..emb.n_points)
            .map(|i| {
                std::iter::once(map.models()[i].model_id.clone())
                    .chain(emb.point(i).iter().map(|v| v.to_string()))
                    .collect()
            })
            .collect();
        out.write_csv("embedding.csv", &header, &rows)?;
        let widths: Option<BTreeMap<(String, String), f64>> = e.kl_line_width.then(|| {
            consecutive
                .values()
                .flatten()
                .map(|c| ((c.from_id.clone(), c.to_id.clone()), c.estimate.value))
                .collect()
        });
        if emb.dim >= 2 {
            let title = match e.method {
                EmbedMethodName::Pca => "PCA of the model map".to_string(),
                EmbedMethodName::Tsne => format!("t-SNE of the model map (perplexity {})", e.perplexity),
            };
            out.write_bytes(
                "embedding.svg",
                embedding_svg(&emb, map.models(), widths.as_ref(), &title)?.as_bytes(),
            )?;
        }
        let mut info = json!({ "embedding": emb });
        if let Some(a) = &e.acf {
            let p = pca(map, (a.component + 1).min(map.n_models().min(map.n_texts())))?;
            if a.component >= p.embedding.dim {
                return Err(Error::InvalidArgument(format!(
                    "component {} unavailable; the map has rank {}",
                    a.component, p.embedding.dim
                )));
            }
            let rows: Vec<usize> = trajectory_rows(map.models(), Some(&a.group))
                .into_iter()
                .filter(|&r| a.from_step.is_none_or(|s| map.models()[r].step.unwrap() >= s))
                .collect();
            let series: Vec<f64> = rows.iter().map(|&r| p.embedding.point(r)[a.component]).collect();
            let acf = autocorrelation(&series, None)?;
            let period = spiral_period(&acf);
            let acf_rows: Vec<Vec<String>> = acf
                .lags
                .iter()
                .zip(&acf.values)
                .map(|(l, v)| vec![l.to_string(), v.to_string()])
                .collect();
            out.write_csv("acf.csv", &["lag", "acf"], &acf_rows)?;
            info["acf"] = json!({
                "group": a.group,
                "component": a.component,
                "n": acf.n,
                "zero_crossings": acf.zero_crossings,
                "period": period,
            });
        }
        out.write_json("embedding.json", &info)?;
    }

    if let Some(s) = &cfg.shift {
        let set = shift_vectors(&maps.joint, &s.pairs)?;
        let report = cosine_similarity_report(&set, s.n_random, s.sample_size, seed_for(s.seed))?;
        let norms: Vec<Value> = set
            .shifts
            .iter()
            .map(|sh| {
                json!({
                    "base_id": sh.base_id,
                    "variant_id": sh.variant_id,
                    "group": sh.group,
                    "squared_norm": sh.vector.iter().map(|v| v * v).sum::<f64>(),
                })
            })
            .collect();
        out.write_json("shift.json", &json!({ "report": report, "shifts": norms }))?;
    }

    if let Some(s) = &cfg.synth {
        if let Some(f) = &s.fbm {
            let spec = FbmSpec {
                hurst: f.hurst,
                n_steps: f.n_steps,
                dim: f.dim,
                seed: seed_for(f.seed),
            };
            let paths = fbm_ensemble(&spec, f.n_paths)?;
            let mut rows = Vec::new();
            for (i, p) in paths.iter().enumerate() {
                let fit = fit_trajectory(p, p.steps()[0], Window::All)?;
                rows.push(vec![
                    i.to_string(),
                    fit.c.to_string(),
                    (fit.c / 2.0).to_string(),
                    fit.r_squared.to_string(),
                ]);
            }
            out.write_csv("synth_fbm.csv", &["path", "c", "hurst_hat", "r_squared"], &rows)?;
        }
        if let Some(f) = &s.folding {
            let seed = seed_for(f.seed);
            let mut spec = FoldingSpec::takagi_default(f.alpha.unwrap_or(1.0), seed);
            if f.alpha.is_none() {
                spec.map = FoldingMap::Identity;
            }
            if let Some(n) = f.n_steps {
                spec.fbm.n_steps = n;
            }
            let ens = folding_ensemble(&spec, f.n_paths)?;
            let rows: Vec<Vec<String>> = ens
                .runs
                .iter()
                .enumerate()
                .map(|(i, r)| {
                    vec![
                        i.to_string(),
                        r.c_w.to_string(),
                        r.c_q.to_string(),
                        r.alpha_hat.to_string(),
                    ]
                })
                .collect();
            out.write_csv("synth_folding.csv", &["path", "c_w", "c_q", "alpha_hat"], &rows)?;
            summary.insert(
                "folding",
                json!({
                    "alpha": f.alpha,
                    "mean_c_w": ens.mean_c_w,
                    "mean_c_q": ens.mean_c_q,
                    "mean_alpha_hat": ens.mean_alpha_hat,
                }),
            );
        }
    }

    summary.insert("warnings", json!(warnings));
    out.write_json("summary.json", &summary)?;
    out.finish(inputs)
}

/// Full symmetric `k x k` matrix of KL values, zero diagonal.
pub fn kl_square(res: &KlMatrixResult) -> Vec<f64> {
    let k = res.len();
    let mut d = vec![0.0; k * k];
    for a in 0..k {
        for b in 0..k {
            if a != b {
                d[a * k + b] = res.value(a, b);
            }
        }
    }
    d
}

pub fn space_name(space: Space) -> &'static str {
    match space {
        Space::Weights => "weights",
        Space::LoglikMap => "loglik_map",
        Space::ExpMap => "exp_map",
    }
}

fn file_stem(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}
