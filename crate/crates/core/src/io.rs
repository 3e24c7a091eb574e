//! On-disk containers for model-by-text matrices.
//!
//! Binary layout (little-endian): magic `MMAP1`, `u8` version (1), `u32` K,
//! `u32` N, then `K * N` `f64` values row-major. CSV layout: header
//! `model_id,<text_id_1>,...` followed by one row per model. Both formats
//! take metadata from a JSON sidecar `<basename>.meta.json`.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::{
    CenteredMap, Centering, LogLikelihoodMatrix, ModelMeta, RowMatrix, Scale, TextSetMeta,
};

pub const MAGIC: &[u8; 5] = b"MMAP1";
pub const VERSION: u8 = 1;
const HEADER_LEN: usize = 5 + 1 + 4 + 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatrixFormat {
    Binary,
    Csv,
}

impl MatrixFormat {
    /// `.csv` selects CSV; anything else is the binary container.
    pub fn from_path(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("csv") => MatrixFormat::Csv,
            _ => MatrixFormat::Binary,
        }
    }
}

/// Sidecar location: `dir/name.bin` -> `dir/name.meta.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Sidecar {
    pub models: Vec<ModelMeta>,
    pub texts: SidecarTexts,
    /// Present only for centered coordinates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<Scale>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub centering: Option<Centering>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SidecarTexts {
    pub ids: Vec<String>,
    pub byte_lengths: Vec<u64>,
}

#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    /// Replace `-inf` entries with this value instead of rejecting them.
    pub neg_inf_floor: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Loaded<T> {
    pub matrix: T,
    /// No sidecar was found; ids are synthetic and byte lengths are 1.
    pub sidecar_missing: bool,
    /// Number of `-inf` entries replaced by the floor.
    pub floored: usize,
}

struct RawTable {
    values: Vec<f64>,
    k: usize,
    n: usize,
    row_ids: Option<Vec<String>>,
    col_ids: Option<Vec<String>>,
}

fn read_binary(path: &Path) -> Result<RawTable> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| Error::io(path, e))?;
    if bytes.len() < HEADER_LEN || &bytes[..5] != MAGIC {
        return Err(Error::parse(path, "missing MMAP1 magic"));
    }
    if bytes[5] != VERSION {
        return Err(Error::parse(
            path,
            format!("unsupported container version {}", bytes[5]),
        ));
    }
    let k = u32::from_le_bytes(bytes[6..10].try_into().unwrap()) as usize;
    let n = u32::from_le_bytes(bytes[10..14].try_into().unwrap()) as usize;
    let payload = &bytes[HEADER_LEN..];
    let expected = k
        .checked_mul(n)
        .and_then(|c| c.checked_mul(8))
        .ok_or_else(|| Error::Dimension(format!("header dims {k}x{n} overflow")))?;
    if payload.len() != expected {
        return Err(Error::Dimension(format!(
            "header says {k}x{n} ({expected} bytes) but payload has {} bytes",
            payload.len()
        )));
    }
    let values = payload
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(RawTable {
        values,
        k,
        n,
        row_ids: None,
        col_ids: None,
    })
}

fn read_csv(path: &Path) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|e| Error::parse(path, e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    if headers.get(0) != Some("model_id") {
        return Err(Error::parse(path, "first header column must be `model_id`"));
    }
    let col_ids: Vec<String> = headers.iter().skip(1).map(str::to_owned).collect();
    let n = col_ids.len();
    let mut row_ids = Vec::new();
    let mut values = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        if record.len() != n + 1 {
            return Err(Error::Dimension(format!(
                "row {r} has {} fields, header has {}",
                record.len(),
                n + 1
            )));
        }
        row_ids.push(record[0].to_owned());
        for (c, field) in record.iter().skip(1).enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::parse(path, format!("cannot parse `{field}` at (row {r}, col {c})"))
            })?;
            values.push(v);
        }
    }
    Ok(RawTable {
        values,
        k: row_ids.len(),
        n,
        row_ids: Some(row_ids),
        col_ids: Some(col_ids),
    })
}

fn read_sidecar(path: &Path) -> Result<Option<Sidecar>> {
    let side = sidecar_path(path);
    if !side.exists() {
        return Ok(None);
    }
    let file = File::open(&side).map_err(|e| Error::io(&side, e))?;
    let sidecar = serde_json::from_reader(BufReader::new(file))
        .map_err(|e| Error::parse(&side, e.to_string()))?;
    Ok(Some(sidecar))
}

struct Assembled {
    values: Vec<f64>,
    models: Vec<ModelMeta>,
    texts: TextSetMeta,
    sidecar: Option<Sidecar>,
}

fn assemble(path: &Path, format: MatrixFormat) -> Result<Assembled> {
    let table = match format {
        MatrixFormat::Binary => read_binary(path)?,
        MatrixFormat::Csv => read_csv(path)?,
    };
    let sidecar = read_sidecar(path)?;
    let (models, texts) = match &sidecar {
        Some(side) => {
            if side.models.len() != table.k || side.texts.ids.len() != table.n {
                return Err(Error::Dimension(format!(
                    "sidecar describes {}x{} but data is {}x{}",
                    side.models.len(),
                    side.texts.ids.len(),
                    table.k,
                    table.n
                )));
            }
            if let Some(rows) = &table.row_ids {
                if let Some((i, _)) = rows
                    .iter()
                    .zip(&side.models)
                    .enumerate()
                    .find(|(_, (a, b))| **a != b.model_id)
                {
                    return Err(Error::parse(
                        path,
                        format!("model id at row {i} disagrees with sidecar"),
                    ));
                }
            }
            if let Some(cols) = &table.col_ids {
                if cols != &side.texts.ids {
                    return Err(Error::parse(path, "text ids disagree with sidecar"));
                }
            }
            (
                side.models.clone(),
                TextSetMeta::new(side.texts.ids.clone(), side.texts.byte_lengths.clone())?,
            )
        }
        None => {
            let models = match table.row_ids {
                Some(ids) => ids.into_iter().map(ModelMeta::new).collect(),
                None => ModelMeta::synthetic(table.k),
            };
            let texts = match table.col_ids {
                Some(ids) => {
                    let n = ids.len();
                    TextSetMeta::new(ids, vec![1; n])?
                }
                None => TextSetMeta::synthetic(table.n),
            };
            (models, texts)
        }
    };
    Ok(Assembled {
        values: table.values,
        models,
        texts,
        sidecar,
    })
}

/// Reads a log-likelihood matrix and its sidecar.
pub fn load_matrix(
    path: &Path,
    format: MatrixFormat,
    options: &IngestOptions,
) -> Result<Loaded<LogLikelihoodMatrix>> {
    let Assembled {
        mut values,
        models,
        texts,
        sidecar,
    } = assemble(path, format)?;
    let mut floored = 0;
    if let Some(floor) = options.neg_inf_floor {
        for v in values.iter_mut().filter(|v| **v == f64::NEG_INFINITY) {
            *v = floor;
            floored += 1;
        }
    }
    Ok(Loaded {
        matrix: LogLikelihoodMatrix::new(values, models, texts)?,
        sidecar_missing: sidecar.is_none(),
        floored,
    })
}

/// Reads centered coordinates written by [`save_centered`]. Containers
/// without scale information are treated as raw nats.
pub fn load_centered(path: &Path, format: MatrixFormat) -> Result<Loaded<CenteredMap>> {
    let a = assemble(path, format)?;
    let scale = a
        .sidecar
        .as_ref()
        .and_then(|s| s.scale)
        .unwrap_or(Scale::RawNats);
    let centering = a
        .sidecar
        .as_ref()
        .and_then(|s| s.centering)
        .unwrap_or(Centering::Computed);
    if let Some(pos) = a.values.iter().position(|v| !v.is_finite()) {
        let n = a.texts.len();
        return Err(Error::NonFinite {
            row: pos / n,
            col: pos % n,
            value: a.values[pos],
        });
    }
    Ok(Loaded {
        matrix: CenteredMap::from_parts(a.values, a.models, a.texts, scale, centering)?,
        sidecar_missing: a.sidecar.is_none(),
        floored: 0,
    })
}

pub fn save_matrix(m: &LogLikelihoodMatrix, path: &Path, format: MatrixFormat) -> Result<()> {
    write_table(path, format, m, m.texts(), None, None)
}

pub fn save_centered(c: &CenteredMap, path: &Path, format: MatrixFormat) -> Result<()> {
    write_table(
        path,
        format,
        c,
        c.texts(),
        Some(c.scale()),
        Some(c.centering()),
    )
}

/// Writes any row matrix plus its sidecar.
pub fn write_table(
    path: &Path,
    format: MatrixFormat,
    rows: &dyn RowMatrix,
    texts: &TextSetMeta,
    scale: Option<Scale>,
    centering: Option<Centering>,
) -> Result<()> {
    match format {
        MatrixFormat::Binary => write_binary(path, rows)?,
        MatrixFormat::Csv => write_csv(path, rows, texts)?,
    }
    let sidecar = Sidecar {
        models: rows.models().to_vec(),
        texts: SidecarTexts {
            ids: texts.ids().to_vec(),
            byte_lengths: texts.byte_lengths().to_vec(),
        },
        scale,
        centering,
    };
    let side = sidecar_path(path);
    let mut json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    json.push(b'\n');
    std::fs::write(&side, json).map_err(|e| Error::io(&side, e))
}

fn write_binary(path: &Path, rows: &dyn RowMatrix) -> Result<()> {
    let to_u32 = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::Dimension(format!("{what} {v} exceeds u32")))
    };
    let k = to_u32(rows.n_rows(), "row count")?;
    let n = to_u32(rows.n_cols(), "column count")?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    w.write_all(MAGIC).map_err(io)?;
    w.write_all(&[VERSION]).map_err(io)?;
    w.write_all(&k.to_le_bytes()).map_err(io)?;
    w.write_all(&n.to_le_bytes()).map_err(io)?;
    for i in 0..rows.n_rows() {
        for v in rows.row(i) {
            w.write_all(&v.to_le_bytes()).map_err(io)?;
        }
    }
    w.flush().map_err(io)
}

fn write_csv(path: &Path, rows: &dyn RowMatrix, texts: &TextSetMeta) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e.to_string()))?;
    let csv_err = |e: csv::Error| Error::parse(path, e.to_string());
    let mut header = Vec::with_capacity(texts.len() + 1);
    header.push("model_id");
    header.extend(texts.ids().iter().map(String::as_str));
    w.write_record(&header).map_err(csv_err)?;
    for (i, m) in rows.models().iter().enumerate() {
        let mut record = Vec::with_capacity(texts.len() + 1);
        record.push(m.model_id.clone());
        // `Display` for f64 is the shortest string that round-trips exactly.
        record.extend(rows.row(i).iter().map(|v| v.to_string()));
        w.write_record(&record).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
