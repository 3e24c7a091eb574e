use std::fmt::Write as _;
use std::path::Path;

use modelmap::io::{load_matrix, save_matrix, IngestOptions, MatrixFormat, MAGIC, VERSION};
use modelmap::{Error, RowMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const K: usize = 5;
const N: usize = 100;

fn values() -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    (0..K * N).map(|_| -rng.random_range(1.0..900.0)).collect()
}

// Header bytes assembled by hand: magic, version, K and N as u32 LE.
fn binary_bytes(vals: &[f64], k: u32, n: u32) -> Vec<u8> {
    let mut b = MAGIC.to_vec();
    b.push(VERSION);
    b.extend_from_slice(&k.to_le_bytes());
    b.extend_from_slice(&n.to_le_bytes());
    for v in vals {
        b.extend_from_slice(&v.to_le_bytes());
    }
    b
}

fn sidecar_json() -> String {
    let models: Vec<String> = (0..K)
        .map(|i| format!(r#"{{"id": "run-{}", "group": "run", "step": {}, "tags": {{"lr": "3e-4"}}}}"#, i, i * 1000))
        .collect();
    let ids: Vec<String> = (0..N).map(|x| format!("\"doc{x}\"")).collect();
    let bytes: Vec<String> = (0..N).map(|x| (100 + x).to_string()).collect();
    format!(
        r#"{{"models": [{}], "texts": {{"ids": [{}], "byte_lengths": [{}]}}}}"#,
        models.join(", "),
        ids.join(", "),
        bytes.join(", ")
    )
}

fn write_csv_twin(path: &Path, vals: &[f64]) {
    let mut s = String::from("model_id");
    for x in 0..N {
        let _ = write!(s, ",doc{x}");
    }
    s.push('\n');
    for i in 0..K {
        s.push_str(&format!("run-{i}"));
        for x in 0..N {
            let _ = write!(s, ",{}", vals[i * N + x]);
        }
        s.push('\n');
    }
    std::fs::write(path, s).unwrap();
}

#[test]
fn binary_and_csv_twins_agree() {
    let dir = tempfile::tempdir().unwrap();
    let vals = values();
    let bin = dir.path().join("m.bin");
    let csv = dir.path().join("m.csv");
    std::fs::write(&bin, binary_bytes(&vals, K as u32, N as u32)).unwrap();
    std::fs::write(dir.path().join("m.meta.json"), sidecar_json()).unwrap();
    write_csv_twin(&csv, &vals);

    let a = load_matrix(&bin, MatrixFormat::Binary, &IngestOptions::default()).unwrap();
    let b = load_matrix(&csv, MatrixFormat::Csv, &IngestOptions::default()).unwrap();
    assert!(!a.sidecar_missing);
    assert_eq!((a.matrix.n_models(), a.matrix.n_texts()), (K, N));
    assert_eq!(a.matrix.models(), b.matrix.models());
    assert_eq!(a.matrix.texts().ids(), b.matrix.texts().ids());
    for (x, y) in a.matrix.values().iter().zip(b.matrix.values()) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
    }
    assert_eq!(a.matrix.models()[3].step, Some(3000));
    assert_eq!(a.matrix.models()[3].tag("lr"), Some("3e-4"));
    assert_eq!(a.matrix.texts().byte_lengths()[7], 107);
}

#[test]
fn written_binary_matches_documented_layout() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("src.bin");
    std::fs::write(&src, binary_bytes(&values(), K as u32, N as u32)).unwrap();
    std::fs::write(dir.path().join("src.meta.json"), sidecar_json()).unwrap();
    let m = load_matrix(&src, MatrixFormat::Binary, &IngestOptions::default()).unwrap().matrix;

    let out = dir.path().join("out.bin");
    save_matrix(&m, &out, MatrixFormat::Binary).unwrap();
    assert_eq!(std::fs::read(&out).unwrap(), std::fs::read(&src).unwrap());
    let again = load_matrix(&out, MatrixFormat::Binary, &IngestOptions::default()).unwrap().matrix;
    assert_eq!(again, m);
}

#[test]
fn csv_header_must_start_with_model_id() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.csv");
    std::fs::write(&p, "name,a,b\nm0,-1,-2\n").unwrap();
    let err = load_matrix(&p, MatrixFormat::Csv, &IngestOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
}

#[test]
fn sidecar_shape_mismatch_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.bin");
    std::fs::write(&p, binary_bytes(&values()[..4 * N], 4, N as u32)).unwrap();
    std::fs::write(dir.path().join("m.meta.json"), sidecar_json()).unwrap();
    let err = load_matrix(&p, MatrixFormat::Binary, &IngestOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Dimension(_)));
}

#[test]
fn wrong_version_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("m.bin");
    let mut b = binary_bytes(&values(), K as u32, N as u32);
    b[5] = VERSION + 1;
    std::fs::write(&p, b).unwrap();
    let err = load_matrix(&p, MatrixFormat::Binary, &IngestOptions::default()).unwrap_err();
    assert!(matches!(err, Error::Parse { .. }));
}
