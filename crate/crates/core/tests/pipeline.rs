use std::collections::BTreeSet;

use modelmap::config::ExperimentConfig;
use modelmap::fixture::{write_fixture, FixtureSpec};
use modelmap::pipeline::{hash_file, run, RunOptions};

fn listed_files(dir: &std::path::Path) -> BTreeSet<String> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect()
}

#[test]
fn fixture_run_manifest_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let files = write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
    let cfg = ExperimentConfig::load(&files.config, None).unwrap();
    let manifest = run(&cfg, &RunOptions::default()).unwrap();
    let out = dir.path().join("out");

    let in_manifest: BTreeSet<String> = manifest.outputs.iter().map(|o| o.path.clone()).collect();
    let mut on_disk = listed_files(&out);
    assert!(on_disk.remove("manifest.json"));
    assert_eq!(in_manifest, on_disk);
    for o in &manifest.outputs {
        assert_eq!(hash_file(&out.join(&o.path)).unwrap().sha256, o.sha256, "{}", o.path);
    }
    // Both matrices and their sidecars.
    assert_eq!(manifest.inputs.len(), 4);
    assert!(manifest.inputs.iter().any(|e| e.path.ends_with("loglik.meta.json")));

    for name in [
        "centered.bin",
        "kl_consecutive.csv",
        "outliers.json",
        "scaling.csv",
        "holder.csv",
        "embedding.csv",
        "embedding.svg",
        "acf.csv",
        "shift.json",
        "synth_fbm.csv",
        "synth_folding.csv",
        "summary.json",
    ] {
        assert!(in_manifest.contains(name), "missing {name}");
    }
}

#[test]
fn fixture_run_finds_planted_structure() {
    let dir = tempfile::tempdir().unwrap();
    let files = write_fixture(dir.path(), &FixtureSpec::default()).unwrap();
    let cfg = ExperimentConfig::load(&files.config, None).unwrap();
    run(&cfg, &RunOptions::default()).unwrap();
    let read = |name: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(dir.path().join("out").join(name)).unwrap()).unwrap()
    };

    let outliers = read("outliers.json");
    assert_eq!(outliers["seeds"]["seeds"]["flagged"], serde_json::json!(["seed8"]));

    let shift = read("shift.json");
    let report = &shift["report"];
    let baseline = report["random_baseline_mean"].as_f64().unwrap();
    for g in report["groups"].as_array().unwrap() {
        assert!(g["mean_cosine"].as_f64().unwrap() > baseline + 0.2, "{g}");
    }
}
