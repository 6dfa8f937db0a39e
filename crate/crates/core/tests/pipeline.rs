use std::fs;
use std::path::Path;

use deepbnd_core::pipeline::{load_bundle, run_offline, run_online, validate_artifacts, PipelineConfig};
use deepbnd_core::store::{self, LoadKind, MANIFEST};

fn binaries(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    for entry in walk(root) {
        if entry.extension().is_some_and(|e| e == "bin" || e == "json") {
            let rel = entry.strip_prefix(root).unwrap().display().to_string();
            out.push((rel, fs::read(&entry).unwrap()));
        }
    }
    out.sort();
    out
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut v = Vec::new();
    for e in fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            v.extend(walk(&p));
        } else {
            v.push(p);
        }
    }
    v
}

#[test]
fn smoke_run_is_loadable_valid_and_deterministic() {
    let cfg = PipelineConfig::smoke();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = run_offline(&cfg, a.path()).unwrap();
    assert!(out.reused.is_empty());
    run_offline(&cfg, b.path()).unwrap();
    assert_eq!(binaries(a.path()), binaries(b.path()));

    let again = run_offline(&cfg, a.path()).unwrap();
    assert_eq!(again.manifest, out.manifest);
    assert_eq!(again.reused.len(), 10);

    let report = validate_artifacts(a.path());
    assert!(report.ok(), "{:?}", report.failures().collect::<Vec<_>>());

    let bundle = load_bundle(a.path()).unwrap();
    assert_eq!(bundle.model.n_rb, 1);
    let online = tempfile::tempdir().unwrap();
    let summary = run_online(&cfg, &bundle, online.path()).unwrap();
    assert!(online.path().join("single_cell.csv").exists());
    assert_eq!(summary.sweep.len(), 2);
    let cells = fs::read_to_string(online.path().join("single_cell.csv")).unwrap();
    assert!(cells.contains("bounds_chain_holds,1"));
    let exact: f64 = cells
        .lines()
        .find(|l| l.contains("exact_trace_stress_rel"))
        .and_then(|l| l.rsplit(',').next())
        .unwrap()
        .parse()
        .unwrap();
    assert!(exact < 1e-8);
}

#[test]
fn validation_reports_corruption() {
    let cfg = PipelineConfig::smoke();
    let dir = tempfile::tempdir().unwrap();
    run_offline(&cfg, dir.path()).unwrap();

    let weights = dir.path().join("models/axial/weights.bin");
    let bytes = fs::read(&weights).unwrap();
    fs::write(&weights, &bytes[..bytes.len() - 16]).unwrap();
    let report = validate_artifacts(dir.path());
    assert!(!report.ok());
    assert!(report
        .failures()
        .any(|c| c.name.contains("model/axial: dimension chain") && c.detail.contains("dimension mismatch")));
    fs::write(&weights, &bytes).unwrap();

    let basis_manifest = dir.path().join("bases/shear").join(MANIFEST);
    let mut m: store::BasisManifest = store::read_json(&basis_manifest).unwrap();
    m.mesh_hash = "0000".into();
    store::write_json(&basis_manifest, &m).unwrap();
    let report = validate_artifacts(dir.path());
    assert!(report
        .failures()
        .any(|c| c.name == "basis/shear" && c.detail.contains("incompatible")));
}

#[test]
fn corrupted_manifest_aborts_offline_run() {
    let cfg = PipelineConfig::smoke();
    let dir = tempfile::tempdir().unwrap();
    run_offline(&cfg, dir.path()).unwrap();
    let m = deepbnd_core::pipeline::dataset_dir(dir.path(), LoadKind::Shear, store::DatasetUse::Test).join(MANIFEST);
    fs::write(&m, "{ broken").unwrap();
    assert!(run_offline(&cfg, dir.path()).is_err());
}
