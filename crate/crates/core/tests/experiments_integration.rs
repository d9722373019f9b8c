use shearflow::experiments::{run_experiment, sweep_members, sweep_sigma, Artifacts, RunConfig};
use shearflow::spectral::dump::{read_surface, read_volume};
use shearflow::Error;

fn config(dir: &std::path::Path, sigma: f64) -> RunConfig {
    RunConfig::from_json(&format!(
        r#"{{
  "grid": {{"n1": 8, "n2": 8, "n3": 9}},
  "physics": {{"sigma": {sigma}, "gamma": 0.2, "b": 1.0, "l1": 6.283185307179586, "l2": 6.283185307179586}},
  "initial": {{"preset": "random-band", "seed": 42, "k_max": 1, "eps": 0.001}},
  "step": {{"dt": 0.01, "t_end": 0.1}},
  "observer": {{"every": 2}},
  "output_dir": "{}"
}}"#,
        dir.display()
    ))
    .unwrap()
}

#[test]
fn reruns_write_identical_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert!(run_experiment(&config(&a, 1.0), false).unwrap().succeeded());
    assert!(run_experiment(&config(&b, 1.0), false).unwrap().succeeded());
    let ta = std::fs::read(a.join("diagnostics.csv")).unwrap();
    let tb = std::fs::read(b.join("diagnostics.csv")).unwrap();
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);
    let summary: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["config"]["initial"]["seed"], 42);
    assert!(summary["generator"].as_str().unwrap().contains("ChaCha20"));
    assert_eq!(summary["termination"]["completed"], true);
}

#[test]
fn existing_output_needs_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), 1.0);
    std::fs::write(tmp.path().join("keep.txt"), "x").unwrap();
    assert!(matches!(run_experiment(&cfg, false), Err(Error::Config(_))));
    assert!(run_experiment(&cfg, true).unwrap().succeeded());
    assert!(tmp.path().join("keep.txt").exists());
}

#[test]
fn invalid_config_leaves_no_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("never");
    let mut cfg = config(&out, 1.0);
    cfg.step.dt = -1.0;
    assert!(matches!(run_experiment(&cfg, false), Err(Error::Config(_))));
    assert!(!out.exists());
}

#[test]
fn self_comparison_sweep_has_zero_row() {
    let tmp = tempfile::tempdir().unwrap();
    let t = sweep_sigma(&config(tmp.path(), 1.0), &[0.0], None, false).unwrap();
    assert_eq!(t.rows.len(), 1);
    assert_eq!(t.rows[0].delta, 0.0);
}

#[test]
fn mismatched_grids_rejected_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("sweep");
    let a = config(&out, 1.0);
    let mut b = config(&out, 0.0);
    b.grid.n1 = 12;
    assert!(matches!(sweep_members(&[a, b], Some(&out), false), Err(Error::Config(_))));
    assert!(!out.exists());
}

#[test]
fn sigma_sweep_writes_table() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), 1.0);
    cfg.kind = shearflow::experiments::ExperimentKind::SigmaSweep;
    cfg.sigmas = vec![1.0, 0.1, 0.0];
    match run_experiment(&cfg, false).unwrap() {
        Artifacts::Sweep(t) => {
            assert_eq!(t.rows.len(), 3);
            assert_eq!(t.rows[2].delta, 0.0);
            assert!(t.rows[0].delta > t.rows[1].delta);
        }
        other => panic!("{other:?}"),
    }
    assert!(tmp.path().join("sweep.csv").exists());
    assert!(tmp.path().join("sigma_1").join("diagnostics.csv").exists());
}

#[test]
fn field_dumps_are_listed_in_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), 1.0);
    cfg.write_fields = true;
    assert!(run_experiment(&cfg, false).unwrap().succeeded());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(tmp.path().join("manifest.json")).unwrap()).unwrap();
    let snaps = manifest["snapshots"].as_array().unwrap();
    assert!(!snaps.is_empty());
    let last = snaps.last().unwrap();
    let eta_file = last["files"]["eta"].as_str().unwrap();
    let (_, eta) = read_surface(&mut std::fs::File::open(tmp.path().join(eta_file)).unwrap()).unwrap();
    assert!(eta.max_abs() > 0.0);
    for name in ["u1", "u2", "u3", "p"] {
        let f = last["files"][name].as_str().unwrap();
        let (h, _) = read_volume(&mut std::fs::File::open(tmp.path().join(f)).unwrap()).unwrap();
        assert_eq!(h.n3, 9);
    }
}

#[test]
fn shipped_configs_validate() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut seen = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "json") {
            let cfg = RunConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.validate().unwrap();
            seen += 1;
        }
    }
    assert!(seen >= 2);
}
