use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const POWER: &str = r#"{"m":1,"n":1,"theta":[0.0],"psi":{"kind":"power","tau":1.0}}"#;

fn run(dir: &Path, config: &str, args: &[&str]) -> Output {
    let path = dir.join("config.json");
    fs::write(&path, config).unwrap();
    Command::new(env!("CARGO_BIN_EXE_wellapprox"))
        .args(args)
        .arg("--config")
        .arg(&path)
        .arg("--out")
        .arg(dir.join("out"))
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn read_json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn invalid_configs_exit_with_2() {
    let dir = TempDir::new().unwrap();
    let missing_n = r#"{"instance":{"m":1,"theta":[0],"psi":{"kind":"power","tau":1}}}"#;
    let out = run(dir.path(), missing_n, &["dims"]);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("\"n\""));
    let stray = format!(r#"{{"instance":{POWER},"bogus":1}}"#);
    assert_eq!(code(&run(dir.path(), &stray, &["dims"])), 2);
    let bad_tol = format!(r#"{{"instance":{POWER},"tol":2}}"#);
    assert_eq!(code(&run(dir.path(), &bad_tol, &["dims"])), 2);
    let no_config = Command::new(env!("CARGO_BIN_EXE_wellapprox")).arg("dims").output().unwrap();
    assert_eq!(code(&no_config), 2);
}

#[test]
fn unknown_psi_kind_exits_with_3() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"instance":{"m":1,"n":1,"theta":[0],"psi":{"kind":"lacunary"}}}"#;
    assert_eq!(code(&run(dir.path(), cfg, &["dims"])), 3);
}

#[test]
fn empty_scale_is_degenerate_but_exports_a_header() {
    let dir = TempDir::new().unwrap();
    let cfg = r#"{"instance":{"m":1,"n":1,"theta":[0],"psi":{"kind":"power","tau":1},
        "Q":{"kind":"predicate_table","members":[[1]]}},"s":0.45,"scale_exponent":10}"#;
    assert_eq!(code(&run(dir.path(), cfg, &["spectrum"])), 4);
    let out = run(dir.path(), cfg, &["export"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("out/spectrum.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2, "{text}");
    assert!(lines[0].starts_with("# config_sha256="));
    assert_eq!(lines[1], "l11,re,im,abs");
}

#[test]
fn exhausted_entry_budget_exits_with_5() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{"instance":{POWER},"s":0.45,"k_max":1,"build":{{"entry_budget":10}}}}"#);
    let out = run(dir.path(), &cfg, &["build"]);
    assert_eq!(code(&out), 5, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn dims_reports_the_power_law_values() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{"instance":{POWER}}}"#);
    assert_eq!(code(&run(dir.path(), &cfg, &["dims"])), 0);
    let doc = read_json(dir.path().join("out/dims.json"));
    let dim_f = doc["result"]["fourier_dimension"]["value"].as_f64().unwrap();
    assert!((dim_f - 1.0).abs() < 0.02, "{doc}");
    assert_eq!(doc["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn outputs_are_reproducible_across_thread_counts() {
    let cfg = format!(
        r#"{{"instance":{POWER},"s":0.45,
            "lattice":{{"deltas":[0.1],"qs":[[1],[3]],"samples":100000}}}}"#
    );
    let mut seen = Vec::new();
    for threads in ["1", "3"] {
        let dir = TempDir::new().unwrap();
        for cmd in ["export", "verify-lattice"] {
            let out = run(dir.path(), &cfg, &[cmd, "--seed", "9", "--threads", threads]);
            assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
        }
        let files: Vec<String> = ["spectrum.csv", "series.csv", "lattice.csv", "lattice.json"]
            .iter()
            .map(|f| fs::read_to_string(dir.path().join("out").join(f)).unwrap())
            .collect();
        seen.push(files);
    }
    assert_eq!(seen[0], seen[1]);
    let other_seed = TempDir::new().unwrap();
    run(other_seed.path(), &cfg, &["verify-lattice", "--seed", "10"]);
    let moved = fs::read_to_string(other_seed.path().join("out/lattice.csv")).unwrap();
    assert_ne!(moved, seen[0][2]);
}

#[test]
fn verify_fm_passes_at_the_default_scales() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{"instance":{POWER},"s":0.45}}"#);
    let out = run(dir.path(), &cfg, &["verify-fm"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path().join("out/fm_bounds.json"));
    let scales = doc["result"]["scales"].as_array().unwrap();
    assert_eq!(scales.len(), 3);
    for sc in scales {
        assert_eq!(sc["bounds"]["zero_coefficient_is_one"], true);
        assert_eq!(sc["bounds"]["annulus_is_zero"], true);
    }
}

#[test]
fn two_stage_build_chains_scales() {
    let dir = TempDir::new().unwrap();
    let cfg = format!(r#"{{"instance":{POWER},"s":0.45,"k_max":2,"census_samples":2000}}"#);
    let out = run(dir.path(), &cfg, &["build"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let doc = read_json(dir.path().join("out/stage.json"));
    let scales: Vec<f64> = doc["result"]["scales"].as_array().unwrap().iter().map(|r| r["scale"].as_f64().unwrap()).collect();
    assert_eq!(scales.len(), 2);
    assert!(scales[1] >= 2.0 * scales[0]);
    let decay = fs::read_to_string(dir.path().join("out/decay.csv")).unwrap();
    assert_eq!(decay.lines().nth(1), Some("shell_lo,shell_hi,max_abs_mu_hat,envelope,ratio"));
}
