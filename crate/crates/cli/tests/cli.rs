//! End-to-end checks of the binary: exit-status policy, config precedence,
//! artifact provenance, and the environment fallback for the output
//! directory.

use std::path::Path;
use std::process::{Command, Output};

fn ginv(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ginv"))
        .args(args)
        .current_dir(dir)
        .env_remove("GINV_OUT_DIR")
        .output()
        .expect("binary runs")
}

fn write_cfg(dir: &Path, name: &str, text: &str) -> String {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

#[test]
fn missing_seed_is_a_validation_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.toml", "[model]\nkind = \"vspherical\"\nn = 2\n");
    let out = ginv(&["sample", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("seed"), "error must name the missing field: {err}");
}

#[test]
fn unknown_config_field_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(dir.path(), "c.toml", "seed = 1\nsped = 2\n");
    let out = ginv(&["sample", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn nonintegrable_exponent_is_a_numerical_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "c.toml",
        "seed = 5\n[model]\nkind = \"vspherical\"\nn = 2\n[run]\nexponents = [5.0]\ngrid_points = 3\n",
    );
    let out = ginv(&["marginal-equivalence", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn robustness_run_writes_report_with_p_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "c.toml",
        "seed = 7\n[model]\nkind = \"vspherical\"\nn = 2\n\
         [run]\ngenerators = [\"gaussian\", \"student-d3\"]\ncount = 300\npermutations = 19\n",
    );
    let out_dir = dir.path().join("out");
    let out = ginv(
        &["null-robustness", "--config", &cfg, "--out", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let text = std::fs::read_to_string(out_dir.join("robustness.json")).unwrap();
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["seed"], 7, "artifact must embed the master seed");
    assert!(v["config_sha256"].as_str().map(|h| h.len() == 64).unwrap_or(false));
    let p = v["report"]["comparisons"][0]["p_value"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&p));
    let csv = std::fs::read_to_string(out_dir.join("robustness.csv")).unwrap();
    assert!(csv.starts_with("# config_sha256="));
}

#[test]
fn seed_flag_overrides_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "c.toml",
        "seed = 1\n[model]\nkind = \"vspherical\"\nn = 2\n[run]\ncount = 10\n",
    );
    let out_dir = dir.path().join("out");
    let out = ginv(
        &["sample", "--config", &cfg, "--seed", "99", "--out", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success());
    let csv = std::fs::read_to_string(out_dir.join("samples.csv")).unwrap();
    assert!(csv.starts_with("# seed=99 "), "flag seed must win: {}", csv.lines().next().unwrap());
}

#[test]
fn out_dir_env_fallback_applies_without_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "c.toml",
        "seed = 3\n[model]\nkind = \"vspherical\"\nn = 2\n[run]\ncount = 10\n",
    );
    let env_dir = dir.path().join("from_env");
    let out = Command::new(env!("CARGO_BIN_EXE_ginv"))
        .args(["sample", "--config", &cfg])
        .current_dir(dir.path())
        .env("GINV_OUT_DIR", &env_dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    assert!(env_dir.join("samples.csv").exists());

    // A flag beats the environment.
    let flag_dir = dir.path().join("from_flag");
    let out = Command::new(env!("CARGO_BIN_EXE_ginv"))
        .args(["sample", "--config", &cfg, "--out", flag_dir.to_str().unwrap()])
        .current_dir(dir.path())
        .env("GINV_OUT_DIR", &env_dir)
        .output()
        .expect("binary runs");
    assert!(out.status.success());
    assert!(flag_dir.join("samples.csv").exists());
}

#[test]
fn density_table_has_provenance_header() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_cfg(
        dir.path(),
        "c.toml",
        "seed = 11\n[model]\nkind = \"vspherical\"\nn = 2\n[run]\ngrid_points = 21\n",
    );
    let out_dir = dir.path().join("out");
    let out = ginv(
        &["density", "--config", &cfg, "--out", out_dir.to_str().unwrap()],
        dir.path(),
    );
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(out_dir.join("density.csv")).unwrap();
    assert!(csv.starts_with("# config_sha256="));
    assert!(csv.lines().count() > 21);
}
