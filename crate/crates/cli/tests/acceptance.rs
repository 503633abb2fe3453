//! Acceptance battery: one test per release criterion, run at full scale
//! with the pinned reference seed.  Criteria 1–9 call the selftest criterion
//! implementations directly (tolerances are pinned inside each criterion);
//! criterion 10 exercises the installed binary end to end.

use ginv_cli::selftest::{CriterionOutcome, Scale, REFERENCE_SEED};
use std::path::Path;
use std::process::Command;

fn check(result: ginv_core::Result<CriterionOutcome>) {
    let outcome = result.expect("criterion ran to completion");
    assert!(
        outcome.pass,
        "criterion {:02} ({}) failed:\n{}",
        outcome.id,
        outcome.name,
        serde_json::to_string_pretty(&outcome.details).unwrap_or_default()
    );
}

fn full() -> Scale {
    Scale::full()
}

#[test]
fn criterion_01_elliptical_normalizing_constant() {
    check(ginv_cli::selftest::criterion_01(REFERENCE_SEED, &full(), 1));
}

#[test]
fn criterion_02_direction_density() {
    check(ginv_cli::selftest::criterion_02(REFERENCE_SEED, &full(), 1));
}

#[test]
fn criterion_03_null_robustness() {
    check(ginv_cli::selftest::criterion_03(REFERENCE_SEED, &full(), 1));
}

#[test]
fn criterion_04_residual_direction_robustness() {
    check(ginv_cli::selftest::criterion_04(REFERENCE_SEED, &full(), 1));
}

#[test]
fn criterion_05_scale_marginal_equivalence() {
    check(ginv_cli::selftest::criterion_05(REFERENCE_SEED, &full(), 1));
}

#[test]
fn criterion_06_configuration_density() {
    check(ginv_cli::selftest::criterion_06(REFERENCE_SEED, &full(), 1));
}

#[test]
fn criterion_07_scalar_posterior_kernel() {
    check(ginv_cli::selftest::criterion_07(REFERENCE_SEED, &full(), 1));
}

#[test]
fn criterion_08_pca_kernel_proportionality() {
    check(ginv_cli::selftest::criterion_08(REFERENCE_SEED, &full(), 1));
}

#[test]
fn criterion_09_framework_consistency() {
    check(ginv_cli::selftest::criterion_09(REFERENCE_SEED, &full(), 1));
}

/// Same seed, same config, two runs: every artifact must be byte-identical.
/// The quick profile keeps the run short without touching the release
/// tolerances; determinism is a property of the pipeline, not of scale.
#[test]
fn criterion_10_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let cfg_path = dir.path().join("selftest.toml");
    std::fs::write(
        &cfg_path,
        format!("seed = {REFERENCE_SEED}\n\n[run]\nprofile = \"quick\"\n"),
    )
    .unwrap();

    let run = |out: &Path| {
        let status = Command::new(env!("CARGO_BIN_EXE_ginv"))
            .arg("selftest")
            .arg("--config")
            .arg(&cfg_path)
            .arg("--out")
            .arg(out)
            .status()
            .expect("binary runs");
        assert!(status.success(), "selftest exited with {status}");
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    run(&a);
    run(&b);

    let names = |d: &Path| -> Vec<String> {
        let mut v: Vec<String> = std::fs::read_dir(d)
            .unwrap()
            .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
            .collect();
        v.sort();
        v
    };
    let list = names(&a);
    assert!(!list.is_empty(), "selftest produced no artifacts");
    assert_eq!(list, names(&b), "the two runs wrote different file sets");
    for name in list {
        let left = std::fs::read(a.join(&name)).unwrap();
        let right = std::fs::read(b.join(&name)).unwrap();
        assert_eq!(left, right, "artifact {name} differs between identical runs");
    }
}
