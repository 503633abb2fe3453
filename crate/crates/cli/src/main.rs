use clap::{Parser, Subcommand};
use ginv_cli::config::{ExperimentConfig, Overrides};
use ginv_cli::selftest;
use ginv_cli::tasks::{self, RunContext};
use std::path::PathBuf;
use std::process::ExitCode;

/// Group-invariant sampling models: seeded experiments and verification
/// batteries.
///
/// Exit status: 0 success, 2 validation error, 3 numerical failure,
/// 4 statistical-test failure in `selftest`.
#[derive(Parser)]
#[command(name = "ginv", version, about, verbatim_doc_comment)]
struct Cli {
    /// Experiment configuration file (TOML).
    #[arg(long, global = true, value_name = "path")]
    config: Option<PathBuf>,

    /// Master seed; overrides the config file.  Mandatory in one of the two.
    #[arg(long, global = true, value_name = "u64")]
    seed: Option<u64>,

    /// Output directory; overrides the config file and GINV_OUT_DIR.
    #[arg(long, global = true, value_name = "dir")]
    out: Option<PathBuf>,

    /// Worker threads for samplers and permutation tests (default 1).
    #[arg(long, global = true, value_name = "n")]
    threads: Option<usize>,

    /// Tolerance override for the comparison subcommands.
    #[arg(long, global = true, value_name = "float")]
    tolerance: Option<f64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw observations from the configured model (samples.csv, samples.jsonl).
    Sample,
    /// Tabulate a closed-form density along a grid (density.csv).
    Density,
    /// Compare an invariant statistic's sampled law across generators
    /// (robustness.json, robustness.csv).
    NullRobustness,
    /// Verify that the nuisance-marginalized density is proportional to the
    /// closed-form kernel (equivalence_a*.json/.csv).
    MarginalEquivalence,
    /// Configuration-density constant vs Monte Carlo normalization, with
    /// optional landmark ingestion (affine_config.json).
    AffineConfig,
    /// Tabulate the PCA frame kernel over the k = 2 rotation circle
    /// (pca_kernel.csv, pca_kernel.json).
    PcaKernel,
    /// Run the verification battery (selftest_summary.json).
    Selftest,
}

fn run(cli: Cli) -> ginv_core::Result<ExitCode> {
    let file_cfg = match &cli.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    let cfg = file_cfg.effective(&Overrides {
        seed: cli.seed,
        out: cli.out.clone(),
        threads: cli.threads,
        tolerance: cli.tolerance,
    });
    let ctx = RunContext::new(cfg)?;
    match cli.command {
        Command::Sample => tasks::run_sample(&ctx)?,
        Command::Density => tasks::run_density(&ctx)?,
        Command::NullRobustness => tasks::run_null_robustness(&ctx)?,
        Command::MarginalEquivalence => tasks::run_marginal_equivalence(&ctx)?,
        Command::AffineConfig => tasks::run_affine_config(&ctx)?,
        Command::PcaKernel => tasks::run_pca_kernel(&ctx)?,
        Command::Selftest => {
            return Ok(if selftest::run_all(&ctx)? {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(4)
            });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            let kind = if e.is_validation() { "validation" } else { "numerical" };
            eprintln!(
                "{}",
                serde_json::json!({ "error": e.to_string(), "kind": kind })
            );
            if e.is_validation() {
                ExitCode::from(2)
            } else {
                ExitCode::from(3)
            }
        }
    }
}
