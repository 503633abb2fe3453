//! Experiment configuration: one TOML file, flag overrides, and a content
//! hash that every artifact embeds.
//!
//! Precedence (highest first): command-line flags, config file, environment
//! (`GINV_OUT_DIR`, output directory only), built-in defaults.  The seed has
//! no default: runs must be reproducible, so a missing seed is a validation
//! error rather than a wall-clock fallback.

use ginv_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

/// Model selector and parameters.  Fields are optional where a documented
/// default exists; validation happens when a subcommand builds the model.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// "vspherical" | "affine-shape" | "pca"
    pub kind: Option<String>,
    /// Observation dimension (v-spherical) or reduced row count (matrix models).
    pub n: Option<usize>,
    /// Column count of the matrix models.
    pub k: Option<usize>,
    /// v-function selector: "elliptical" | "lq" | "max".
    pub v: Option<String>,
    /// Diagonal of the shape matrix Σ₀ (elliptical v-functions and the
    /// affine model; length n).
    pub sigma0_diag: Option<Vec<f64>>,
    /// Exponent of the l_q v-function.
    pub q: Option<f64>,
    /// Location (v-spherical), length n.
    pub mu: Option<Vec<f64>>,
    /// Scale (v-spherical).
    pub sigma: Option<f64>,
    /// Location matrix of the affine model, flattened row-major (n·k values).
    pub m: Option<Vec<f64>>,
    /// Scale matrix of the affine model, flattened row-major (k·k values).
    pub e: Option<Vec<f64>>,
    /// Eigenvalue profile of the PCA model (length k, strictly decreasing).
    pub lambda0: Option<Vec<f64>>,
    /// Frame of the PCA model, flattened row-major (k·k values).
    pub p: Option<Vec<f64>>,
    /// Scale of the PCA model.
    pub g: Option<f64>,
    /// Path of a landmark CSV to ingest (affine-config subcommand).
    pub landmarks: Option<String>,
}

/// Run-shape parameters shared by the subcommands.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Generator label for single-generator subcommands.
    pub generator: Option<String>,
    /// Generator labels for multi-generator subcommands.
    pub generators: Option<Vec<String>>,
    /// Statistic label for null-robustness.
    pub statistic: Option<String>,
    /// Draw count per generator.
    pub count: Option<usize>,
    /// Permutations of the energy test.
    pub permutations: Option<usize>,
    /// Test level.
    pub level: Option<f64>,
    /// Multiplier exponents a of m(g) = g^a.
    pub exponents: Option<Vec<f64>>,
    /// Grid size for equivalence checks and density tables.
    pub grid_points: Option<usize>,
    /// Importance samples for the affine-config Monte Carlo integral.
    pub mc_samples: Option<usize>,
    /// Axis (1-based) of a density slice.
    pub axis: Option<usize>,
    /// Lower edge of a density grid.
    pub grid_min: Option<f64>,
    /// Upper edge of a density grid.
    pub grid_max: Option<f64>,
    /// Density table mode: "slice" | "direction".
    pub table: Option<String>,
    /// Fixed observation for kernel tables, flattened row-major.
    pub x: Option<Vec<f64>>,
    /// Selftest scale: "full" (default) | "quick".
    pub profile: Option<String>,
}

/// The whole experiment configuration.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    pub tolerance: Option<f64>,
    #[serde(default)]
    pub model: ModelConfig,
    #[serde(default)]
    pub run: RunConfig,
}

/// Flag overrides carried from the command line.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
    pub tolerance: Option<f64>,
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| Error::InvalidParameter(format!("config file does not parse: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidParameter(format!("cannot read config file {}: {e}", path.display()))
        })?;
        Self::from_toml_str(&text)
    }

    /// Apply flag overrides and the `GINV_OUT_DIR` fallback, producing the
    /// effective configuration that a run records and hashes.
    pub fn effective(mut self, flags: &Overrides) -> Self {
        if flags.seed.is_some() {
            self.seed = flags.seed;
        }
        if let Some(out) = &flags.out {
            self.out_dir = Some(out.clone());
        }
        if flags.threads.is_some() {
            self.threads = flags.threads;
        }
        if flags.tolerance.is_some() {
            self.tolerance = flags.tolerance;
        }
        if self.out_dir.is_none() {
            if let Ok(dir) = std::env::var("GINV_OUT_DIR") {
                if !dir.is_empty() {
                    self.out_dir = Some(PathBuf::from(dir));
                }
            }
        }
        self
    }

    /// The mandatory seed; absence is a validation error naming the field.
    pub fn require_seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| {
            Error::InvalidParameter(
                "missing required field `seed`: set it in the config file or pass --seed".into(),
            )
        })
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }

    pub fn threads(&self) -> usize {
        self.threads.unwrap_or(1).max(1)
    }

    /// SHA-256 of the canonical JSON serialization of the effective config.
    ///
    /// Only result-determining fields are hashed: the output directory and
    /// the worker count are delivery details, and artifacts are required to
    /// be byte-identical across both.
    pub fn sha256(&self) -> String {
        let mut hashed = self.clone();
        hashed.out_dir = None;
        hashed.threads = None;
        let canonical = serde_json::to_string(&hashed).expect("config serializes to JSON");
        let mut hasher = Sha256::new();
        hasher.update(canonical.as_bytes());
        let digest = hasher.finalize();
        let mut hex = String::with_capacity(64);
        for b in digest {
            hex.push_str(&format!("{b:02x}"));
        }
        hex
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_full_config() {
        let text = r#"
seed = 42
out_dir = "artifacts"
threads = 2
tolerance = 1e-4

[model]
kind = "vspherical"
n = 2
v = "elliptical"
sigma0_diag = [4.0, 1.0]
mu = [0.0, 0.0]
sigma = 1.0

[run]
generators = ["gaussian", "student-d3"]
count = 1000
permutations = 99
level = 0.01
"#;
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        assert_eq!(cfg.seed, Some(42));
        assert_eq!(cfg.model.kind.as_deref(), Some("vspherical"));
        assert_eq!(cfg.run.generators.as_deref().unwrap().len(), 2);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(ExperimentConfig::from_toml_str("sede = 42").is_err());
        assert!(ExperimentConfig::from_toml_str("[model]\nwhatever = 1").is_err());
    }

    #[test]
    fn flags_override_file() {
        let cfg = ExperimentConfig::from_toml_str("seed = 1\nthreads = 1").unwrap();
        let eff = cfg.effective(&Overrides {
            seed: Some(9),
            out: Some(PathBuf::from("/tmp/x")),
            threads: Some(3),
            tolerance: None,
        });
        assert_eq!(eff.seed, Some(9));
        assert_eq!(eff.threads(), 3);
        assert_eq!(eff.out_dir(), PathBuf::from("/tmp/x"));
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::from_toml_str("seed = 1").unwrap();
        let b = ExperimentConfig::from_toml_str("seed = 2").unwrap();
        assert_ne!(a.sha256(), b.sha256());
        assert_eq!(a.sha256(), ExperimentConfig::from_toml_str("seed = 1").unwrap().sha256());
    }

    #[test]
    fn hash_ignores_destination_and_workers() {
        let a = ExperimentConfig::from_toml_str("seed = 1\nout_dir = \"a\"\nthreads = 1").unwrap();
        let b = ExperimentConfig::from_toml_str("seed = 1\nout_dir = \"b\"\nthreads = 4").unwrap();
        assert_eq!(a.sha256(), b.sha256());
    }

    #[test]
    fn missing_seed_names_the_field() {
        let cfg = ExperimentConfig::default();
        let err = cfg.require_seed().unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("seed"), "{err}");
    }
}
