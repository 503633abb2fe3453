//! Subcommand implementations.  Every task validates its inputs, runs the
//! corresponding library computation, and writes artifacts that embed the
//! config hash and master seed.  Tasks return structured errors; the binary
//! maps them to exit codes.
//!
//! Exit-status policy: a nonzero status signals that the *run* failed
//! (validation or numerical breakdown).  Statistical verdicts — a robustness
//! comparison rejecting, an equivalence spread above tolerance — are data,
//! recorded in the artifacts' `pass` flags; only `selftest` turns them into
//! an exit status.

use crate::artifacts::{artifact_path, csv_row, write_json, write_table};
use crate::config::ExperimentConfig;
use crate::models::{
    apply_statistic, build_affine, build_pca, build_vspherical, affine_statistic,
    pca_statistic, vspherical_statistic, AffineSetup, ModelKind, PcaSetup, VsphSetup,
    BUILTIN_GENERATORS,
};
use ginv_core::affine_shape::{
    affine_scalar_model, config_density, config_normalization_mc, config_normalizing_constant,
    configuration_coords, sample_matrix_figures, sample_matrix_model, LandmarkFigure,
    TraceProfile,
};
use ginv_core::analysis::{
    invariance_precheck, latin_hypercube, marginal_equivalence_check, null_robustness_test,
    EquivalenceConfig, InvarianceClass, RobustnessConfig,
};
use ginv_core::numerics::QuadratureSpec;
use ginv_core::orbital::Multiplier;
use ginv_core::pca::{
    canonicalize_sign_coset, haar_orthogonal, pca_generator, pca_marginal_kernel, pca_model,
    pca_sampling_density, sample_pca_figures, sample_pca_model, PcaParams,
};
use ginv_core::rng::{derive_seed, stream};
use ginv_core::vspherical::{
    builtin, density as vspherical_density, sample as vspherical_sample, sample_points,
    star_model, DirectionDensity,
};
use ginv_core::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde_json::json;
use std::path::PathBuf;

/// Everything a task needs: the effective config, its hash, and the
/// mandatory provenance fields.
pub struct RunContext {
    pub cfg: ExperimentConfig,
    pub hash: String,
    pub seed: u64,
    pub out_dir: String,
    pub threads: usize,
}

impl RunContext {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        let seed = cfg.require_seed()?;
        let hash = cfg.sha256();
        let out_dir = cfg.out_dir().to_string_lossy().into_owned();
        let threads = cfg.threads();
        Ok(Self { cfg, hash, seed, out_dir, threads })
    }

    pub fn path(&self, name: &str) -> Result<PathBuf> {
        artifact_path(&self.out_dir, name)
    }

    fn quad(&self) -> QuadratureSpec {
        QuadratureSpec::default()
    }
}

/// Default draw count for sampling-type tasks.
const DEFAULT_COUNT: usize = 1000;

// ---------------------------------------------------------------- sample --

/// `sample`: draw from the configured model and write `samples.csv` and
/// `samples.jsonl`.
pub fn run_sample(ctx: &RunContext) -> Result<()> {
    let count = ctx.cfg.run.count.unwrap_or(DEFAULT_COUNT);
    let label = ctx.cfg.run.generator.as_deref().unwrap_or("gaussian");
    let mut batch = match ModelKind::from_config(&ctx.cfg.model)? {
        ModelKind::VSpherical => {
            let VsphSetup { n, v, params, .. } = build_vspherical(&ctx.cfg.model)?;
            let f = builtin(label, n)?.normalized_for(&v, n, &ctx.quad())?;
            vspherical_sample(count, &params, &v, &f, ctx.seed, ctx.threads)?
        }
        ModelKind::AffineShape => {
            let AffineSetup { n, k, sigma0, params } = build_affine(&ctx.cfg.model)?;
            let profile = TraceProfile::builtin(label, n * k)?;
            sample_matrix_model(count, &params, &sigma0, &profile, ctx.seed, ctx.threads)?
        }
        ModelKind::Pca => {
            let PcaSetup { n, lambda0, params } = build_pca(&ctx.cfg.model)?;
            let profile = TraceProfile::builtin(label, n * lambda0.len())?;
            sample_pca_model(count, &params, &lambda0, n, &profile, ctx.seed, ctx.threads)?
        }
    };
    batch
        .meta_mut()
        .insert("config_sha256".into(), serde_json::Value::String(ctx.hash.clone()));
    let csv = std::fs::File::create(ctx.path("samples.csv")?)?;
    batch.write_csv(std::io::BufWriter::new(csv))?;
    let jsonl = std::fs::File::create(ctx.path("samples.jsonl")?)?;
    batch.write_jsonl(std::io::BufWriter::new(jsonl))?;
    Ok(())
}

// --------------------------------------------------------------- density --

/// `density`: tabulate a closed-form density along a one-dimensional grid
/// and write `density.csv`.
pub fn run_density(ctx: &RunContext) -> Result<()> {
    let points = ctx.cfg.run.grid_points.unwrap_or(201).max(2);
    let label = ctx.cfg.run.generator.as_deref().unwrap_or("gaussian");
    let (header, rows) = match ModelKind::from_config(&ctx.cfg.model)? {
        ModelKind::VSpherical => {
            let VsphSetup { n, v, params, .. } = build_vspherical(&ctx.cfg.model)?;
            match ctx.cfg.run.table.as_deref().unwrap_or("slice") {
                "slice" => {
                    let axis = ctx.cfg.run.axis.unwrap_or(1);
                    if axis == 0 || axis > n {
                        return Err(Error::InvalidParameter(format!(
                            "`run.axis` must be in 1..={n}, got {axis}"
                        )));
                    }
                    let lo = ctx.cfg.run.grid_min.unwrap_or(-5.0);
                    let hi = ctx.cfg.run.grid_max.unwrap_or(5.0);
                    let f = builtin(label, n)?.normalized_for(&v, n, &ctx.quad())?;
                    let mut rows = Vec::with_capacity(points);
                    for i in 0..points {
                        let t = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                        let mut x = params.mu().clone();
                        x[axis - 1] = t;
                        let dens = match vspherical_density(&x, &params, &v, &f) {
                            Ok(d) => d,
                            Err(Error::ExcludedPoint(_)) => 0.0,
                            Err(e) => return Err(e),
                        };
                        rows.push(csv_row(&[t, dens]));
                    }
                    (format!("x{axis},density"), rows)
                }
                "direction" => {
                    if n != 2 {
                        return Err(Error::InvalidParameter(format!(
                            "the direction table is tabulated over the circle and needs n = 2, got n = {n}"
                        )));
                    }
                    let dd = DirectionDensity::new(&v, 2, &ctx.quad())?;
                    let mut rows = Vec::with_capacity(points);
                    for i in 0..points {
                        let theta = 2.0 * std::f64::consts::PI * i as f64 / points as f64;
                        let u = DVector::from_vec(vec![theta.cos(), theta.sin()]);
                        rows.push(csv_row(&[theta, dd.eval(&u)?]));
                    }
                    ("theta,density".to_string(), rows)
                }
                other => {
                    return Err(Error::InvalidParameter(format!(
                        "unknown table mode '{other}' (expected slice or direction)"
                    )))
                }
            }
        }
        ModelKind::AffineShape => {
            let AffineSetup { n, k, sigma0, .. } = build_affine(&ctx.cfg.model)?;
            let lo = ctx.cfg.run.grid_min.unwrap_or(-5.0);
            let hi = ctx.cfg.run.grid_max.unwrap_or(5.0);
            let mut rows = Vec::with_capacity(points);
            for i in 0..points {
                let t = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                let mut v_mat = DMatrix::zeros(n - k, k);
                v_mat[(0, 0)] = t;
                rows.push(csv_row(&[t, config_density(&v_mat, &sigma0, n)?]));
            }
            ("v11,density".to_string(), rows)
        }
        ModelKind::Pca => {
            let PcaSetup { n, lambda0, params } = build_pca(&ctx.cfg.model)?;
            let k = lambda0.len();
            let lo = ctx.cfg.run.grid_min.unwrap_or(0.05);
            let hi = ctx.cfg.run.grid_max.unwrap_or(5.0);
            if !(lo > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "the PCA ray table needs `run.grid_min` > 0 (the zero matrix is excluded), got {lo}"
                )));
            }
            let profile = TraceProfile::builtin(label, n * k)?;
            let f = pca_generator(&profile, &lambda0, n, &ctx.quad())?;
            let mut x0 = DMatrix::zeros(n, k);
            x0[(0, 0)] = 1.0;
            let mut rows = Vec::with_capacity(points);
            for i in 0..points {
                let t = lo + (hi - lo) * i as f64 / (points - 1) as f64;
                let x = &x0 * t;
                rows.push(csv_row(&[t, pca_sampling_density(&x, &params, &lambda0, &f)?]));
            }
            ("r,density".to_string(), rows)
        }
    };
    let mut content = header;
    content.push('\n');
    for row in rows {
        content.push_str(&row);
        content.push('\n');
    }
    write_table(&ctx.path("density.csv")?, &ctx.hash, ctx.seed, &content)
}

// ------------------------------------------------------- null-robustness --

fn generator_labels(cfg: &ExperimentConfig) -> Vec<String> {
    match (&cfg.run.generators, &cfg.run.generator) {
        (Some(list), _) => list.clone(),
        (None, Some(one)) => vec![one.clone()],
        (None, None) => BUILTIN_GENERATORS.iter().map(|s| s.to_string()).collect(),
    }
}

/// Residual-maker check: the configured location must lie in the column
/// space of the design, otherwise the residual direction is not a null
/// statistic.
fn location_in_span(mu: &DVector<f64>, design: &DMatrix<f64>) -> Result<()> {
    let xtx = design.transpose() * design;
    let coef = xtx
        .lu()
        .solve(&(design.transpose() * mu))
        .ok_or_else(|| Error::RankDeficient("regression design is rank deficient".into()))?;
    let resid = mu - design * coef;
    if resid.norm() > 1e-10 * mu.norm().max(1.0) {
        return Err(Error::InvalidParameter(
            "`model.mu` must lie in the design column space for the residual-direction \
             statistic (residual of the location is nonzero)"
                .into(),
        ));
    }
    Ok(())
}

/// Default regression design for the residual-direction statistic: an
/// intercept plus a centered linear trend.
pub fn default_design(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, 2, |i, j| if j == 0 { 1.0 } else { i as f64 - (n as f64 - 1.0) / 2.0 })
}

/// Cases and tolerance of the invariance precheck run before any robustness
/// comparison of a claimed-invariant statistic.
const PRECHECK_CASES: usize = 200;
const PRECHECK_TOL: f64 = 1e-8;

/// `null-robustness`: sample each generator at the null parameter, map the
/// draws through the statistic, and compare all generator pairs with the
/// energy permutation test.  Writes `robustness.json` and `robustness.csv`.
pub fn run_null_robustness(ctx: &RunContext) -> Result<()> {
    let labels = generator_labels(&ctx.cfg);
    if labels.len() < 2 {
        return Err(Error::InvalidParameter(
            "null-robustness needs at least two generators (`run.generators`)".into(),
        ));
    }
    let count = ctx.cfg.run.count.unwrap_or(DEFAULT_COUNT);
    let rcfg = RobustnessConfig {
        permutations: ctx.cfg.run.permutations.unwrap_or(500),
        level: ctx.cfg.run.level.unwrap_or(0.01),
        seed: derive_seed(ctx.seed, 999),
        threads: ctx.threads,
    };
    let stat_label = ctx.cfg.run.statistic.as_deref().unwrap_or("cross-section");

    let report = match ModelKind::from_config(&ctx.cfg.model)? {
        ModelKind::VSpherical => {
            let VsphSetup { n, v, params, .. } = build_vspherical(&ctx.cfg.model)?;
            let design =
                if stat_label == "residual-direction" { Some(default_design(n)) } else { None };
            if let Some(d) = &design {
                location_in_span(params.mu(), d)?;
            } else if params.mu().norm() != 0.0 {
                return Err(Error::InvalidParameter(
                    "null-robustness compares the statistic's law at the null: set `model.mu` \
                     to zero (the statistic is computed on the raw observation)"
                        .into(),
                ));
            }
            let stat = vspherical_statistic(stat_label, &v, design)?;
            let precheck = match stat.invariance {
                InvarianceClass::Invariant => Some(invariance_precheck(
                    &star_model(&v, n),
                    &ginv_core::vspherical::framework_hooks(n),
                    &stat,
                    PRECHECK_CASES,
                    PRECHECK_TOL,
                    derive_seed(ctx.seed, 7),
                )?),
                InvarianceClass::Unrestricted => None,
            };
            let mut samples = Vec::new();
            for (i, label) in labels.iter().enumerate() {
                let f = builtin(label, n)?.normalized_for(&v, n, &ctx.quad())?;
                let (pts, _) =
                    sample_points(count, &params, &v, &f, derive_seed(ctx.seed, 100 + i as u64), ctx.threads)?;
                samples.push((label.clone(), apply_statistic(&stat, &pts)?));
            }
            null_robustness_test(
                "vspherical",
                &stat.label,
                stat.invariance,
                precheck,
                &samples,
                &rcfg,
            )?
        }
        ModelKind::AffineShape => {
            let AffineSetup { n, k, sigma0, params } = build_affine(&ctx.cfg.model)?;
            if params.m().norm() != 0.0 {
                return Err(Error::InvalidParameter(
                    "null-robustness compares the statistic's law at the null: set `model.m` \
                     to zero (the statistic is computed on the raw observation)"
                        .into(),
                ));
            }
            let stat = affine_statistic(stat_label)?;
            let precheck = match stat.invariance {
                InvarianceClass::Invariant => Some(invariance_precheck(
                    &ginv_core::affine_shape::affine_model(&sigma0, n, k)?,
                    &ginv_core::affine_shape::framework_hooks(n, k),
                    &stat,
                    PRECHECK_CASES,
                    PRECHECK_TOL,
                    derive_seed(ctx.seed, 7),
                )?),
                InvarianceClass::Unrestricted => None,
            };
            let mut samples = Vec::new();
            for (i, label) in labels.iter().enumerate() {
                let profile = TraceProfile::builtin(label, n * k)?;
                let (figs, _) = sample_matrix_figures(
                    count,
                    &params,
                    &sigma0,
                    &profile,
                    derive_seed(ctx.seed, 100 + i as u64),
                    ctx.threads,
                )?;
                samples.push((label.clone(), apply_statistic(&stat, &figs)?));
            }
            null_robustness_test(
                "affine-shape",
                &stat.label,
                stat.invariance,
                precheck,
                &samples,
                &rcfg,
            )?
        }
        ModelKind::Pca => {
            let PcaSetup { n, lambda0, params } = build_pca(&ctx.cfg.model)?;
            let stat = pca_statistic(stat_label, &lambda0)?;
            let precheck = match stat.invariance {
                InvarianceClass::Invariant => Some(invariance_precheck(
                    &pca_model(lambda0.clone(), n)?,
                    &ginv_core::pca::framework_hooks(n, lambda0.len()),
                    &stat,
                    PRECHECK_CASES,
                    PRECHECK_TOL,
                    derive_seed(ctx.seed, 7),
                )?),
                InvarianceClass::Unrestricted => None,
            };
            let mut samples = Vec::new();
            for (i, label) in labels.iter().enumerate() {
                let profile = TraceProfile::builtin(label, n * lambda0.len())?;
                let (figs, _) = sample_pca_figures(
                    count,
                    &params,
                    &lambda0,
                    n,
                    &profile,
                    derive_seed(ctx.seed, 100 + i as u64),
                    ctx.threads,
                )?;
                samples.push((label.clone(), apply_statistic(&stat, &figs)?));
            }
            null_robustness_test("pca", &stat.label, stat.invariance, precheck, &samples, &rcfg)?
        }
    };

    write_json(&ctx.path("robustness.json")?, &ctx.hash, ctx.seed, serde_json::to_value(&report)?)?;
    write_table(&ctx.path("robustness.csv")?, &ctx.hash, ctx.seed, &report.to_csv_string())?;
    println!(
        "null-robustness: {} on {} | {} comparisons | all_pass = {}",
        report.statistic,
        report.model,
        report.comparisons.len(),
        report.all_pass
    );
    Ok(())
}

// --------------------------------------------------- marginal-equivalence --

/// Build the v-spherical (x, μ) grid by Latin hypercube over
/// [−2, 2]ⁿ × [−1, 1]ⁿ, dropping points where x − μ falls inside the
/// excluded null set.
fn vspherical_grid(n: usize, points: usize, seed: u64) -> Result<Vec<(DVector<f64>, DVector<f64>)>> {
    let lo: Vec<f64> = (0..2 * n).map(|d| if d < n { -2.0 } else { -1.0 }).collect();
    let hi: Vec<f64> = (0..2 * n).map(|d| if d < n { 2.0 } else { 1.0 }).collect();
    let design = latin_hypercube(2 * n, points, &lo, &hi, seed)?;
    let mut grid = Vec::with_capacity(points);
    for row in design {
        let x = DVector::from_vec(row[..n].to_vec());
        let mu = DVector::from_vec(row[n..].to_vec());
        if (&x - &mu).norm() > 1e-3 {
            grid.push((x, mu));
        }
    }
    if grid.len() < 2 {
        return Err(Error::Domain("equivalence grid collapsed onto the excluded set".into()));
    }
    Ok(grid)
}

/// `marginal-equivalence`: verify that the nuisance-marginalized density is
/// proportional to the closed-form kernel, one report per multiplier
/// exponent.  Available for the scalar-group models (v-spherical,
/// affine-shape with k = 1, PCA).
pub fn run_marginal_equivalence(ctx: &RunContext) -> Result<()> {
    let labels = generator_labels(&ctx.cfg);
    let exponents = ctx.cfg.run.exponents.clone().unwrap_or_else(|| vec![0.0, 1.0]);
    if exponents.is_empty() {
        return Err(Error::InvalidParameter("`run.exponents` must not be empty".into()));
    }
    let ecfg = EquivalenceConfig {
        quad: ctx.quad(),
        tolerance: ctx.cfg.tolerance.unwrap_or(1e-4),
        integrability_margin: 1e-3,
    };

    for a in &exponents {
        let m = Multiplier::power(*a);
        let report = match ModelKind::from_config(&ctx.cfg.model)? {
            ModelKind::VSpherical => {
                let VsphSetup { n, v, .. } = build_vspherical(&ctx.cfg.model)?;
                let points = ctx.cfg.run.grid_points.unwrap_or(25);
                let grid = vspherical_grid(n, points, derive_seed(ctx.seed, 5))?;
                let gens = labels
                    .iter()
                    .map(|l| Ok(builtin(l, n)?.normalized_for(&v, n, &ctx.quad())?.as_orbital()))
                    .collect::<Result<Vec<_>>>()?;
                marginal_equivalence_check(&star_model(&v, n), &gens, &m, &grid, &ecfg)?
            }
            ModelKind::AffineShape => {
                let AffineSetup { n, k, sigma0, .. } = build_affine(&ctx.cfg.model)?;
                if k != 1 {
                    return Err(Error::InvalidParameter(format!(
                        "marginal equivalence integrates over a scalar nuisance group; \
                         affine-shape supports it for k = 1 only (got k = {k}; the GL_k \
                         scale has no one-dimensional reduction)"
                    )));
                }
                let v = ginv_core::vspherical::v_elliptical(sigma0.clone());
                let points = ctx.cfg.run.grid_points.unwrap_or(25);
                // (Y, M) pairs with Y₁ − M₁ bounded away from the excluded
                // hyperplane Y₁ = M₁.
                let lo: Vec<f64> =
                    std::iter::once(1.0).chain(std::iter::repeat(-2.0)).take(n)
                        .chain(std::iter::repeat(-0.4).take(n))
                        .collect();
                let hi: Vec<f64> =
                    std::iter::once(3.0).chain(std::iter::repeat(2.0)).take(n)
                        .chain(std::iter::repeat(0.4).take(n))
                        .collect();
                let design = latin_hypercube(2 * n, points, &lo, &hi, derive_seed(ctx.seed, 5))?;
                let grid: Vec<(DVector<f64>, DVector<f64>)> = design
                    .into_iter()
                    .map(|row| {
                        (DVector::from_vec(row[..n].to_vec()), DVector::from_vec(row[n..].to_vec()))
                    })
                    .collect();
                let gens = labels
                    .iter()
                    .map(|l| Ok(builtin(l, n)?.normalized_for(&v, n, &ctx.quad())?.as_orbital()))
                    .collect::<Result<Vec<_>>>()?;
                marginal_equivalence_check(&affine_scalar_model(&sigma0), &gens, &m, &grid, &ecfg)?
            }
            ModelKind::Pca => {
                let PcaSetup { n, lambda0, .. } = build_pca(&ctx.cfg.model)?;
                let k = lambda0.len();
                let points = ctx.cfg.run.grid_points.unwrap_or(4);
                let design = latin_hypercube(
                    n * k,
                    points,
                    &vec![-2.0; n * k],
                    &vec![2.0; n * k],
                    derive_seed(ctx.seed, 5),
                )?;
                let mut frame_rng = stream(derive_seed(ctx.seed, 6), 0);
                let grid: Vec<(DMatrix<f64>, DMatrix<f64>)> = design
                    .into_iter()
                    .map(|row| {
                        let x = DMatrix::from_row_slice(n, k, &row);
                        let p = canonicalize_sign_coset(&haar_orthogonal(k, &mut frame_rng));
                        (x, p)
                    })
                    .collect();
                let gens = labels
                    .iter()
                    .map(|l| {
                        pca_generator(&TraceProfile::builtin(l, n * k)?, &lambda0, n, &ctx.quad())
                    })
                    .collect::<Result<Vec<_>>>()?;
                marginal_equivalence_check(&pca_model(lambda0.clone(), n)?, &gens, &m, &grid, &ecfg)?
            }
        };
        let stem = format!("equivalence_a{a}");
        write_json(
            &ctx.path(&format!("{stem}.json"))?,
            &ctx.hash,
            ctx.seed,
            serde_json::to_value(&report)?,
        )?;
        write_table(&ctx.path(&format!("{stem}.csv"))?, &ctx.hash, ctx.seed, &report.to_csv_string())?;
        println!(
            "marginal-equivalence: {} | m(g)=g^{a} | max spread {:.3e} (tolerance {:.1e}) | pass = {}",
            report.model, report.max_spread, report.tolerance, report.pass
        );
    }
    Ok(())
}

// ---------------------------------------------------------- affine-config --

/// `affine-config`: compare the closed-form configuration-density constant
/// against the reciprocal Monte Carlo normalization integral; optionally
/// ingest a landmark CSV and report its configuration.  Writes
/// `affine_config.json`.
pub fn run_affine_config(ctx: &RunContext) -> Result<()> {
    let AffineSetup { n, k, sigma0, .. } = build_affine(&ctx.cfg.model)?;
    let samples = ctx.cfg.run.mc_samples.unwrap_or(1_000_000);
    let tolerance = ctx.cfg.tolerance.unwrap_or(2e-2);

    let constant = config_normalizing_constant(&sigma0, n, k)?;
    let mc = config_normalization_mc(&sigma0, n, k, samples, derive_seed(ctx.seed, 3))?;
    let implied = 1.0 / mc.value;
    let relative_error = (constant - implied).abs() / constant;
    let pass = relative_error < tolerance;

    let mut body = json!({
        "n": n,
        "k": k,
        "closed_form_constant": constant,
        "mc_normalization": { "value": mc.value, "std_error": mc.error, "samples": samples },
        "implied_constant": implied,
        "relative_error": relative_error,
        "tolerance": tolerance,
        "pass": pass,
    });

    if let Some(path) = &ctx.cfg.model.landmarks {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::InvalidParameter(format!("cannot read landmark file {path}: {e}"))
        })?;
        let figure = LandmarkFigure::from_csv_str(&text)?;
        let reduced = figure.helmert_reduced()?;
        if reduced.nrows() != n || reduced.ncols() != k {
            return Err(Error::DimensionMismatch(format!(
                "landmark file reduces to a {}×{} figure, config says ({n}, {k})",
                reduced.nrows(),
                reduced.ncols()
            )));
        }
        let cfg_coords = configuration_coords(&reduced)?;
        let dens = config_density(cfg_coords.v(), &sigma0, n)?;
        body["landmarks"] = json!({
            "file": path,
            "v": crate::models::flatten_row_major(cfg_coords.v()),
            "config_density": dens,
        });
    }

    write_json(&ctx.path("affine_config.json")?, &ctx.hash, ctx.seed, body)?;
    println!(
        "affine-config: constant {constant:.6e} vs 1/MC {implied:.6e} | relative error {relative_error:.3e} | pass = {pass}"
    );
    Ok(())
}

// ------------------------------------------------------------- pca-kernel --

/// `pca-kernel`: tabulate the frame-marginal kernel over the k = 2 rotation
/// circle together with the numeric nuisance marginal; writes
/// `pca_kernel.csv` and `pca_kernel.json`.
pub fn run_pca_kernel(ctx: &RunContext) -> Result<()> {
    let PcaSetup { n, lambda0, .. } = build_pca(&ctx.cfg.model)?;
    let k = lambda0.len();
    if k != 2 {
        return Err(Error::InvalidParameter(format!(
            "pca-kernel tabulates the k = 2 frame circle; got k = {k}"
        )));
    }
    let a = ctx.cfg.run.exponents.as_ref().and_then(|e| e.first().copied()).unwrap_or(0.0);
    if a >= (n * k) as f64 {
        return Err(Error::NotIntegrable(format!(
            "multiplier exponent a = {a} needs a < kn = {} for an integrable scale marginal",
            n * k
        )));
    }
    let points = ctx.cfg.run.grid_points.unwrap_or(64).max(2);
    let x = match &ctx.cfg.run.x {
        Some(vals) => {
            if vals.len() != n * k {
                return Err(Error::DimensionMismatch(format!(
                    "`run.x` has {} values, expected n·k = {}",
                    vals.len(),
                    n * k
                )));
            }
            DMatrix::from_row_slice(n, k, vals)
        }
        None => {
            let row = latin_hypercube(n * k, 1, &vec![-2.0; n * k], &vec![2.0; n * k],
                derive_seed(ctx.seed, 4))?
                .pop()
                .expect("one design row");
            DMatrix::from_row_slice(n, k, &row)
        }
    };
    let label = ctx.cfg.run.generator.as_deref().unwrap_or("gaussian");
    let f = pca_generator(&TraceProfile::builtin(label, n * k)?, &lambda0, n, &ctx.quad())?;
    let m = Multiplier::power(a);

    let mut content = String::from("theta,kernel,numeric_marginal,log_ratio\n");
    let mut log_ratios = Vec::with_capacity(points);
    for i in 0..points {
        let theta = std::f64::consts::PI * i as f64 / points as f64;
        let p = DMatrix::from_row_slice(
            2,
            2,
            &[theta.cos(), -theta.sin(), theta.sin(), theta.cos()],
        );
        let kernel = pca_marginal_kernel(&x, &p, &lambda0, a)?;
        let marginal = ginv_core::numerics::integrate_radial(
            |g| match PcaParams::new(p.clone(), g) {
                Ok(params) => match pca_sampling_density(&x, &params, &lambda0, &f) {
                    Ok(d) => d * m.eval(&g) / g,
                    Err(_) => f64::NAN,
                },
                Err(_) => f64::NAN,
            },
            1,
            &ctx.quad(),
        )?
        .value;
        let log_ratio = marginal.ln() - kernel.ln();
        log_ratios.push(log_ratio);
        content.push_str(&csv_row(&[theta, kernel, marginal, log_ratio]));
        content.push('\n');
    }
    let spread = log_ratios.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - log_ratios.iter().cloned().fold(f64::INFINITY, f64::min);

    write_table(&ctx.path("pca_kernel.csv")?, &ctx.hash, ctx.seed, &content)?;
    write_json(
        &ctx.path("pca_kernel.json")?,
        &ctx.hash,
        ctx.seed,
        json!({
            "n": n,
            "lambda0": lambda0,
            "exponent": a,
            "generator": label,
            "x": crate::models::flatten_row_major(&x),
            "theta_points": points,
            "log_ratio_spread": spread,
        }),
    )?;
    println!("pca-kernel: {points} frame points | log-ratio spread {spread:.3e}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx_from(text: &str, dir: &std::path::Path) -> RunContext {
        let cfg = ExperimentConfig::from_toml_str(text).unwrap();
        let cfg = cfg.effective(&crate::config::Overrides {
            out: Some(dir.to_path_buf()),
            ..Default::default()
        });
        RunContext::new(cfg).unwrap()
    }

    #[test]
    fn sample_task_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let text = "seed = 11\n[model]\nkind = \"vspherical\"\nn = 2\n[run]\ncount = 50\n";
        let a_dir = dir.path().join("a");
        let b_dir = dir.path().join("b");
        run_sample(&ctx_from(text, &a_dir)).unwrap();
        run_sample(&ctx_from(text, &b_dir)).unwrap();
        let a = std::fs::read(a_dir.join("samples.csv")).unwrap();
        let b = std::fs::read(b_dir.join("samples.csv")).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "same (config, seed) must be byte-identical");
    }

    #[test]
    fn sample_embeds_hash_and_seed() {
        let dir = tempfile::tempdir().unwrap();
        let text = "seed = 11\n[model]\nkind = \"vspherical\"\nn = 2\n[run]\ncount = 10\n";
        let ctx = ctx_from(text, dir.path());
        run_sample(&ctx).unwrap();
        let csv = std::fs::read_to_string(dir.path().join("samples.csv")).unwrap();
        assert!(csv.contains(&ctx.hash));
        assert!(csv.contains("seed=11"));
    }

    #[test]
    fn density_direction_table_needs_n2() {
        let dir = tempfile::tempdir().unwrap();
        let text = "seed = 1\n[model]\nkind = \"vspherical\"\nn = 3\n[run]\ntable = \"direction\"\n";
        let err = run_density(&ctx_from(text, dir.path())).unwrap_err();
        assert!(err.is_validation());
    }

    #[test]
    fn robustness_rejects_nonzero_location() {
        let dir = tempfile::tempdir().unwrap();
        let text = "seed = 1\n[model]\nkind = \"vspherical\"\nn = 2\nmu = [1.0, 0.0]\n";
        let err = run_null_robustness(&ctx_from(text, dir.path())).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("mu"), "{err}");
    }

    #[test]
    fn equivalence_rejects_glk() {
        let dir = tempfile::tempdir().unwrap();
        let text = "seed = 1\n[model]\nkind = \"affine-shape\"\nn = 4\nk = 2\n";
        let err = run_marginal_equivalence(&ctx_from(text, dir.path())).unwrap_err();
        assert!(err.is_validation());
        assert!(err.to_string().contains("k = 1"), "{err}");
    }

    #[test]
    fn pca_kernel_small_grid() {
        let dir = tempfile::tempdir().unwrap();
        let text = "seed = 3\n[model]\nkind = \"pca\"\nn = 4\nlambda0 = [3.0, 1.0]\n[run]\ngrid_points = 6\n";
        run_pca_kernel(&ctx_from(text, dir.path())).unwrap();
        let json: serde_json::Value = serde_json::from_str(
            &std::fs::read_to_string(dir.path().join("pca_kernel.json")).unwrap(),
        )
        .unwrap();
        let spread = json["report"]["log_ratio_spread"].as_f64().unwrap();
        assert!(spread < 1e-6, "kernel must be proportional to the marginal, spread {spread}");
        let csv = std::fs::read_to_string(dir.path().join("pca_kernel.csv")).unwrap();
        assert!(csv.lines().count() == 2 + 6, "comment + header + 6 rows");
    }
}
