//! The selftest battery: nine verification criteria covering the closed
//! forms, the two structural theorems (null robustness, marginal
//! equivalence), and the framework laws, each with pinned tolerances.  The
//! tenth acceptance property — byte-identical artifacts across reruns — is
//! checked from outside by running the binary twice.
//!
//! Every criterion is a standalone function so the acceptance suite can run
//! them individually; `run_all` strings them together, prints one PASS/FAIL
//! line per criterion, and writes a deterministic summary artifact.

use crate::artifacts::write_json;
use crate::models::{apply_statistic, vspherical_statistic};
use crate::tasks::{default_design, RunContext};
use ginv_core::affine_shape::{
    affine_model, affine_scalar_model, config_normalization_mc, config_normalizing_constant,
    configuration_coords, sample_matrix_figures, MatrixModelParams, TraceProfile,
};
use ginv_core::analysis::{
    chi_square_gof, invariance_precheck, marginal_equivalence_check, null_robustness_test,
    EquivalenceConfig, InvarianceClass, RobustnessConfig, RobustnessReport, StatisticSpec,
};
use ginv_core::numerics::{integrate, integrate_radial, sphere_surface_area, PosDefMatrix, QuadratureSpec};
use ginv_core::orbital::{check_framework, Multiplier, ParamPoint};
use ginv_core::pca::{
    canonicalize_sign_coset, haar_orthogonal, pca_generator, pca_marginal_kernel, pca_model,
    pca_sampling_density, sample_pca_figures, PcaParams,
};
use ginv_core::rng::{derive_seed, stream};
use ginv_core::vspherical::{
    builtin, builtin_set, density as vspherical_density, direction_model, sample_points,
    sphere_integral, star_model, v_elliptical, VSphericalParams,
};
use ginv_core::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde_json::{json, Value};

/// Seed used by the acceptance suite; any seed works for the infrastructure,
/// but the statistical criteria are discrete permutation tests, so the suite
/// pins one seed and verifies it end to end.
pub const REFERENCE_SEED: u64 = 314_159;

/// Scale knobs of the battery.  `full` is the acceptance scale with the
/// documented budgets; `quick` is a smaller smoke profile with the same
/// logic (used by the determinism check, where the battery runs twice).
#[derive(Debug, Clone, Copy)]
pub struct Scale {
    pub label: &'static str,
    pub constant_rel_tol: f64,
    pub direction_draws: usize,
    pub direction_bins: usize,
    pub robustness_draws: usize,
    pub negative_draws: usize,
    pub residual_draws: usize,
    pub permutations: usize,
    pub level: f64,
    pub equivalence_grid: usize,
    pub equivalence_generators: usize,
    pub config_mc_samples: usize,
    pub config_draws: usize,
    pub config_radial_bins: usize,
    pub config_angle_bins: usize,
    pub framework_cases: usize,
}

impl Scale {
    pub fn full() -> Self {
        Scale {
            label: "full",
            constant_rel_tol: 1e-6,
            direction_draws: 100_000,
            direction_bins: 36,
            robustness_draws: 10_000,
            negative_draws: 2_000,
            residual_draws: 10_000,
            permutations: 99,
            level: 0.01,
            equivalence_grid: 25,
            equivalence_generators: 4,
            config_mc_samples: 1_000_000,
            config_draws: 20_000,
            config_radial_bins: 12,
            config_angle_bins: 8,
            framework_cases: 1_000,
        }
    }

    pub fn quick() -> Self {
        Scale {
            label: "quick",
            constant_rel_tol: 1e-6,
            direction_draws: 20_000,
            direction_bins: 24,
            robustness_draws: 1_500,
            negative_draws: 800,
            residual_draws: 1_500,
            permutations: 99,
            level: 0.01,
            equivalence_grid: 10,
            equivalence_generators: 2,
            config_mc_samples: 200_000,
            config_draws: 6_000,
            config_radial_bins: 8,
            config_angle_bins: 4,
            framework_cases: 300,
        }
    }

    pub fn from_label(label: &str) -> Result<Self> {
        match label {
            "full" => Ok(Self::full()),
            "quick" => Ok(Self::quick()),
            other => Err(Error::InvalidParameter(format!(
                "unknown selftest profile '{other}' (expected full or quick)"
            ))),
        }
    }
}

/// Outcome of one criterion: a stable id/name, the verdict, and a
/// deterministic JSON detail blob that the summary artifact embeds.
#[derive(Debug, Clone, serde::Serialize)]
pub struct CriterionOutcome {
    pub id: usize,
    pub name: String,
    pub pass: bool,
    pub details: Value,
}

fn quad() -> QuadratureSpec {
    QuadratureSpec::default()
}

// ------------------------------------------------------------ criterion 1 --

/// Elliptical normalizing constant: after generator normalization, the
/// radial mass ∫f(r)r^{n−1}dr must equal 1/(ω_n √det Σ₀) for every built-in
/// generator, n ∈ {2, 3}, and two shape matrices.
pub fn criterion_01(_seed: u64, scale: &Scale, _threads: usize) -> Result<CriterionOutcome> {
    let mut cases = Vec::new();
    let mut max_rel = 0.0f64;
    for n in [2usize, 3] {
        let shapes: Vec<Vec<f64>> = vec![vec![1.0; n], {
            let mut d = vec![1.0; n];
            d[0] = 4.0;
            d
        }];
        for diag in shapes {
            let sigma0 = PosDefMatrix::from_diagonal(&diag)?;
            let v = v_elliptical(sigma0.clone());
            let target = 1.0 / (sphere_surface_area(n)? * sigma0.det().sqrt());
            for f in builtin_set(n)? {
                let fnorm = f.normalized_for(&v, n, &quad())?;
                let c = integrate_radial(|r| fnorm.eval(r) * r.powi(n as i32 - 1), 1, &quad())?
                    .value;
                let rel = ((c - target) / target).abs();
                max_rel = max_rel.max(rel);
                cases.push(json!({
                    "n": n, "sigma0_diag": diag, "generator": f.label(),
                    "constant": c, "target": target, "rel_error": rel,
                }));
            }
        }
    }
    let pass = max_rel < scale.constant_rel_tol;
    Ok(CriterionOutcome {
        id: 1,
        name: "elliptical-normalizing-constant".into(),
        pass,
        details: json!({
            "cases": cases,
            "max_rel_error": max_rel,
            "tolerance": scale.constant_rel_tol,
        }),
    })
}

// ------------------------------------------------------------ criterion 2 --

/// Direction density on the circle: the closed form c(uᵀΣ₀⁻¹u)^{−n/2}
/// integrates to one, and the sampled directions of 10⁵ model draws pass a
/// chi-square goodness-of-fit against it.
pub fn criterion_02(seed: u64, scale: &Scale, threads: usize) -> Result<CriterionOutcome> {
    let n = 2usize;
    let sigma0 = PosDefMatrix::from_diagonal(&[4.0, 1.0])?;
    let v = v_elliptical(sigma0.clone());

    // Normalization: quadrature of v(u)^{−n} over the circle against the
    // closed-form mass ω_n √det Σ₀.
    let mass = sphere_integral(n, |u| v.eval(u).powi(-(n as i32)), &quad())?.value;
    let closed_mass = sphere_surface_area(n)? * sigma0.det().sqrt();
    let mass_rel = ((mass - closed_mass) / closed_mass).abs();
    let c = 1.0 / closed_mass;

    // Expected arc probabilities of the closed form.
    let bins = scale.direction_bins;
    let width = 2.0 * std::f64::consts::PI / bins as f64;
    let mut probs = Vec::with_capacity(bins);
    for j in 0..bins {
        let lo = -std::f64::consts::PI + j as f64 * width;
        let arc = integrate(
            |theta| {
                let u = DVector::from_vec(vec![theta.cos(), theta.sin()]);
                c * v.eval(&u).powi(-(n as i32))
            },
            lo,
            lo + width,
            &quad(),
        )?
        .value;
        probs.push(arc);
    }
    let psum: f64 = probs.iter().sum();
    for p in &mut probs {
        *p /= psum;
    }

    // Sampled directions from the full model pipeline.
    let params = VSphericalParams::new(DVector::zeros(n), 1.0)?;
    let f = builtin("gaussian", n)?.normalized_for(&v, n, &quad())?;
    let (points, _) = sample_points(scale.direction_draws, &params, &v, &f, derive_seed(seed, 20), threads)?;
    let mut counts = vec![0u64; bins];
    for x in &points {
        let theta = x[1].atan2(x[0]);
        let mut idx = ((theta + std::f64::consts::PI) / width) as usize;
        if idx >= bins {
            idx = bins - 1;
        }
        counts[idx] += 1;
    }
    let gof = chi_square_gof(&counts, &probs)?;

    let pass = mass_rel < 1e-6 && (psum - 1.0).abs() < 1e-6 && gof.p_value > scale.level;
    Ok(CriterionOutcome {
        id: 2,
        name: "direction-density".into(),
        pass,
        details: json!({
            "mass_quadrature": mass,
            "mass_closed_form": closed_mass,
            "mass_rel_error": mass_rel,
            "arc_prob_sum": psum,
            "draws": scale.direction_draws,
            "bins": bins,
            "gof": gof,
            "level": scale.level,
        }),
    })
}

// ------------------------------------------------------------ criterion 3 --

/// One generator-pair robustness comparison, shared by criteria 3 and 4.
fn pair_report(
    model_label: &str,
    stat_label: &str,
    invariance: InvarianceClass,
    precheck: Option<f64>,
    a: (String, Vec<DVector<f64>>),
    b: (String, Vec<DVector<f64>>),
    permutations: usize,
    level: f64,
    seed: u64,
    threads: usize,
) -> Result<RobustnessReport> {
    let cfg = RobustnessConfig { permutations, level, seed, threads };
    null_robustness_test(model_label, stat_label, invariance, precheck, &[a, b], &cfg)
}

fn summarize(report: &RobustnessReport) -> Value {
    json!({
        "model": report.model,
        "statistic": report.statistic,
        "generator_a": report.comparisons[0].generator_a,
        "generator_b": report.comparisons[0].generator_b,
        "energy_statistic": report.comparisons[0].statistic,
        "p_value": report.comparisons[0].p_value,
        "pass": report.all_pass,
    })
}

/// Null robustness of the cross-section statistic across generator pairs on
/// all three models, plus a raw-observation negative control per model.
pub fn criterion_03(seed: u64, scale: &Scale, threads: usize) -> Result<CriterionOutcome> {
    let others = ["exp-power-q1", "exp-power-q4", "student-d3"];
    let mut reports = Vec::new();
    let mut all_pass = true;

    // v-spherical, n = 3, elliptical v.
    {
        let n = 3usize;
        let sigma0 = PosDefMatrix::from_diagonal(&[4.0, 1.0, 1.0])?;
        let v = v_elliptical(sigma0);
        let params = VSphericalParams::new(DVector::zeros(n), 1.0)?;
        let stat = vspherical_statistic("cross-section", &v, None)?;
        let precheck = invariance_precheck(
            &star_model(&v, n),
            &ginv_core::vspherical::framework_hooks(n),
            &stat,
            200,
            1e-8,
            derive_seed(seed, 30),
        )?;
        let draw = |label: &str, s: u64| -> Result<Vec<DVector<f64>>> {
            let f = builtin(label, n)?.normalized_for(&v, n, &quad())?;
            let (pts, _) = sample_points(scale.robustness_draws, &params, &v, &f, s, threads)?;
            apply_statistic(&stat, &pts)
        };
        let base = draw("gaussian", derive_seed(seed, 31))?;
        for (i, other) in others.iter().enumerate() {
            let alt = draw(other, derive_seed(seed, 32 + i as u64))?;
            let r = pair_report(
                "vspherical",
                "cross-section",
                InvarianceClass::Invariant,
                Some(precheck),
                ("gaussian".into(), base.clone()),
                (other.to_string(), alt),
                scale.permutations,
                scale.level,
                derive_seed(seed, 300 + i as u64),
                threads,
            )?;
            all_pass &= r.all_pass;
            reports.push(summarize(&r));
        }
        // Negative control: the raw observation must be generator-visible.
        let raw = vspherical_statistic("raw", &v, None)?;
        let draw_raw = |label: &str, s: u64| -> Result<Vec<DVector<f64>>> {
            let f = builtin(label, n)?.normalized_for(&v, n, &quad())?;
            let (pts, _) = sample_points(scale.negative_draws, &params, &v, &f, s, threads)?;
            apply_statistic(&raw, &pts)
        };
        let r = pair_report(
            "vspherical",
            "raw",
            InvarianceClass::Unrestricted,
            None,
            ("gaussian".into(), draw_raw("gaussian", derive_seed(seed, 38))?),
            ("student-d3".into(), draw_raw("student-d3", derive_seed(seed, 39))?),
            scale.permutations,
            scale.level,
            derive_seed(seed, 350),
            threads,
        )?;
        all_pass &= r.all_pass;
        reports.push(summarize(&r));
    }

    // Affine shape, (n, k) = (4, 2).
    {
        let (n, k) = (4usize, 2usize);
        let sigma0 = PosDefMatrix::identity(n);
        let params = MatrixModelParams::new(DMatrix::zeros(n, k), DMatrix::identity(k, k))?;
        let stat = crate::models::affine_statistic("configuration")?;
        let precheck = invariance_precheck(
            &affine_model(&sigma0, n, k)?,
            &ginv_core::affine_shape::framework_hooks(n, k),
            &stat,
            200,
            1e-8,
            derive_seed(seed, 40),
        )?;
        let draw = |label: &str, s: u64, count: usize, st: &StatisticSpec<DMatrix<f64>>| -> Result<Vec<DVector<f64>>> {
            let profile = TraceProfile::builtin(label, n * k)?;
            let (figs, _) = sample_matrix_figures(count, &params, &sigma0, &profile, s, threads)?;
            apply_statistic(st, &figs)
        };
        let base = draw("gaussian", derive_seed(seed, 41), scale.robustness_draws, &stat)?;
        for (i, other) in others.iter().enumerate() {
            let alt = draw(other, derive_seed(seed, 42 + i as u64), scale.robustness_draws, &stat)?;
            let r = pair_report(
                "affine-shape",
                "configuration",
                InvarianceClass::Invariant,
                Some(precheck),
                ("gaussian".into(), base.clone()),
                (other.to_string(), alt),
                scale.permutations,
                scale.level,
                derive_seed(seed, 310 + i as u64),
                threads,
            )?;
            all_pass &= r.all_pass;
            reports.push(summarize(&r));
        }
        let raw = crate::models::affine_statistic("raw")?;
        let r = pair_report(
            "affine-shape",
            "raw",
            InvarianceClass::Unrestricted,
            None,
            ("gaussian".into(), draw("gaussian", derive_seed(seed, 48), scale.negative_draws, &raw)?),
            ("student-d3".into(), draw("student-d3", derive_seed(seed, 49), scale.negative_draws, &raw)?),
            scale.permutations,
            scale.level,
            derive_seed(seed, 351),
            threads,
        )?;
        all_pass &= r.all_pass;
        reports.push(summarize(&r));
    }

    // PCA, (n, k) = (5, 2).
    {
        let (n, k) = (5usize, 2usize);
        let lambda0 = vec![3.0, 1.0];
        let params = PcaParams::new(DMatrix::identity(k, k), 1.0)?;
        let stat = crate::models::pca_statistic("cross-section", &lambda0)?;
        let precheck = invariance_precheck(
            &pca_model(lambda0.clone(), n)?,
            &ginv_core::pca::framework_hooks(n, k),
            &stat,
            200,
            1e-8,
            derive_seed(seed, 50),
        )?;
        let draw = |label: &str, s: u64, count: usize, st: &StatisticSpec<DMatrix<f64>>| -> Result<Vec<DVector<f64>>> {
            let profile = TraceProfile::builtin(label, n * k)?;
            let (figs, _) = sample_pca_figures(count, &params, &lambda0, n, &profile, s, threads)?;
            apply_statistic(st, &figs)
        };
        let base = draw("gaussian", derive_seed(seed, 51), scale.robustness_draws, &stat)?;
        for (i, other) in others.iter().enumerate() {
            let alt = draw(other, derive_seed(seed, 52 + i as u64), scale.robustness_draws, &stat)?;
            let r = pair_report(
                "pca",
                "cross-section",
                InvarianceClass::Invariant,
                Some(precheck),
                ("gaussian".into(), base.clone()),
                (other.to_string(), alt),
                scale.permutations,
                scale.level,
                derive_seed(seed, 320 + i as u64),
                threads,
            )?;
            all_pass &= r.all_pass;
            reports.push(summarize(&r));
        }
        let raw = crate::models::pca_statistic("raw", &lambda0)?;
        let r = pair_report(
            "pca",
            "raw",
            InvarianceClass::Unrestricted,
            None,
            ("gaussian".into(), draw("gaussian", derive_seed(seed, 58), scale.negative_draws, &raw)?),
            ("student-d3".into(), draw("student-d3", derive_seed(seed, 59), scale.negative_draws, &raw)?),
            scale.permutations,
            scale.level,
            derive_seed(seed, 352),
            threads,
        )?;
        all_pass &= r.all_pass;
        reports.push(summarize(&r));
    }

    Ok(CriterionOutcome {
        id: 3,
        name: "null-robustness".into(),
        pass: all_pass,
        details: json!({
            "draws_per_group": scale.robustness_draws,
            "negative_draws": scale.negative_draws,
            "permutations": scale.permutations,
            "level": scale.level,
            "comparisons": reports,
        }),
    })
}

// ------------------------------------------------------------ criterion 4 --

/// Residual-direction robustness: with a fixed regression design and
/// arbitrary fixed (β, σ), the residual direction has the same law under
/// different generators.
pub fn criterion_04(seed: u64, scale: &Scale, threads: usize) -> Result<CriterionOutcome> {
    let n = 5usize;
    let design = default_design(n); // intercept + centered trend, k = 2
    let beta = DVector::from_vec(vec![1.5, -0.7]);
    let sigma = 2.0;
    let mu = &design * &beta;
    let v = v_elliptical(PosDefMatrix::identity(n));
    let params = VSphericalParams::new(mu, sigma)?;
    let stat = vspherical_statistic("residual-direction", &v, Some(design))?;
    let precheck = invariance_precheck(
        &star_model(&v, n),
        &ginv_core::vspherical::framework_hooks(n),
        &stat,
        200,
        1e-8,
        derive_seed(seed, 60),
    )?;
    let draw = |label: &str, s: u64| -> Result<Vec<DVector<f64>>> {
        let f = builtin(label, n)?.normalized_for(&v, n, &quad())?;
        let (pts, _) = sample_points(scale.residual_draws, &params, &v, &f, s, threads)?;
        apply_statistic(&stat, &pts)
    };
    let report = pair_report(
        "vspherical-regression",
        "residual-direction",
        InvarianceClass::Invariant,
        Some(precheck),
        ("gaussian".into(), draw("gaussian", derive_seed(seed, 61))?),
        ("student-d3".into(), draw("student-d3", derive_seed(seed, 62))?),
        scale.permutations,
        scale.level,
        derive_seed(seed, 360),
        threads,
    )?;
    Ok(CriterionOutcome {
        id: 4,
        name: "residual-direction-robustness".into(),
        pass: report.all_pass,
        details: json!({
            "n": n,
            "beta": [1.5, -0.7],
            "sigma": sigma,
            "draws_per_group": scale.residual_draws,
            "comparison": summarize(&report),
            "precheck_worst_deviation": report.precheck_worst_deviation,
        }),
    })
}

// ------------------------------------------------------------ criterion 5 --

/// Marginal equivalence of the v-spherical scale model over a Latin
/// hypercube (x, μ) grid for multiplier exponents a ∈ {0, 1}.
pub fn criterion_05(seed: u64, scale: &Scale, _threads: usize) -> Result<CriterionOutcome> {
    let n = 2usize;
    let sigma0 = PosDefMatrix::from_diagonal(&[4.0, 1.0])?;
    let v = v_elliptical(sigma0);
    let model = star_model(&v, n);
    let gens: Vec<_> = builtin_set(n)?
        .into_iter()
        .take(scale.equivalence_generators)
        .map(|f| Ok(f.normalized_for(&v, n, &quad())?.as_orbital()))
        .collect::<Result<Vec<_>>>()?;

    let lo = [-2.0, -2.0, -1.0, -1.0];
    let hi = [2.0, 2.0, 1.0, 1.0];
    let design = ginv_core::analysis::latin_hypercube(
        2 * n,
        scale.equivalence_grid,
        &lo,
        &hi,
        derive_seed(seed, 70),
    )?;
    let grid: Vec<(DVector<f64>, DVector<f64>)> = design
        .into_iter()
        .map(|row| (DVector::from_vec(row[..n].to_vec()), DVector::from_vec(row[n..].to_vec())))
        .filter(|(x, mu)| (x - mu).norm() > 1e-3)
        .collect();

    let cfg = EquivalenceConfig { quad: quad(), tolerance: 1e-4, integrability_margin: 1e-3 };
    let mut per_exponent = Vec::new();
    let mut pass = true;
    for a in [0.0f64, 1.0] {
        let report = marginal_equivalence_check(&model, &gens, &Multiplier::power(a), &grid, &cfg)?;
        pass &= report.pass;
        per_exponent.push(json!({
            "exponent": a,
            "grid_points": report.grid_points,
            "max_spread": report.max_spread,
            "tolerance": report.tolerance,
            "pass": report.pass,
        }));
    }
    Ok(CriterionOutcome {
        id: 5,
        name: "scale-marginal-equivalence".into(),
        pass,
        details: json!({ "generators": gens.len(), "reports": per_exponent }),
    })
}

// ------------------------------------------------------------ criterion 6 --

/// Configuration density at (n, k) = (4, 2): the closed-form constant
/// matches the reciprocal Monte Carlo normalization, and the sampled
/// configuration passes a goodness-of-fit against the exact first-row
/// marginal.
pub fn criterion_06(seed: u64, scale: &Scale, threads: usize) -> Result<CriterionOutcome> {
    let (n, k) = (4usize, 2usize);
    let sigma0 = PosDefMatrix::identity(n);

    let constant = config_normalizing_constant(&sigma0, n, k)?;
    let mc = config_normalization_mc(&sigma0, n, k, scale.config_mc_samples, derive_seed(seed, 80))?;
    let implied = 1.0 / mc.value;
    let const_rel = ((constant - implied) / constant).abs();

    // Sampled V: at Σ₀ = I the first row v₁ of V has the exact marginal
    // (1/2π)(1 + ‖v₁‖²)^{−3/2}: radius CDF F(ρ) = 1 − (1+ρ²)^{−1/2}, angle
    // uniform and independent.  Bin into equiprobable radius × angle cells.
    let params = MatrixModelParams::new(DMatrix::zeros(n, k), DMatrix::identity(k, k))?;
    let profile = TraceProfile::builtin("gaussian", n * k)?;
    let (figs, _) =
        sample_matrix_figures(scale.config_draws, &params, &sigma0, &profile, derive_seed(seed, 81), threads)?;
    let (rb, ab) = (scale.config_radial_bins, scale.config_angle_bins);
    // Radius quantiles: F⁻¹(q) = √((1−q)⁻² − 1).
    let radius_edge = |q: f64| ((1.0 - q).powi(-2) - 1.0).sqrt();
    let mut counts = vec![0u64; rb * ab];
    for y in &figs {
        let vmat = configuration_coords(y)?;
        let v1 = (vmat.v()[(0, 0)], vmat.v()[(0, 1)]);
        let rho = (v1.0 * v1.0 + v1.1 * v1.1).sqrt();
        let q = 1.0 - 1.0 / (1.0 + rho * rho).sqrt();
        let mut ri = (q * rb as f64) as usize;
        if ri >= rb {
            ri = rb - 1;
        }
        let theta = v1.1.atan2(v1.0);
        let mut ai = ((theta + std::f64::consts::PI) / (2.0 * std::f64::consts::PI) * ab as f64) as usize;
        if ai >= ab {
            ai = ab - 1;
        }
        counts[ri * ab + ai] += 1;
    }
    let probs = vec![1.0 / (rb * ab) as f64; rb * ab];
    let gof = chi_square_gof(&counts, &probs)?;

    let pass = const_rel < 2e-2 && gof.p_value > scale.level;
    Ok(CriterionOutcome {
        id: 6,
        name: "configuration-density".into(),
        pass,
        details: json!({
            "closed_form_constant": constant,
            "mc_normalization": { "value": mc.value, "std_error": mc.error, "samples": scale.config_mc_samples },
            "implied_constant": implied,
            "constant_rel_error": const_rel,
            "constant_tolerance": 2e-2,
            "gof_draws": scale.config_draws,
            "gof_cells": rb * ab,
            "gof": gof,
            "level": scale.level,
            "radius_edge_q50": radius_edge(0.5),
        }),
    })
}

// ------------------------------------------------------------ criterion 7 --

/// Scalar (k = 1) posterior kernel: the closed kernel is proportional to
/// the quadrature nuisance marginal over a structured 5×5 (Y, M) grid.
pub fn criterion_07(_seed: u64, _scale: &Scale, _threads: usize) -> Result<CriterionOutcome> {
    let n = 3usize;
    let sigma0 = PosDefMatrix::from_diagonal(&[2.0, 1.0, 0.5])?;
    let v = v_elliptical(sigma0.clone());
    let model = affine_scalar_model(&sigma0);
    let gens: Vec<_> = [builtin("gaussian", n)?, builtin("student-d3", n)?]
        .into_iter()
        .map(|f| Ok(f.normalized_for(&v, n, &quad())?.as_orbital()))
        .collect::<Result<Vec<_>>>()?;

    let mut grid = Vec::with_capacity(25);
    for i in 0..5 {
        let y = DVector::from_vec(vec![1.0 + 0.5 * i as f64, -1.0 + 0.4 * i as f64, 0.3]);
        for j in 0..5 {
            let m = DVector::from_vec(vec![
                -0.4 + 0.2 * j as f64,
                0.1 * j as f64,
                -0.2 + 0.1 * j as f64,
            ]);
            grid.push((y.clone(), m));
        }
    }

    let cfg = EquivalenceConfig { quad: quad(), tolerance: 1e-3, integrability_margin: 1e-3 };
    let report = marginal_equivalence_check(&model, &gens, &Multiplier::power(0.0), &grid, &cfg)?;
    Ok(CriterionOutcome {
        id: 7,
        name: "scalar-posterior-kernel".into(),
        pass: report.pass,
        details: json!({
            "grid_points": report.grid_points,
            "generators": report.generators.len(),
            "max_spread": report.max_spread,
            "tolerance": report.tolerance,
        }),
    })
}

// ------------------------------------------------------------ criterion 8 --

/// PCA frame kernel: proportionality to the numeric scale marginal over a
/// 4-point (X, P) grid for two generators, plus exact sign-coset invariance.
pub fn criterion_08(seed: u64, _scale: &Scale, _threads: usize) -> Result<CriterionOutcome> {
    let (n, k) = (4usize, 2usize);
    let lambda0 = vec![3.0, 1.0];
    let model = pca_model(lambda0.clone(), n)?;
    let gens: Vec<_> = ["gaussian", "student-d3"]
        .iter()
        .map(|l| pca_generator(&TraceProfile::builtin(l, n * k)?, &lambda0, n, &quad()))
        .collect::<Result<Vec<_>>>()?;

    let design = ginv_core::analysis::latin_hypercube(
        n * k,
        4,
        &vec![-2.0; n * k],
        &vec![2.0; n * k],
        derive_seed(seed, 90),
    )?;
    let mut frame_rng = stream(derive_seed(seed, 91), 0);
    let grid: Vec<(DMatrix<f64>, DMatrix<f64>)> = design
        .into_iter()
        .map(|row| {
            let x = DMatrix::from_row_slice(n, k, &row);
            let p = canonicalize_sign_coset(&haar_orthogonal(k, &mut frame_rng));
            (x, p)
        })
        .collect();

    let cfg = EquivalenceConfig { quad: quad(), tolerance: 1e-4, integrability_margin: 1e-3 };
    let report = marginal_equivalence_check(&model, &gens, &Multiplier::power(0.0), &grid, &cfg)?;

    // Sign-coset invariance of the kernel: exact over all 2^k flips.
    let mut max_flip_dev = 0.0f64;
    for (x, p) in &grid {
        let base = pca_marginal_kernel(x, p, &lambda0, 0.0)?;
        for mask in 0..(1usize << k) {
            let mut flipped = p.clone();
            for col in 0..k {
                if mask >> col & 1 == 1 {
                    for r in 0..k {
                        flipped[(r, col)] = -flipped[(r, col)];
                    }
                }
            }
            let val = pca_marginal_kernel(x, &flipped, &lambda0, 0.0)?;
            max_flip_dev = max_flip_dev.max(((val - base) / base).abs());
        }
    }

    let pass = report.pass && max_flip_dev < 1e-12;
    Ok(CriterionOutcome {
        id: 8,
        name: "pca-kernel-proportionality".into(),
        pass,
        details: json!({
            "grid_points": report.grid_points,
            "max_spread": report.max_spread,
            "tolerance": report.tolerance,
            "max_sign_flip_deviation": max_flip_dev,
            "flip_tolerance": 1e-12,
        }),
    })
}

// ------------------------------------------------------------ criterion 9 --

/// Framework self-consistency: equivariance, reconstruction, maximal
/// invariance, and the multiplier laws on randomized cases for every model,
/// plus the identity between the generic orbital sampling density and each
/// model's closed-form density.
pub fn criterion_09(seed: u64, scale: &Scale, _threads: usize) -> Result<CriterionOutcome> {
    let cases = scale.framework_cases;
    let tol = 1e-10;
    let mut checks = Vec::new();
    let mut max_dev = 0.0f64;

    let mut record = |label: &str, report: ginv_core::orbital::FrameworkCheckReport| {
        let worst = report
            .max_equivariance
            .max(report.max_reconstruction)
            .max(report.max_invariance)
            .max(report.max_chi_g_law)
            .max(report.max_chi_h_law)
            .max(report.max_delta_g_law);
        max_dev = max_dev.max(worst);
        checks.push(json!({ "model": label, "cases": report.cases, "worst_deviation": worst }));
    };

    let v2 = v_elliptical(PosDefMatrix::from_diagonal(&[4.0, 1.0])?);
    record(
        "vspherical-star",
        check_framework(
            &star_model(&v2, 2),
            &ginv_core::vspherical::framework_hooks(2),
            cases,
            tol,
            derive_seed(seed, 100),
        )?,
    );
    record(
        "vspherical-direction",
        check_framework(
            &direction_model(&v2, 2),
            &ginv_core::vspherical::framework_hooks(2),
            cases,
            tol,
            derive_seed(seed, 101),
        )?,
    );
    let sigma0_42 = PosDefMatrix::identity(4);
    record(
        "affine-shape",
        check_framework(
            &affine_model(&sigma0_42, 4, 2)?,
            &ginv_core::affine_shape::framework_hooks(4, 2),
            cases,
            tol,
            derive_seed(seed, 102),
        )?,
    );
    let sigma0_s = PosDefMatrix::from_diagonal(&[2.0, 1.0, 0.5])?;
    record(
        "affine-scalar",
        check_framework(
            &affine_scalar_model(&sigma0_s),
            &ginv_core::vspherical::framework_hooks(3),
            cases,
            tol,
            derive_seed(seed, 103),
        )?,
    );
    record(
        "pca",
        check_framework(
            &pca_model(vec![3.0, 1.0], 4)?,
            &ginv_core::pca::framework_hooks(4, 2),
            cases,
            tol,
            derive_seed(seed, 104),
        )?,
    );

    // Density identities: generic orbital sampling density vs the model
    // closed forms on randomized points.
    let mut max_density_dev = 0.0f64;

    // v-spherical: star model vs σ⁻ⁿ f(v((x−μ)/σ)).
    {
        let n = 2usize;
        let v = v2.clone();
        let f = builtin("gaussian", n)?.normalized_for(&v, n, &quad())?;
        let model = star_model(&v, n);
        let forb = f.as_orbital();
        let mut rng = stream(derive_seed(seed, 105), 0);
        for _ in 0..cases {
            let draw = |rng: &mut rand_chacha::ChaCha8Rng, span: f64| {
                use rand::Rng;
                DVector::from_fn(n, |_, _| (rng.random::<f64>() - 0.5) * span)
            };
            let x = draw(&mut rng, 4.0);
            let mu = draw(&mut rng, 1.0);
            use rand::Rng;
            let sigma: f64 = 0.5 + 1.5 * rng.random::<f64>();
            if (&x - &mu).norm() < 1e-3 {
                continue;
            }
            let params = VSphericalParams::new(mu.clone(), sigma)?;
            let direct = vspherical_density(&x, &params, &v, &f)?;
            let generic =
                model.sampling_density(&x, &ParamPoint::new(mu, sigma), &forb)?;
            max_density_dev = max_density_dev.max(((generic - direct) / direct).abs());
        }
    }

    // PCA: generic density vs g^{−kn} f(r(XP)/g) closed form.
    {
        let (n, k) = (4usize, 2usize);
        let lambda0 = vec![3.0, 1.0];
        let profile = TraceProfile::builtin("gaussian", n * k)?;
        let f = pca_generator(&profile, &lambda0, n, &quad())?;
        let model = pca_model(lambda0.clone(), n)?;
        let mut rng = stream(derive_seed(seed, 106), 0);
        for _ in 0..cases {
            use rand::Rng;
            let x = DMatrix::from_fn(n, k, |_, _| (rng.random::<f64>() - 0.5) * 4.0);
            if x.norm() < 1e-6 {
                continue;
            }
            let p = canonicalize_sign_coset(&haar_orthogonal(k, &mut rng));
            let g: f64 = 0.5 + 1.5 * rng.random::<f64>();
            let params = PcaParams::new(p.clone(), g)?;
            let direct = pca_sampling_density(&x, &params, &lambda0, &f)?;
            let generic = model.sampling_density(&x, &ParamPoint::new(p, g), &f)?;
            max_density_dev = max_density_dev.max(((generic - direct) / direct).abs());
        }
    }

    // Affine shape with the Gaussian profile vs the matrix-normal density
    // N(M, (EEᵀ) ⊗ Σ₀) — an oracle that shares no code with the generic
    // formula.  The generator carries the exact Gaussian normalization so
    // the comparison is purely structural; quadrature-normalized generators
    // are validated separately by the normalizing-constant criteria.
    {
        let (n, k) = (4usize, 2usize);
        let sigma0 = PosDefMatrix::identity(n);
        let c = (2.0 * std::f64::consts::PI).powf(-((n * k) as f64) / 2.0);
        let fgen =
            ginv_core::orbital::DensityGenerator::new("gaussian-exact", move |a: &DMatrix<f64>| {
                c * (-0.5 * a.iter().map(|&x| x * x).sum::<f64>()).exp()
            });
        let model = affine_model(&sigma0, n, k)?;
        let mut rng = stream(derive_seed(seed, 107), 0);
        for _ in 0..cases {
            use rand::Rng;
            let y = DMatrix::from_fn(n, k, |_, _| (rng.random::<f64>() - 0.5) * 4.0);
            let m_loc = DMatrix::from_fn(n, k, |_, _| (rng.random::<f64>() - 0.5) * 1.0);
            let e = DMatrix::from_fn(k, k, |i, j| {
                (if i == j { 1.0 } else { 0.0 }) + 0.4 * (rng.random::<f64>() - 0.5)
            });
            if e.determinant().abs() < 0.2 {
                continue;
            }
            let centered = &y - &m_loc;
            // Stay clear of the excluded set: a near-singular leading block
            // sends the intermediate orbit coordinates to ~1/det and the
            // rounding error back through the exponential.
            if centered.view((0, 0), (k, k)).determinant().abs() < 0.3 {
                continue;
            }
            let ee = &e * e.transpose();
            let ee_inv = ee.clone().try_inverse().expect("E Eᵀ invertible");
            let tr = (ee_inv * centered.transpose() * &centered).trace();
            let direct = (2.0 * std::f64::consts::PI).powf(-((n * k) as f64) / 2.0)
                * ee.determinant().powf(-(n as f64) / 2.0)
                * (-0.5 * tr).exp();
            let generic =
                model.sampling_density(&y, &ParamPoint::new(m_loc, e), &fgen)?;
            max_density_dev = max_density_dev.max(((generic - direct) / direct).abs());
        }
    }

    let pass = max_dev < tol && max_density_dev < tol;
    Ok(CriterionOutcome {
        id: 9,
        name: "framework-consistency".into(),
        pass,
        details: json!({
            "cases_per_model": cases,
            "tolerance": tol,
            "framework_checks": checks,
            "max_framework_deviation": max_dev,
            "max_density_identity_deviation": max_density_dev,
        }),
    })
}

// ---------------------------------------------------------------- run_all --

/// Run criteria 1–9, print one PASS/FAIL line each, write the deterministic
/// summary artifact, and return whether every criterion passed.
pub fn run_all(ctx: &RunContext) -> Result<bool> {
    let profile = ctx.cfg.run.profile.as_deref().unwrap_or("full");
    let scale = Scale::from_label(profile)?;
    let battery: [(&str, fn(u64, &Scale, usize) -> Result<CriterionOutcome>); 9] = [
        ("elliptical-normalizing-constant", criterion_01),
        ("direction-density", criterion_02),
        ("null-robustness", criterion_03),
        ("residual-direction-robustness", criterion_04),
        ("scale-marginal-equivalence", criterion_05),
        ("configuration-density", criterion_06),
        ("scalar-posterior-kernel", criterion_07),
        ("pca-kernel-proportionality", criterion_08),
        ("framework-consistency", criterion_09),
    ];

    let mut outcomes = Vec::with_capacity(battery.len());
    let mut all_pass = true;
    for (name, f) in battery {
        let start = std::time::Instant::now();
        let outcome = f(ctx.seed, &scale, ctx.threads)?;
        eprintln!("[selftest] criterion {:02} ran in {:.1}s", outcome.id, start.elapsed().as_secs_f64());
        println!(
            "criterion {:02} {} — {}",
            outcome.id,
            if outcome.pass { "PASS" } else { "FAIL" },
            name
        );
        all_pass &= outcome.pass;
        outcomes.push(outcome);
    }

    let summary = json!({
        "profile": scale.label,
        "criteria": outcomes,
        "all_pass": all_pass,
    });
    write_json(&ctx.path("selftest_summary.json")?, &ctx.hash, ctx.seed, summary)?;
    println!("selftest: {}", if all_pass { "PASS" } else { "FAIL" });
    Ok(all_pass)
}
