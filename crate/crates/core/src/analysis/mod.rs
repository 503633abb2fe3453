//! Verification procedures for the two structural claims of the framework:
//! null robustness of invariant statistics (their law under the null does
//! not depend on the generator) and marginal equivalence (the nuisance-
//! marginalized posterior kernel is generator-free up to a constant), plus
//! a propriety diagnostic for the location posterior.

pub mod energy;
pub mod stats;

pub use energy::{energy_two_sample_test, EnergyTestResult};
pub use stats::{chi_square_gof, ks_uniform, ChiSquareGof, KsResult};

use crate::error::{Error, Result};
use crate::numerics::{integrate, integrate_radial, QuadratureSpec};
use crate::orbital::{DensityGenerator, FrameworkCheckHooks, Multiplier, OrbitalModel, ParamPoint};
use crate::rng::stream;
use nalgebra::DVector;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use std::io::Write;
use std::path::Path;

/// Schema version stamped into every report artifact.
pub const REPORT_SCHEMA: u32 = 1;

/// Whether a statistic is claimed invariant under the group action (and so
/// subject to the invariance precheck before any robustness run) or carries
/// no claim (negative controls).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InvarianceClass {
    Invariant,
    Unrestricted,
}

/// A statistic of the observation, mapped into ℝᵈ for distribution
/// comparison.
pub struct StatisticSpec<X> {
    pub label: String,
    pub eval: Box<dyn Fn(&X) -> Result<DVector<f64>> + Send + Sync>,
    pub invariance: InvarianceClass,
}

/// Check the invariance claim t(g·x) = t(x) on random (g, x) pairs drawn
/// from the model's check hooks; errors when the claim fails.
pub fn invariance_precheck<X, H, G>(
    model: &OrbitalModel<X, H, G>,
    hooks: &FrameworkCheckHooks<X, H, G>,
    stat: &StatisticSpec<X>,
    cases: usize,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    if stat.invariance != InvarianceClass::Invariant {
        return Err(Error::InvalidParameter(format!(
            "statistic '{}' carries no invariance claim to check",
            stat.label
        )));
    }
    let mut rng = stream(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let x = (hooks.sample_point)(&mut rng);
        if !model.in_domain(&x) {
            continue;
        }
        let g = (hooks.sample_g)(&mut rng);
        let gx = (model.g_action)(&g, &x);
        let t_x = (stat.eval)(&x)?;
        let t_gx = (stat.eval)(&gx)?;
        let dev = (&t_gx - &t_x).norm() / t_x.norm().max(1e-300);
        worst = worst.max(dev);
    }
    if worst > tol {
        return Err(Error::InvarianceViolation(format!(
            "statistic '{}' is not invariant under the group action of model '{}': \
             worst relative deviation {worst:.3e} > {tol:.1e}",
            stat.label, model.label
        )));
    }
    Ok(worst)
}

/// One pairwise generator comparison inside a robustness report.
#[derive(Debug, Clone, Serialize)]
pub struct RobustnessComparison {
    pub generator_a: String,
    pub generator_b: String,
    pub statistic: f64,
    pub p_value: f64,
    pub pass: bool,
}

/// Report of a null-robustness run: the invariant statistic is computed on
/// samples from several generators and each pair is compared with the
/// energy test; under the null every comparison should be non-significant.
#[derive(Debug, Clone, Serialize)]
pub struct RobustnessReport {
    pub schema: u32,
    pub model: String,
    pub statistic: String,
    pub invariance: InvarianceClass,
    pub precheck_worst_deviation: Option<f64>,
    pub draws_per_group: usize,
    pub permutations: usize,
    pub level: f64,
    pub seed: u64,
    pub comparisons: Vec<RobustnessComparison>,
    pub all_pass: bool,
}

/// Controls for a null-robustness run.
#[derive(Debug, Clone)]
pub struct RobustnessConfig {
    pub permutations: usize,
    pub level: f64,
    pub seed: u64,
    pub threads: usize,
}

impl Default for RobustnessConfig {
    fn default() -> Self {
        Self { permutations: 500, level: 0.01, seed: 0, threads: 1 }
    }
}

/// Compare the statistic's sampled law across generators, pairwise; the
/// caller supplies `(generator label, statistic values)` per generator.
/// For an `Unrestricted` statistic the pass flag inverts: a negative
/// control passes when every comparison rejects.
pub fn null_robustness_test(
    model_label: &str,
    statistic_label: &str,
    invariance: InvarianceClass,
    precheck_worst_deviation: Option<f64>,
    samples: &[(String, Vec<DVector<f64>>)],
    cfg: &RobustnessConfig,
) -> Result<RobustnessReport> {
    if samples.len() < 2 {
        return Err(Error::InvalidParameter(
            "null robustness needs at least two generators to compare".into(),
        ));
    }
    if !(cfg.level > 0.0 && cfg.level < 1.0) {
        return Err(Error::InvalidParameter(format!("level must be in (0,1), got {}", cfg.level)));
    }
    let draws = samples[0].1.len();
    let mut comparisons = Vec::new();
    let mut all_pass = true;
    for i in 0..samples.len() {
        for j in (i + 1)..samples.len() {
            let test_seed = crate::rng::derive_seed(cfg.seed, (i * samples.len() + j) as u64);
            let r = energy_two_sample_test(
                &samples[i].1,
                &samples[j].1,
                cfg.permutations,
                test_seed,
                cfg.threads,
            )?;
            let pass = match invariance {
                InvarianceClass::Invariant => r.p_value > cfg.level,
                InvarianceClass::Unrestricted => r.p_value <= cfg.level,
            };
            all_pass &= pass;
            comparisons.push(RobustnessComparison {
                generator_a: samples[i].0.clone(),
                generator_b: samples[j].0.clone(),
                statistic: r.statistic,
                p_value: r.p_value,
                pass,
            });
        }
    }
    Ok(RobustnessReport {
        schema: REPORT_SCHEMA,
        model: model_label.into(),
        statistic: statistic_label.into(),
        invariance,
        precheck_worst_deviation,
        draws_per_group: draws,
        permutations: cfg.permutations,
        level: cfg.level,
        seed: cfg.seed,
        comparisons,
        all_pass,
    })
}

impl RobustnessReport {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!(
            "# schema={} model={} statistic={} draws_per_group={} permutations={} level={} seed={}\n",
            self.schema,
            self.model,
            self.statistic,
            self.draws_per_group,
            self.permutations,
            self.level,
            self.seed
        );
        out.push_str("generator_a,generator_b,energy_statistic,p_value,pass\n");
        for c in &self.comparisons {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.generator_a, c.generator_b, c.statistic, c.p_value, c.pass
            ));
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json_string()?.as_bytes())?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }
}

/// Integrability precheck for a relatively invariant scale prior: the
/// marginalization integral ∫ χ_G(g) f(g) / m(g) · μ_G(dg) over ℝ_{>0} must
/// converge at both ends.  The tails are assessed by the least-squares slope
/// of ln ψ against ln g (ψ the integrand against dg/g); the lower tail needs
/// slope ≥ +margin, the upper tail slope ≤ −margin.
pub fn scale_prior_integrability(
    f: &DensityGenerator<f64>,
    chi_g: &dyn Fn(f64) -> f64,
    m: &Multiplier<f64>,
    margin: f64,
) -> Result<(f64, f64)> {
    let psi = |g: f64| chi_g(g) * f.eval(&g) / m.eval(&g);
    let slope = |gs: &[f64]| -> Option<f64> {
        let pts: Vec<(f64, f64)> = gs
            .iter()
            .filter_map(|&g| {
                let v = psi(g);
                (v > 0.0 && v.is_finite()).then(|| (g.ln(), v.ln()))
            })
            .collect();
        if pts.len() < 3 {
            return None;
        }
        let n = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        Some((n * sxy - sx * sy) / (n * sxx - sx * sx))
    };

    let lower: Vec<f64> = (0..25).map(|i| 1e-6 * 10f64.powf(i as f64 * 3.0 / 24.0)).collect();
    let upper: Vec<f64> = (0..25).map(|i| 1e3 * 10f64.powf(i as f64 * 3.0 / 24.0)).collect();

    // An underflowed-to-zero tail decays faster than any power: treat the
    // slope as unboundedly favorable.
    let lo_slope = slope(&lower).unwrap_or(f64::INFINITY);
    let hi_slope = slope(&upper).unwrap_or(f64::NEG_INFINITY);

    if lo_slope < margin {
        return Err(Error::NotIntegrable(format!(
            "prior m = {} with generator '{}': integrand grows too fast as g → 0 \
             (lower tail exponent {lo_slope:.4} < {margin:.1e})",
            m.label(),
            f.label()
        )));
    }
    if hi_slope > -margin {
        return Err(Error::NotIntegrable(format!(
            "prior m = {} with generator '{}': integrand decays too slowly as g → ∞ \
             (upper tail exponent {hi_slope:.4} > -{margin:.1e})",
            m.label(),
            f.label()
        )));
    }
    Ok((lo_slope, hi_slope))
}

/// Per-generator outcome of a marginal-equivalence run.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceGenerator {
    pub generator: String,
    /// ln(numeric marginal / kernel) at each grid point.
    pub log_offsets: Vec<f64>,
    /// max − min of the log offsets; zero means exact proportionality.
    pub spread: f64,
    pub lower_tail_exponent: f64,
    pub upper_tail_exponent: f64,
}

/// Report of a marginal-equivalence run: for each admissible generator the
/// nuisance-marginalized density is integrated numerically on a grid of
/// (x, h) points and compared against the closed-form kernel; equivalence
/// holds when the log ratio is constant over the grid.
#[derive(Debug, Clone, Serialize)]
pub struct EquivalenceReport {
    pub schema: u32,
    pub model: String,
    pub multiplier: String,
    pub grid_points: usize,
    pub tolerance: f64,
    pub generators: Vec<EquivalenceGenerator>,
    pub max_spread: f64,
    pub pass: bool,
}

impl EquivalenceReport {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = format!(
            "# schema={} model={} multiplier={} grid_points={} tolerance={}\n",
            self.schema, self.model, self.multiplier, self.grid_points, self.tolerance
        );
        out.push_str("generator,point_index,log_offset,spread,lower_tail_exponent,upper_tail_exponent\n");
        for g in &self.generators {
            for (i, off) in g.log_offsets.iter().enumerate() {
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    g.generator, i, off, g.spread, g.lower_tail_exponent, g.upper_tail_exponent
                ));
            }
        }
        out
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json_string()?.as_bytes())?;
        Ok(())
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_csv_string().as_bytes())?;
        Ok(())
    }
}

/// Controls for a marginal-equivalence run.
#[derive(Debug, Clone)]
pub struct EquivalenceConfig {
    pub quad: QuadratureSpec,
    /// Maximum allowed spread of the per-generator log offset.
    pub tolerance: f64,
    /// Margin for the tail-exponent integrability precheck.
    pub integrability_margin: f64,
}

impl Default for EquivalenceConfig {
    fn default() -> Self {
        Self {
            quad: QuadratureSpec::default(),
            tolerance: 1e-4,
            integrability_margin: 1e-3,
        }
    }
}

/// Verify marginal equivalence for a scale-group model: for every generator
/// the numeric marginal ∫ p(x | h, g; f) m(g) μ_G(dg) must be proportional
/// to the model's closed-form kernel, with a proportionality constant that
/// may depend on the generator but not on the grid point.
pub fn marginal_equivalence_check<X, H: Clone>(
    model: &OrbitalModel<X, H, f64>,
    generators: &[DensityGenerator<f64>],
    m: &Multiplier<f64>,
    grid: &[(X, H)],
    cfg: &EquivalenceConfig,
) -> Result<EquivalenceReport> {
    if generators.is_empty() {
        return Err(Error::InvalidParameter("no generators supplied".into()));
    }
    if grid.len() < 2 {
        return Err(Error::InvalidParameter(
            "marginal equivalence needs at least two grid points".into(),
        ));
    }
    let mut gens = Vec::with_capacity(generators.len());
    let mut max_spread = 0.0f64;
    for f in generators {
        let (lo, hi) = scale_prior_integrability(f, &|g| (model.chi_g)(&g), m, cfg.integrability_margin)?;
        let mut offsets = Vec::with_capacity(grid.len());
        for (x, h) in grid {
            let kernel = model.marginal_kernel(x, h, m)?;
            if !(kernel > 0.0) || !kernel.is_finite() {
                return Err(Error::Domain(format!(
                    "marginal kernel not positive finite at a grid point: {kernel}"
                )));
            }
            let marginal = integrate_radial(
                |g| {
                    let theta = ParamPoint::new(h.clone(), g);
                    match model.sampling_density(x, &theta, f) {
                        Ok(p) => p * m.eval(&g) / g,
                        Err(_) => f64::NAN,
                    }
                },
                1,
                &cfg.quad,
            )?
            .value;
            if !(marginal > 0.0) || !marginal.is_finite() {
                return Err(Error::Domain(format!(
                    "numeric marginal not positive finite at a grid point: {marginal}"
                )));
            }
            offsets.push(marginal.ln() - kernel.ln());
        }
        let max = offsets.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = offsets.iter().cloned().fold(f64::INFINITY, f64::min);
        let spread = max - min;
        max_spread = max_spread.max(spread);
        gens.push(EquivalenceGenerator {
            generator: f.label().to_string(),
            log_offsets: offsets,
            spread,
            lower_tail_exponent: lo,
            upper_tail_exponent: hi,
        });
    }
    Ok(EquivalenceReport {
        schema: REPORT_SCHEMA,
        model: model.label.clone(),
        multiplier: m.label().to_string(),
        grid_points: grid.len(),
        tolerance: cfg.tolerance,
        generators: gens,
        max_spread,
        pass: max_spread < cfg.tolerance,
    })
}

/// Convergence assessment of one tail of an improper-prior integral.
#[derive(Debug, Clone, Copy, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum TailAssessment {
    /// Shell masses decay geometrically; `value` includes a tail bound.
    Converged { value: f64, last_ratio: f64 },
    /// Shell masses fail to decay; the integral diverges in this direction.
    Diverged { last_ratio: f64 },
}

/// Report of a posterior-propriety diagnostic for the location parameter
/// with H = ℝⁿ: the marginal kernel is integrated over μ in polar shells
/// around the observation, and each direction (μ → x and ‖μ‖ → ∞) is
/// classified by the decay of consecutive shell masses.
#[derive(Debug, Clone, Serialize)]
pub struct ProprietyReport {
    pub schema: u32,
    pub model: String,
    pub multiplier: String,
    pub dim: usize,
    pub shells_per_side: usize,
    pub inner: TailAssessment,
    pub outer: TailAssessment,
    /// True only if both directions converge.
    pub proper: bool,
}

impl ProprietyReport {
    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(self.to_json_string()?.as_bytes())?;
        Ok(())
    }
}

/// Ratio above which shell masses are considered non-decaying.
const SHELL_DECAY_CUTOFF: f64 = 0.95;

/// Diagnose propriety of the location posterior ∫_{ℝⁿ} K(x, μ) dμ for a
/// kernel evaluated through the supplied closure (μ ↦ kernel value).  The
/// integral is decomposed into log-radius shells ‖μ − x‖ ∈ [eʲ, eʲ⁺¹]
/// (computed by polar quadrature for n ≤ 3); a side converges when its
/// shell masses decay geometrically and diverges when they do not.
pub fn posterior_propriety_check(
    x: &DVector<f64>,
    kernel: &(dyn Fn(&DVector<f64>) -> Result<f64> + Sync),
    model_label: &str,
    multiplier_label: &str,
    shells_per_side: usize,
    quad: &QuadratureSpec,
) -> Result<ProprietyReport> {
    let n = x.len();
    if !(1..=3).contains(&n) {
        return Err(Error::Domain(format!(
            "propriety diagnostic uses polar quadrature and supports n ≤ 3, got n = {n}"
        )));
    }
    if shells_per_side < 4 {
        return Err(Error::InvalidParameter("need at least 4 shells per side".into()));
    }

    // Mass of the shell ρ ∈ [e^a, e^b] around x, in polar coordinates.
    let shell_mass = |a: f64, b: f64| -> Result<f64> {
        let angular = |rho: f64| -> Result<f64> {
            let surf = crate::vspherical::sphere_integral(
                n,
                |u| {
                    let mu = x + u * rho;
                    kernel(&mu).unwrap_or(f64::NAN)
                },
                quad,
            )?;
            Ok(surf.value)
        };
        let est = integrate(
            |t| {
                // substitution ρ = e^t gives dμ-shells uniform width in t
                let rho = t.exp();
                match angular(rho) {
                    Ok(s) => s * rho.powi(n as i32),
                    Err(_) => f64::NAN,
                }
            },
            a,
            b,
            quad,
        )?;
        Ok(est.value)
    };

    // Shells tile [e^{-J}, e^{J}] in log-radius; the j-th inner and outer
    // shells are [e^{-(j+1)}, e^{-j}] and [e^{j}, e^{j+1}].
    let mut inner_masses = Vec::with_capacity(shells_per_side);
    let mut outer_masses = Vec::with_capacity(shells_per_side);
    for j in 0..shells_per_side {
        inner_masses.push(shell_mass(-(j as f64 + 1.0), -(j as f64))?);
        outer_masses.push(shell_mass(j as f64, j as f64 + 1.0)?);
    }

    let assess = |masses: &[f64]| -> TailAssessment {
        let k = masses.len();
        let last_ratio = masses[k - 1] / masses[k - 2].max(1e-300);
        let tail_decays = masses
            .windows(2)
            .rev()
            .take(3)
            .all(|w| w[1] < SHELL_DECAY_CUTOFF * w[0].max(1e-300) || w[1] < 1e-14 * masses[0].max(1e-300));
        if tail_decays {
            let sum: f64 = masses.iter().sum();
            let r = last_ratio.min(SHELL_DECAY_CUTOFF);
            let tail_bound = masses[k - 1] * r / (1.0 - r);
            TailAssessment::Converged { value: sum + tail_bound, last_ratio }
        } else {
            TailAssessment::Diverged { last_ratio }
        }
    };

    let inner = assess(&inner_masses);
    let outer = assess(&outer_masses);
    let proper = matches!(inner, TailAssessment::Converged { .. })
        && matches!(outer, TailAssessment::Converged { .. });
    Ok(ProprietyReport {
        schema: REPORT_SCHEMA,
        model: model_label.into(),
        multiplier: multiplier_label.into(),
        dim: n,
        shells_per_side,
        inner,
        outer,
        proper,
    })
}

/// A Latin hypercube design: `points` rows in [lo, hi]^dims with one point
/// per axis stratum in every dimension.
pub fn latin_hypercube(
    dims: usize,
    points: usize,
    lo: &[f64],
    hi: &[f64],
    seed: u64,
) -> Result<Vec<Vec<f64>>> {
    if dims == 0 || points == 0 {
        return Err(Error::InvalidParameter("need at least one dimension and one point".into()));
    }
    if lo.len() != dims || hi.len() != dims {
        return Err(Error::DimensionMismatch(format!(
            "bounds have lengths {} and {}, expected {dims}",
            lo.len(),
            hi.len()
        )));
    }
    for d in 0..dims {
        if !(lo[d] < hi[d]) {
            return Err(Error::InvalidParameter(format!(
                "bounds for dimension {d} are not ordered: [{}, {}]",
                lo[d], hi[d]
            )));
        }
    }
    let mut rng = stream(seed, 0);
    let mut design = vec![vec![0.0; dims]; points];
    for d in 0..dims {
        let mut cells: Vec<usize> = (0..points).collect();
        cells.shuffle(&mut rng);
        for (row, &cell) in cells.iter().enumerate() {
            let u: f64 = rng.random();
            design[row][d] = lo[d] + (cell as f64 + u) / points as f64 * (hi[d] - lo[d]);
        }
    }
    Ok(design)
}
