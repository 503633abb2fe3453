//! Built-in radial density generators and the normalization contract.
//!
//! Generators are stored as bare positive functions of the radius.  The
//! normalized form divides by (∫₀^∞ f(r) rⁿ⁻¹ dr) × (cross-section mass of
//! v), so that the model density σ⁻ⁿ f(v(σ⁻¹(x−μ))) integrates to one; the
//! cross-section mass is obtained by sphere quadrature in low dimension (or
//! the elliptical closed form), keeping the two factors independently
//! checkable.

use crate::error::{Error, Result};
use crate::numerics::{integrate_radial, sphere_surface_area, Estimate, QuadratureSpec};
use crate::vspherical::direction::sphere_integral;
use crate::vspherical::vfn::VFunction;
use std::sync::Arc;

/// A radial density generator f: ℝ_{>0} → ℝ_{≥0}.
#[derive(Clone)]
pub struct RadialGenerator {
    eval: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
    normalized: bool,
}

impl RadialGenerator {
    /// Wrap an arbitrary nonnegative radial function.
    pub fn new(label: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        RadialGenerator { eval: Arc::new(eval), label: label.into(), normalized: false }
    }

    pub fn eval(&self, r: f64) -> f64 {
        (self.eval)(r)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Whether `normalized_for` has been applied.
    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    /// View as an orbital-model density generator over the scalar group.
    pub fn as_orbital(&self) -> crate::orbital::DensityGenerator<f64> {
        let f = Arc::clone(&self.eval);
        crate::orbital::DensityGenerator::new(self.label.clone(), move |r: &f64| f(*r))
    }

    /// Divide by the normalization ∫f(r)rⁿ⁻¹dr × mass_v so the resulting
    /// generator satisfies the model's integrate-to-one contract for the
    /// given v-function and dimension.
    pub fn normalized_for(&self, v: &VFunction, n: usize, spec: &QuadratureSpec) -> Result<Self> {
        let radial = integrate_radial(|r| self.eval(r) * r.powi(n as i32 - 1), 1, spec)?.value;
        let mass = cross_section_mass(v, n, spec)?;
        let scale = radial * mass.value;
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::Domain(format!(
                "normalization for generator '{}' is not positive finite: {scale}",
                self.label
            )));
        }
        let f = Arc::clone(&self.eval);
        Ok(RadialGenerator {
            eval: Arc::new(move |r: f64| f(r) / scale),
            label: self.label.clone(),
            normalized: true,
        })
    }
}

impl std::fmt::Debug for RadialGenerator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RadialGenerator")
            .field("label", &self.label)
            .field("normalized", &self.normalized)
            .finish()
    }
}

/// Gaussian kernel e^{−r²/2}.
pub fn gaussian() -> RadialGenerator {
    RadialGenerator::new("gaussian", |r| (-0.5 * r * r).exp())
}

/// Exponential-power kernel e^{−r^q/q}, q > 0.
pub fn exp_power(q: f64) -> Result<RadialGenerator> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "exponential-power shape must be positive, got {q}"
        )));
    }
    Ok(RadialGenerator::new(format!("exp-power-q{q}"), move |r| (-r.powf(q) / q).exp()))
}

/// Student-type kernel (1 + r²/d)^{−(n+d)/2}; the decay couples to the
/// ambient dimension n so the resulting family has d-like tails.
pub fn student(n: usize, d: f64) -> Result<RadialGenerator> {
    if n == 0 {
        return Err(Error::InvalidParameter("student generator needs dimension n ≥ 1".into()));
    }
    if !(d > 0.0) || !d.is_finite() {
        return Err(Error::InvalidParameter(format!(
            "student tail parameter must be positive, got {d}"
        )));
    }
    let expo = -0.5 * (n as f64 + d);
    Ok(RadialGenerator::new(format!("student-d{d}"), move |r| (1.0 + r * r / d).powf(expo)))
}

/// The built-in generator set used throughout the test batteries: Gaussian,
/// exponential-power with q ∈ {1, 4}, and Student with d = 3.
pub fn builtin_set(n: usize) -> Result<Vec<RadialGenerator>> {
    Ok(vec![gaussian(), exp_power(1.0)?, exp_power(4.0)?, student(n, 3.0)?])
}

/// Look a built-in generator up by label (as accepted on the command line).
pub fn builtin(label: &str, n: usize) -> Result<RadialGenerator> {
    match label {
        "gaussian" => Ok(gaussian()),
        "exp-power-q1" => exp_power(1.0),
        "exp-power-q4" => exp_power(4.0),
        "student-d3" => student(n, 3.0),
        other => Err(Error::InvalidParameter(format!(
            "unknown generator '{other}' (expected one of gaussian, exp-power-q1, exp-power-q4, student-d3)"
        ))),
    }
}

/// Cross-section mass ∫_{S^{n-1}} v(u)^{−n} λ(du).
///
/// Computed by adaptive sphere quadrature for n ≤ 3 and by the closed form
/// ω_n √det Σ₀ when v is elliptical; general v in dimension n ≥ 4 is out of
/// scope for deterministic quadrature and reported as a domain error.
pub fn cross_section_mass(v: &VFunction, n: usize, spec: &QuadratureSpec) -> Result<Estimate> {
    if n == 0 {
        return Err(Error::InvalidParameter("dimension must be at least 1".into()));
    }
    if let Some(d) = v.dim() {
        if d != n {
            return Err(Error::DimensionMismatch(format!(
                "v-function '{}' is bound to dimension {d}, asked for mass in dimension {n}",
                v.label()
            )));
        }
    }
    if n <= 3 {
        let p = -(n as i32);
        return sphere_integral(n, |u| v.eval(u).powi(p), spec);
    }
    if let Some(sigma0) = v.elliptical() {
        let value = sphere_surface_area(n)? * sigma0.det().sqrt();
        return Ok(Estimate { value, error: 0.0 });
    }
    Err(Error::Domain(format!(
        "cross-section mass for non-elliptical v-function '{}' is only available for n ≤ 3",
        v.label()
    )))
}
