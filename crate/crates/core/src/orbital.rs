//! The orbital-decomposition framework.
//!
//! A model bundles the equivariant map r (satisfying r(g·x) = g·r(x)), the
//! induced cross-section map z(x) = r(x)⁻¹·x, a section s embedding the
//! cross section back into the group, the multipliers χ_H, χ_G and the right
//! modulus Δ_G, and the two group actions. The framework is parametric in
//! these maps, so a model is assembled by composition of function fields
//! rather than through a trait hierarchy; group elements stay concrete
//! (a positive real for the scale group, a dense k×k matrix for the general
//! linear group, an orthogonal matrix for rotations).
//!
//! Generic operations provided here: the sampling density
//! (1/(χ_H(h)χ_G(g)))·f(g⁻¹ r(h⁻¹x) s(z(h⁻¹x))), the generator-free
//! cross-section density c/(χ_G(s(z))Δ_G(s(z))), the normalizing constant
//! c = ∫_G f(r)χ_G(r)μ_G(dr), and the marginal posterior kernel
//! 1/(χ_H(h)·χ̃_G(r(h⁻¹x))·χ̃_G(s(z(h⁻¹x)))) with χ̃_G = χ_G/m.

use crate::error::{Error, Result};
use crate::numerics::quad::{integrate_radial, Estimate, QuadratureSpec};
use rand_chacha::ChaCha8Rng;

/// Scalar-valued function of a group element (multipliers, moduli).
pub type ScalarFn<T> = Box<dyn Fn(&T) -> f64 + Send + Sync>;
/// Unary operation within one type (group inversion).
pub type UnaryOp<T> = Box<dyn Fn(&T) -> T + Send + Sync>;
/// Binary operation within one type (group composition).
pub type BinaryOp<T> = Box<dyn Fn(&T, &T) -> T + Send + Sync>;
/// Group action on points.
pub type ActionFn<G, X> = Box<dyn Fn(&G, &X) -> X + Send + Sync>;
/// The equivariant map r: 𝒳* → G; fallible because the argument may sit in
/// the excluded null set.
pub type EquivariantMap<X, G> = Box<dyn Fn(&X) -> Result<G> + Send + Sync>;
/// The section s: 𝒵 → G, evaluated at cross-section points.
pub type SectionMap<X, G> = Box<dyn Fn(&X) -> G + Send + Sync>;
/// Membership predicate for the full-measure domain 𝒳*.
pub type DomainPredicate<X> = Box<dyn Fn(&X) -> bool + Send + Sync>;
/// Integration of a scalar function against the model's left-invariant
/// measure μ_G on the group (quadrature for one-dimensional groups,
/// importance sampling for matrix groups).
pub type GroupIntegral<G> =
    Box<dyn Fn(&(dyn Fn(&G) -> f64 + Sync), &IntegralSpec) -> Result<Estimate> + Send + Sync>;

/// Controls for a group integration: quadrature settings for 1-d groups,
/// sample count and seed for Monte Carlo groups.
#[derive(Debug, Clone)]
pub struct IntegralSpec {
    pub quad: QuadratureSpec,
    pub mc_samples: usize,
    pub seed: u64,
}

impl IntegralSpec {
    pub fn quadrature(quad: QuadratureSpec) -> Self {
        Self { quad, mc_samples: 200_000, seed: 0 }
    }

    pub fn monte_carlo(mc_samples: usize, seed: u64) -> Self {
        Self { quad: QuadratureSpec::default(), mc_samples, seed }
    }
}

impl Default for IntegralSpec {
    fn default() -> Self {
        Self::quadrature(QuadratureSpec::default())
    }
}

/// A nonnegative density generator f on the group G.
///
/// The normalization contract is that the induced sampling density
/// integrates to one over 𝒳*; the model modules impose it numerically on
/// their built-in generator families.
pub struct DensityGenerator<G> {
    eval: Box<dyn Fn(&G) -> f64 + Send + Sync>,
    label: String,
}

impl<G> DensityGenerator<G> {
    pub fn new(
        label: impl Into<String>,
        eval: impl Fn(&G) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self { eval: Box::new(eval), label: label.into() }
    }

    pub fn eval(&self, g: &G) -> f64 {
        (self.eval)(g)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

/// A positive multiplier on G (a continuous homomorphism into ℝ_{>0}),
/// used as the density of a relatively invariant nuisance prior.
pub struct Multiplier<G> {
    eval: Box<dyn Fn(&G) -> f64 + Send + Sync>,
    label: String,
}

impl<G> Multiplier<G> {
    pub fn new(label: impl Into<String>, eval: impl Fn(&G) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: Box::new(eval), label: label.into() }
    }

    /// The trivial multiplier m ≡ 1 (invariant prior).
    pub fn one() -> Self {
        Self::new("m=1", |_| 1.0)
    }

    pub fn eval(&self, g: &G) -> f64 {
        (self.eval)(g)
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl Multiplier<f64> {
    /// Power multiplier m(g) = g^a on ℝ_{>0}; these are exactly the
    /// continuous multipliers of the scale group.
    pub fn power(a: f64) -> Self {
        Self::new(format!("m(g)=g^{a}"), move |g: &f64| g.powf(a))
    }
}

/// A parameter point (h, g); coset identification is applied by the
/// canonicalize operations of the concrete model modules.
#[derive(Debug, Clone)]
pub struct ParamPoint<H, G> {
    pub h: H,
    pub g: G,
}

impl<H, G> ParamPoint<H, G> {
    pub fn new(h: H, g: G) -> Self {
        Self { h, g }
    }
}

/// One instance of the orbital framework. See the module documentation for
/// the roles of the fields.
pub struct OrbitalModel<X, H, G> {
    pub label: String,
    pub r_map: EquivariantMap<X, G>,
    pub s_map: SectionMap<X, G>,
    pub chi_h: ScalarFn<H>,
    pub chi_g: ScalarFn<G>,
    pub delta_g: ScalarFn<G>,
    pub h_action: ActionFn<H, X>,
    pub h_inverse: UnaryOp<H>,
    pub h_compose: BinaryOp<H>,
    pub g_action: ActionFn<G, X>,
    pub g_inverse: UnaryOp<G>,
    pub g_compose: BinaryOp<G>,
    pub membership: DomainPredicate<X>,
    pub group_integral: GroupIntegral<G>,
}

impl<X, H, G> OrbitalModel<X, H, G> {
    /// Whether x lies in the full-measure domain 𝒳*.
    pub fn in_domain(&self, x: &X) -> bool {
        (self.membership)(x)
    }

    /// The equivariant map r(x); errors on excluded points.
    pub fn r(&self, x: &X) -> Result<G> {
        if !(self.membership)(x) {
            return Err(Error::ExcludedPoint(format!(
                "point outside the domain of model '{}'",
                self.label
            )));
        }
        (self.r_map)(x)
    }

    /// The maximal invariant z(x) = r(x)⁻¹·x.
    pub fn z(&self, x: &X) -> Result<X> {
        let r = self.r(x)?;
        let rinv = (self.g_inverse)(&r);
        Ok((self.g_action)(&rinv, x))
    }

    /// The section s evaluated at a cross-section point.
    pub fn s_of(&self, z: &X) -> G {
        (self.s_map)(z)
    }

    /// Sampling density p(x | h, g; f).
    pub fn sampling_density(
        &self,
        x: &X,
        theta: &ParamPoint<H, G>,
        f: &DensityGenerator<G>,
    ) -> Result<f64> {
        let hinv = (self.h_inverse)(&theta.h);
        let y = (self.h_action)(&hinv, x);
        if !(self.membership)(&y) {
            return Err(Error::ExcludedPoint(format!(
                "h^-1 x lies in the excluded null set of model '{}'",
                self.label
            )));
        }
        let r = (self.r_map)(&y)?;
        let rinv = (self.g_inverse)(&r);
        let z = (self.g_action)(&rinv, &y);
        let s = (self.s_map)(&z);
        let ginv = (self.g_inverse)(&theta.g);
        let arg = (self.g_compose)(&(self.g_compose)(&ginv, &r), &s);
        Ok(f.eval(&arg) / ((self.chi_h)(&theta.h) * (self.chi_g)(&theta.g)))
    }

    /// Null-robust cross-section density p_𝒵(z) = c/(χ_G(s(z)) Δ_G(s(z))).
    ///
    /// `c` is the normalizing constant from [`Self::normalizing_constant`];
    /// the value does not depend on the generator — only c does, through the
    /// requirement that the sampling density integrate to one.
    pub fn cross_section_density(&self, z: &X, c: f64) -> Result<f64> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "normalizing constant must be positive and finite, got {c}"
            )));
        }
        if !(self.membership)(z) {
            return Err(Error::ExcludedPoint(format!(
                "cross-section point outside the domain of model '{}'",
                self.label
            )));
        }
        let s = (self.s_map)(z);
        Ok(c / ((self.chi_g)(&s) * (self.delta_g)(&s)))
    }

    /// Normalizing constant c = ∫_G f(r) χ_G(r) μ_G(dr).
    pub fn normalizing_constant(
        &self,
        f: &DensityGenerator<G>,
        spec: &IntegralSpec,
    ) -> Result<Estimate> {
        let integrand = |g: &G| f.eval(g) * (self.chi_g)(g);
        (self.group_integral)(&integrand, spec)
    }

    /// Marginal posterior kernel p(x, [h]) for a relatively invariant
    /// nuisance prior with multiplier m; proportional in (x, [h]) to the
    /// nuisance-marginalized density for every admissible generator.
    pub fn marginal_kernel(&self, x: &X, h: &H, m: &Multiplier<G>) -> Result<f64> {
        let hinv = (self.h_inverse)(h);
        let y = (self.h_action)(&hinv, x);
        if !(self.membership)(&y) {
            return Err(Error::ExcludedPoint(format!(
                "h^-1 x lies in the excluded null set of model '{}'",
                self.label
            )));
        }
        let r = (self.r_map)(&y)?;
        let rinv = (self.g_inverse)(&r);
        let z = (self.g_action)(&rinv, &y);
        let s = (self.s_map)(&z);
        let chi_tilde_r = (self.chi_g)(&r) / m.eval(&r);
        let chi_tilde_s = (self.chi_g)(&s) / m.eval(&s);
        Ok(1.0 / ((self.chi_h)(h) * chi_tilde_r * chi_tilde_s))
    }
}

/// Group integral for G = ℝ_{>0} with the left-invariant measure
/// μ_G(dg) = g⁻¹ dg.
pub fn scalar_group_integral() -> GroupIntegral<f64> {
    Box::new(|phi, spec| integrate_radial(|r| phi(&r) / r, 1, &spec.quad))
}

/// Sampling hooks for randomized framework checks on one concrete model.
pub struct FrameworkCheckHooks<X, H, G> {
    pub sample_point: Box<dyn Fn(&mut ChaCha8Rng) -> X>,
    pub sample_g: Box<dyn Fn(&mut ChaCha8Rng) -> G>,
    pub sample_h: Box<dyn Fn(&mut ChaCha8Rng) -> H>,
    pub point_rel_diff: Box<dyn Fn(&X, &X) -> f64>,
    pub group_rel_diff: Box<dyn Fn(&G, &G) -> f64>,
}

/// Worst observed deviations over the randomized framework checks.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct FrameworkCheckReport {
    pub cases: usize,
    pub max_equivariance: f64,
    pub max_reconstruction: f64,
    pub max_invariance: f64,
    pub max_chi_g_law: f64,
    pub max_chi_h_law: f64,
    pub max_delta_g_law: f64,
}

fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

/// Verify equivariance r(g·x) = g·r(x), reconstruction x = r(x)·z(x),
/// maximal invariance z(g·x) = z(x), and the multiplier laws on `cases`
/// random draws; errors with `InvarianceViolation` when any relative
/// deviation exceeds `tol`.
pub fn check_framework<X, H, G>(
    model: &OrbitalModel<X, H, G>,
    hooks: &FrameworkCheckHooks<X, H, G>,
    cases: usize,
    tol: f64,
    seed: u64,
) -> Result<FrameworkCheckReport> {
    let mut rng = crate::rng::stream(seed, 0);
    let mut report = FrameworkCheckReport {
        cases,
        max_equivariance: 0.0,
        max_reconstruction: 0.0,
        max_invariance: 0.0,
        max_chi_g_law: 0.0,
        max_chi_h_law: 0.0,
        max_delta_g_law: 0.0,
    };
    for case in 0..cases {
        let x = (hooks.sample_point)(&mut rng);
        if !model.in_domain(&x) {
            continue;
        }
        let g = (hooks.sample_g)(&mut rng);
        let g2 = (hooks.sample_g)(&mut rng);
        let h = (hooks.sample_h)(&mut rng);
        let h2 = (hooks.sample_h)(&mut rng);

        let gx = (model.g_action)(&g, &x);
        let r_gx = model.r(&gx)?;
        let g_rx = (model.g_compose)(&g, &model.r(&x)?);
        report.max_equivariance = report.max_equivariance.max((hooks.group_rel_diff)(&r_gx, &g_rx));

        let z = model.z(&x)?;
        let recon = (model.g_action)(&model.r(&x)?, &z);
        report.max_reconstruction =
            report.max_reconstruction.max((hooks.point_rel_diff)(&recon, &x));

        let z_gx = model.z(&gx)?;
        report.max_invariance = report.max_invariance.max((hooks.point_rel_diff)(&z_gx, &z));

        let gg = (model.g_compose)(&g, &g2);
        report.max_chi_g_law = report.max_chi_g_law.max(rel_diff(
            (model.chi_g)(&gg),
            (model.chi_g)(&g) * (model.chi_g)(&g2),
        ));
        report.max_delta_g_law = report.max_delta_g_law.max(rel_diff(
            (model.delta_g)(&gg),
            (model.delta_g)(&g) * (model.delta_g)(&g2),
        ));
        let hh = (model.h_compose)(&h, &h2);
        report.max_chi_h_law = report.max_chi_h_law.max(rel_diff(
            (model.chi_h)(&hh),
            (model.chi_h)(&h) * (model.chi_h)(&h2),
        ));

        let worst = report
            .max_equivariance
            .max(report.max_reconstruction)
            .max(report.max_invariance)
            .max(report.max_chi_g_law)
            .max(report.max_chi_h_law)
            .max(report.max_delta_g_law);
        if worst > tol {
            return Err(Error::InvarianceViolation(format!(
                "framework check failed for model '{}' at case {case}: max deviation {worst:.3e} > {tol:.1e} \
                 (equivariance {:.3e}, reconstruction {:.3e}, invariance {:.3e}, \
                  chi_G law {:.3e}, chi_H law {:.3e}, Delta_G law {:.3e})",
                model.label,
                report.max_equivariance,
                report.max_reconstruction,
                report.max_invariance,
                report.max_chi_g_law,
                report.max_chi_h_law,
                report.max_delta_g_law,
            )));
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use std::f64::consts::PI;

    /// One-dimensional location–scale toy model: 𝒳* = ℝ∖{0}, r(x) = |x|,
    /// s(±1) = 1, χ_G(g) = g, Δ_G = 1, translations as H.
    fn toy_model() -> OrbitalModel<f64, f64, f64> {
        OrbitalModel {
            label: "toy-1d".into(),
            r_map: Box::new(|x: &f64| {
                if *x == 0.0 {
                    Err(Error::ExcludedPoint("origin".into()))
                } else {
                    Ok(x.abs())
                }
            }),
            s_map: Box::new(|_z| 1.0),
            chi_h: Box::new(|_h| 1.0),
            chi_g: Box::new(|g| *g),
            delta_g: Box::new(|_g| 1.0),
            h_action: Box::new(|h, x| x + h),
            h_inverse: Box::new(|h| -h),
            h_compose: Box::new(|a, b| a + b),
            g_action: Box::new(|g, x| g * x),
            g_inverse: Box::new(|g| 1.0 / g),
            g_compose: Box::new(|a, b| a * b),
            membership: Box::new(|x: &f64| *x != 0.0 && x.is_finite()),
            group_integral: scalar_group_integral(),
        }
    }

    /// Standard normal generator on ℝ_{>0}, normalized for the toy model
    /// (the density integrates over both half-lines).
    fn toy_gaussian() -> DensityGenerator<f64> {
        let norm = (2.0 * PI).sqrt();
        DensityGenerator::new("gaussian", move |r: &f64| (-0.5 * r * r).exp() / norm)
    }

    #[test]
    fn toy_density_matches_standard_normal() {
        let model = toy_model();
        let f = toy_gaussian();
        let theta = ParamPoint::new(0.0, 1.0);
        for x in [-2.5f64, -0.3, 0.7, 2.0] {
            let p = model.sampling_density(&x, &theta, &f).unwrap();
            let normal = (-0.5 * x * x).exp() / (2.0 * PI).sqrt();
            assert!((p - normal).abs() < 1e-14);
        }
        // Location-scale transformation: N(mu, sigma^2).
        let theta = ParamPoint::new(1.5, 2.0);
        let x = 0.25f64;
        let p = model.sampling_density(&x, &theta, &f).unwrap();
        let zed = (x - 1.5) / 2.0;
        let normal = (-0.5 * zed * zed).exp() / ((2.0 * PI).sqrt() * 2.0);
        assert!((p - normal).abs() < 1e-14);
    }

    #[test]
    fn toy_excluded_point() {
        let model = toy_model();
        let f = toy_gaussian();
        let theta = ParamPoint::new(0.5, 1.0);
        match model.sampling_density(&0.5, &theta, &f) {
            Err(Error::ExcludedPoint(_)) => {}
            other => panic!("expected excluded point, got {other:?}"),
        }
    }

    #[test]
    fn toy_normalizing_constant_and_cross_section() {
        let model = toy_model();
        let f = toy_gaussian();
        // c = ∫ f(r) χ_G(r) r^{-1} dr = ∫ f(r) dr = 1/2.
        let c = model.normalizing_constant(&f, &IntegralSpec::default()).unwrap();
        assert!((c.value - 0.5).abs() < 1e-10, "c = {}", c.value);
        // The cross section is {−1, +1} with counting measure: p(±1) = 1/2.
        let p = model.cross_section_density(&1.0, c.value).unwrap();
        assert!((p - 0.5).abs() < 1e-10);
        let q = model.cross_section_density(&-1.0, c.value).unwrap();
        assert!((q - 0.5).abs() < 1e-10);
    }

    #[test]
    fn toy_marginal_kernel() {
        let model = toy_model();
        // m ≡ 1: kernel = |x − μ|^{-1} (n = 1 case of the location–scale family).
        let k = model.marginal_kernel(&3.0, &1.0, &Multiplier::one()).unwrap();
        assert!((k - 0.5).abs() < 1e-14);
        // m(g) = g^a tilts the kernel to |x − μ|^{a-1}.
        let k = model.marginal_kernel(&3.0, &1.0, &Multiplier::power(0.5)).unwrap();
        assert!((k - 2.0f64.powf(-0.5)).abs() < 1e-14);
    }

    #[test]
    fn toy_framework_checks_pass() {
        let model = toy_model();
        let hooks = FrameworkCheckHooks {
            sample_point: Box::new(|rng: &mut ChaCha8Rng| rng.random::<f64>() * 4.0 - 2.0),
            sample_g: Box::new(|rng: &mut ChaCha8Rng| rng.random::<f64>() * 3.0 + 0.1),
            sample_h: Box::new(|rng: &mut ChaCha8Rng| rng.random::<f64>() * 2.0 - 1.0),
            point_rel_diff: Box::new(|a, b| (a - b).abs() / b.abs().max(1e-300)),
            group_rel_diff: Box::new(|a, b| (a - b).abs() / b.abs().max(1e-300)),
        };
        let report = check_framework(&model, &hooks, 1000, 1e-10, 77).unwrap();
        assert!(report.max_equivariance < 1e-12);
        assert!(report.max_reconstruction < 1e-12);
    }
}
