//! Direction-of-scatter machinery: low-dimensional sphere quadrature,
//! uniform sphere draws, and rejection sampling from densities proportional
//! to v(u)^{−n}.

use crate::error::{Error, Result};
use crate::numerics::{integrate, Estimate, QuadratureSpec};
use crate::rng::stream;
use crate::vspherical::vfn::VFunction;
use nalgebra::DVector;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Adaptive quadrature of f over the unit sphere S^{n-1} with respect to
/// surface measure, for n ≤ 3 (n = 1 uses counting measure on {±1}).
pub fn sphere_integral(
    n: usize,
    f: impl Fn(&DVector<f64>) -> f64,
    spec: &QuadratureSpec,
) -> Result<Estimate> {
    match n {
        1 => {
            let value = f(&DVector::from_vec(vec![1.0])) + f(&DVector::from_vec(vec![-1.0]));
            Ok(Estimate { value, error: 0.0 })
        }
        2 => {
            let g = |theta: f64| {
                let u = DVector::from_vec(vec![theta.cos(), theta.sin()]);
                f(&u)
            };
            // Split at the axes so kinks of axis-aligned v-functions land on
            // panel boundaries.
            let q = std::f64::consts::FRAC_PI_2;
            let mut value = 0.0;
            let mut error = 0.0;
            for i in 0..4 {
                let est = integrate(&g, i as f64 * q, (i + 1) as f64 * q, spec)?;
                value += est.value;
                error += est.error;
            }
            Ok(Estimate { value, error })
        }
        3 => {
            // Iterated quadrature in spherical coordinates; the inner
            // integral runs at a tighter tolerance so its noise does not
            // confuse the outer subdivision heuristic.
            let inner_spec =
                QuadratureSpec::new((spec.rel_tol() / 16.0).max(1e-14), spec.max_subdivisions())?;
            let two_pi = 2.0 * std::f64::consts::PI;
            let outer = |theta: f64| -> f64 {
                let st = theta.sin();
                let ct = theta.cos();
                let g = |phi: f64| {
                    let u = DVector::from_vec(vec![st * phi.cos(), st * phi.sin(), ct]);
                    f(&u)
                };
                let mut val = 0.0;
                for i in 0..4 {
                    val += match integrate(&g, i as f64 * two_pi / 4.0, (i + 1) as f64 * two_pi / 4.0, &inner_spec) {
                        Ok(e) => e.value,
                        Err(_) => f64::NAN,
                    };
                }
                val * st
            };
            let est = integrate(&outer, 0.0, std::f64::consts::PI, spec)?;
            Ok(est)
        }
        0 => Err(Error::InvalidParameter("dimension must be at least 1".into())),
        _ => Err(Error::Domain(format!(
            "sphere quadrature is implemented for n ≤ 3, got n = {n}"
        ))),
    }
}

/// Draw a uniform point on S^{n-1} by normalizing a standard Gaussian
/// vector; degenerate draws with vanishing norm are resampled.
pub fn uniform_unit_vector(n: usize, rng: &mut ChaCha8Rng) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    loop {
        let x = DVector::from_fn(n, |_, _| {
            let g: f64 = StandardNormal.sample(rng);
            g
        });
        let norm = x.norm();
        if norm > 1e-100 {
            return x / norm;
        }
    }
}

/// Minimize v over the unit sphere by multistart projected gradient descent
/// with finite-difference gradients, augmented with deterministic candidate
/// points (±eᵢ and the diagonal directions) that catch the axis/corner
/// minima of polyhedral v-functions.
pub fn min_v_on_sphere(v: &VFunction, n: usize, starts: usize) -> Result<f64> {
    // Fixed internal seed: the envelope is a property of v alone and must
    // not vary with the sampling stream.
    let mut rng = stream(0x5EED_D12E_C710, 0);
    let mut best = f64::INFINITY;

    let mut consider = |u0: DVector<f64>| {
        let mut u = u0;
        let mut fu = v.eval(&u);
        let h = 1e-6;
        for _ in 0..80 {
            // Central-difference gradient projected onto the tangent space.
            let mut grad = DVector::zeros(n);
            for i in 0..n {
                let mut up = u.clone();
                let mut dn = u.clone();
                up[i] += h;
                dn[i] -= h;
                grad[i] = (v.eval(&up) - v.eval(&dn)) / (2.0 * h);
            }
            let radial = u.dot(&grad);
            let tang = &grad - &u * radial;
            if tang.norm() < 1e-12 {
                break;
            }
            // Backtracking step on the sphere.
            let mut eta = 0.5;
            let mut moved = false;
            for _ in 0..30 {
                let cand = (&u - &tang * eta).normalize();
                let fc = v.eval(&cand);
                if fc < fu {
                    u = cand;
                    fu = fc;
                    moved = true;
                    break;
                }
                eta *= 0.5;
            }
            if !moved {
                break;
            }
        }
        if fu < best {
            best = fu;
        }
    };

    for i in 0..n {
        let mut e = DVector::zeros(n);
        e[i] = 1.0;
        consider(e.clone());
        consider(-e);
    }
    let diag = DVector::from_element(n, 1.0 / (n as f64).sqrt());
    consider(diag.clone());
    consider(-diag);
    for _ in 0..starts {
        consider(uniform_unit_vector(n, &mut rng));
    }

    if !(best > 0.0) || !best.is_finite() {
        return Err(Error::Domain(format!(
            "v-function '{}' attains non-positive or non-finite values on the sphere (min {best})",
            v.label()
        )));
    }
    Ok(best)
}

/// Rejection sampler for the direction density ∝ v(u)^{−n} under a uniform
/// proposal with a multistart-estimated envelope.
pub struct DirectionSampler {
    v: VFunction,
    n: usize,
    envelope: f64,
}

/// Number of random starts used when estimating the direction envelope.
pub const ENVELOPE_STARTS: usize = 200;
/// Safety factor applied on top of the estimated supremum.
pub const ENVELOPE_SAFETY: f64 = 1.05;
/// Acceptance-rate floor below which the sampler aborts.
pub const ACCEPTANCE_FLOOR: f64 = 1e-4;

impl DirectionSampler {
    pub fn build(v: &VFunction, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        let vmin = min_v_on_sphere(v, n, ENVELOPE_STARTS)?;
        let envelope = ENVELOPE_SAFETY * vmin.powi(-(n as i32));
        Ok(DirectionSampler { v: v.clone(), n, envelope })
    }

    pub fn envelope(&self) -> f64 {
        self.envelope
    }

    /// Draw one direction; `proposals`/`accepted` counters accumulate across
    /// calls so stall detection sees the whole run, not a lucky streak.
    pub fn sample(
        &self,
        rng: &mut ChaCha8Rng,
        proposals: &mut u64,
        accepted: &mut u64,
    ) -> Result<DVector<f64>> {
        loop {
            let u = uniform_unit_vector(self.n, rng);
            *proposals += 1;
            let t = self.v.eval(&u).powi(-(self.n as i32));
            if !t.is_finite() {
                return Err(Error::Domain(format!(
                    "direction target not finite at a proposal (v = {})",
                    self.v.eval(&u)
                )));
            }
            if t > self.envelope {
                // The multistart envelope missed the supremum: abort rather
                // than silently sample from the wrong law.
                return Err(Error::EnvelopeViolation { ratio: t / self.envelope });
            }
            if rng.random::<f64>() * self.envelope < t {
                *accepted += 1;
                return Ok(u);
            }
            if *proposals >= 10_000 {
                let rate = *accepted as f64 / *proposals as f64;
                if rate < ACCEPTANCE_FLOOR {
                    return Err(Error::SamplerStall { rate, floor: ACCEPTANCE_FLOOR });
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linalg::PosDefMatrix;
    use crate::numerics::sphere_surface_area;
    use crate::vspherical::vfn::{v_elliptical, v_lq, v_max};

    #[test]
    fn sphere_integral_surface_areas() {
        let sp = QuadratureSpec::default();
        for n in [1usize, 2, 3] {
            let got = sphere_integral(n, |_| 1.0, &sp).unwrap().value;
            let want = sphere_surface_area(n).unwrap();
            assert!((got - want).abs() / want < 1e-10, "n={n}: {got} vs {want}");
        }
    }

    #[test]
    fn sphere_integral_second_moment() {
        // ∫_{S²} u₃² dλ = ω₃/3.
        let sp = QuadratureSpec::default();
        let got = sphere_integral(3, |u| u[2] * u[2], &sp).unwrap().value;
        let want = sphere_surface_area(3).unwrap() / 3.0;
        assert!((got - want).abs() / want < 1e-9);
    }

    #[test]
    fn min_on_sphere_known_values() {
        // Elliptical diag(4,1): v(u)² = u₁²/4 + u₂², minimized at ±e₁ → 1/2.
        let v = v_elliptical(PosDefMatrix::from_diagonal(&[4.0, 1.0]).unwrap());
        let m = min_v_on_sphere(&v, 2, 50).unwrap();
        assert!((m - 0.5).abs() < 1e-6, "got {m}");
        // l₁ on S¹: minimum 1 at the axes.
        let m = min_v_on_sphere(&v_lq(1.0).unwrap(), 2, 50).unwrap();
        assert!((m - 1.0).abs() < 1e-6, "got {m}");
        // max-norm on S²: minimum 1/√3 on the diagonal.
        let m = min_v_on_sphere(&v_max(), 3, 50).unwrap();
        assert!((m - 1.0 / 3.0f64.sqrt()).abs() < 1e-6, "got {m}");
    }

    #[test]
    fn uniform_direction_moments() {
        let mut rng = stream(7, 0);
        let n = 3;
        let mut mean = DVector::zeros(n);
        let mut sq = DVector::zeros(n);
        let draws = 20_000;
        for _ in 0..draws {
            let u = uniform_unit_vector(n, &mut rng);
            mean += &u;
            sq += u.map(|c| c * c);
        }
        mean /= draws as f64;
        sq /= draws as f64;
        assert!(mean.norm() < 0.02, "mean norm {}", mean.norm());
        for i in 0..n {
            assert!((sq[i] - 1.0 / 3.0).abs() < 0.02, "second moment {}", sq[i]);
        }
    }

    #[test]
    fn envelope_violation_detected() {
        // Force a too-small envelope by constructing the sampler manually.
        let v = v_elliptical(PosDefMatrix::from_diagonal(&[9.0, 1.0]).unwrap());
        let s = DirectionSampler { v: v.clone(), n: 2, envelope: 1.0 };
        let mut rng = stream(3, 0);
        let (mut p, mut a) = (0u64, 0u64);
        let mut saw = false;
        for _ in 0..200 {
            if let Err(Error::EnvelopeViolation { ratio }) = s.sample(&mut rng, &mut p, &mut a) {
                assert!(ratio > 1.0);
                saw = true;
                break;
            }
        }
        assert!(saw, "expected an envelope violation");
    }
}
