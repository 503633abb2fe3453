//! Exact radial sampling by tabulated inverse CDF.
//!
//! The radial law has density ∝ f(r) r^{n−1}.  In log-radius u = log r the
//! density g(u) = f(e^u) e^{nu} is tabulated on a window wide enough that
//! the truncated tails carry a negligible share of the mass; per-cell masses
//! come from Gauss–Kronrod panels, the CDF between knots is a monotone cubic
//! Hermite segment whose end slopes are exact density values, and inversion
//! uses safeguarded Newton iterations.  The construction is deterministic,
//! so a fixed seed yields bit-identical draws regardless of tabulation cost.

use crate::error::{Error, Result};
use crate::numerics::{integrate, integrate_radial, QuadratureSpec};
use crate::vspherical::generators::RadialGenerator;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// Relative mass below which a 4-wide tail panel is considered negligible.
const TAIL_EPS: f64 = 1e-15;
/// Width of a tail extension panel in log-radius.
const PANEL: f64 = 4.0;
/// Initial half-width of the log-radius window.
const BASE: f64 = 8.0;
/// Cap on tail extension panels per side.
const MAX_PANELS: usize = 40;
/// Knots per unit of log-radius.
const KNOTS_PER_UNIT: f64 = 96.0;

pub struct RadialSampler {
    knots: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
}

impl RadialSampler {
    pub fn build(f: &RadialGenerator, n: usize, spec: &QuadratureSpec) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidParameter("dimension must be at least 1".into()));
        }
        // Up-front integrability check; this also classifies divergent
        // generators before any tabulation work happens.
        let total = integrate_radial(|r| f.eval(r) * r.powi(n as i32 - 1), 1, spec)?.value;
        if !(total > 0.0) {
            return Err(Error::Domain(format!(
                "radial generator '{}' has non-positive mass {total}",
                f.label()
            )));
        }

        let g = |u: f64| f.eval(u.exp()) * (n as f64 * u).exp();
        let panel_spec = QuadratureSpec::new(1e-9, 64)?;
        let panel_mass = |a: f64, b: f64| -> Result<f64> {
            Ok(integrate(&g, a, b, &panel_spec)?.value)
        };

        // Grow the window until both tails fall below the truncation level.
        let mut lo = -BASE;
        let mut hi = BASE;
        for _ in 0..MAX_PANELS {
            let tail = panel_mass(hi, hi + PANEL)?;
            if tail.abs() <= TAIL_EPS * total {
                break;
            }
            hi += PANEL;
        }
        for _ in 0..MAX_PANELS {
            let tail = panel_mass(lo - PANEL, lo)?;
            if tail.abs() <= TAIL_EPS * total {
                break;
            }
            lo -= PANEL;
        }

        let span = hi - lo;
        let cells = ((span * KNOTS_PER_UNIT) as usize).clamp(1024, 8192);
        let step = span / cells as f64;
        let mut knots = Vec::with_capacity(cells + 1);
        let mut pdf = Vec::with_capacity(cells + 1);
        for i in 0..=cells {
            let u = lo + i as f64 * step;
            knots.push(u);
            let d = g(u);
            if !d.is_finite() || d < 0.0 {
                return Err(Error::Domain(format!(
                    "radial generator '{}' is not a finite nonnegative density at r = {:e}",
                    f.label(),
                    u.exp()
                )));
            }
            pdf.push(d);
        }

        let mut cdf = Vec::with_capacity(cells + 1);
        cdf.push(0.0);
        let mut acc = 0.0;
        for i in 0..cells {
            acc += panel_mass(knots[i], knots[i + 1])?;
            cdf.push(acc);
        }
        if !(acc > 0.0) || !acc.is_finite() {
            return Err(Error::Domain(format!(
                "tabulated mass for generator '{}' is degenerate: {acc}",
                f.label()
            )));
        }
        for c in cdf.iter_mut() {
            *c /= acc;
        }
        for d in pdf.iter_mut() {
            *d /= acc;
        }
        // Quadrature noise can leave microscopic non-monotonicity; clamp.
        for i in 1..cdf.len() {
            if cdf[i] < cdf[i - 1] {
                cdf[i] = cdf[i - 1];
            }
        }
        let last = cdf.len() - 1;
        cdf[last] = 1.0;

        Ok(RadialSampler { knots, cdf, pdf })
    }

    /// Number of tabulation knots (diagnostic).
    pub fn knot_count(&self) -> usize {
        self.knots.len()
    }

    /// Invert the tabulated CDF at p ∈ [0, 1), returning a radius.
    pub fn inv_cdf(&self, p: f64) -> f64 {
        let p = p.clamp(0.0, 1.0);
        // Binary search for the cell with cdf[i] ≤ p ≤ cdf[i+1].
        let mut lo = 0usize;
        let mut hi = self.cdf.len() - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if self.cdf[mid] <= p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let (u0, u1) = (self.knots[lo], self.knots[lo + 1]);
        let (c0, c1) = (self.cdf[lo], self.cdf[lo + 1]);
        let h = u1 - u0;
        let dc = c1 - c0;
        if dc <= 0.0 {
            return (0.5 * (u0 + u1)).exp();
        }
        // Fritsch–Carlson-limited Hermite slopes keep the segment monotone.
        let mut m0 = self.pdf[lo] * h / dc;
        let mut m1 = self.pdf[lo + 1] * h / dc;
        let s = (m0 * m0 + m1 * m1).sqrt();
        if s > 3.0 {
            m0 *= 3.0 / s;
            m1 *= 3.0 / s;
        }
        let target = (p - c0) / dc;
        let cubic = |t: f64| -> (f64, f64) {
            let t2 = t * t;
            let t3 = t2 * t;
            // Normalized Hermite segment through (0,0) and (1,1).
            let val = (2.0 * t3 - 3.0 * t2 + 1.0) * 0.0
                + (t3 - 2.0 * t2 + t) * m0
                + (-2.0 * t3 + 3.0 * t2) * 1.0
                + (t3 - t2) * m1;
            let der = (3.0 * t2 - 4.0 * t + 1.0) * m0
                + (-6.0 * t2 + 6.0 * t)
                + (3.0 * t2 - 2.0 * t) * m1;
            (val, der)
        };
        // Safeguarded Newton on t ∈ [0, 1].
        let mut a = 0.0;
        let mut b = 1.0;
        let mut t = target.clamp(0.0, 1.0);
        for _ in 0..40 {
            let (val, der) = cubic(t);
            let resid = val - target;
            if resid.abs() < 1e-14 {
                break;
            }
            if resid > 0.0 {
                b = t;
            } else {
                a = t;
            }
            let step = if der > 1e-12 { resid / der } else { f64::NAN };
            let mut next = t - step;
            if !next.is_finite() || next <= a || next >= b {
                next = 0.5 * (a + b);
            }
            if (next - t).abs() < 1e-15 {
                t = next;
                break;
            }
            t = next;
        }
        (u0 + t * h).exp()
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        self.inv_cdf(rng.random::<f64>())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::regularized_gamma_p;
    use crate::rng::stream;
    use crate::vspherical::generators::{exp_power, gaussian, student};

    #[test]
    fn gaussian_radial_matches_chi_distribution() {
        // For f = e^{−r²/2} in dimension n the radial law is chi with n
        // degrees of freedom: CDF P(n/2, r²/2).
        let sp = QuadratureSpec::default();
        let n = 3;
        let sampler = RadialSampler::build(&gaussian(), n, &sp).unwrap();

        // Inverse-CDF consistency at fixed quantiles.
        for p in [0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 0.99, 0.999] {
            let r = sampler.inv_cdf(p);
            let cdf = regularized_gamma_p(n as f64 / 2.0, r * r / 2.0).unwrap();
            assert!((cdf - p).abs() < 5e-7, "p={p}: r={r}, cdf={cdf}");
        }

        // Kolmogorov–Smirnov on actual draws.
        let mut rng = stream(11, 0);
        let m = 50_000usize;
        let mut us: Vec<f64> = (0..m)
            .map(|_| {
                let r = sampler.sample(&mut rng);
                regularized_gamma_p(n as f64 / 2.0, r * r / 2.0).unwrap()
            })
            .collect();
        us.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d = 0.0f64;
        for (i, &u) in us.iter().enumerate() {
            d = d.max((u - i as f64 / m as f64).abs());
            d = d.max(((i + 1) as f64 / m as f64 - u).abs());
        }
        let stat = d * (m as f64).sqrt();
        assert!(stat < 2.0, "KS statistic {stat}");
    }

    #[test]
    fn heavy_tail_quantiles() {
        // Student d = 3 in n = 2: density ∝ r(1+r²/3)^{−5/2}; the CDF is
        // 1 − (1+r²/3)^{−3/2}, invertible in closed form.
        let sp = QuadratureSpec::default();
        let sampler = RadialSampler::build(&student(2, 3.0).unwrap(), 2, &sp).unwrap();
        for p in [0.1, 0.5, 0.9, 0.99, 0.9999] {
            let want = (3.0 * ((1.0_f64 - p).powf(-2.0 / 3.0) - 1.0)).sqrt();
            let got = sampler.inv_cdf(p);
            assert!(
                ((got - want) / want).abs() < 1e-5,
                "p={p}: got {got}, want {want}"
            );
        }
    }

    #[test]
    fn laplace_like_generator_mean() {
        // exp-power q = 1 in n = 1: density e^{−r}, mean 1, median ln 2.
        let sp = QuadratureSpec::default();
        let sampler = RadialSampler::build(&exp_power(1.0).unwrap(), 1, &sp).unwrap();
        assert!((sampler.inv_cdf(0.5) - std::f64::consts::LN_2).abs() < 1e-6);
        let mut rng = stream(5, 0);
        let m = 40_000;
        let mean: f64 = (0..m).map(|_| sampler.sample(&mut rng)).sum::<f64>() / m as f64;
        assert!((mean - 1.0).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn divergent_generator_rejected() {
        let bad = RadialGenerator::new("one-over-r", |r| 1.0 / r);
        let sp = QuadratureSpec::default();
        assert!(RadialSampler::build(&bad, 2, &sp).is_err());
    }
}
