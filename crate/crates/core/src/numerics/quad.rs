//! Adaptive Gauss–Kronrod quadrature, with a log substitution for radial
//! integrals over (0, ∞).
//!
//! Radial integrands of the form f(r) r^{n-1} mix power-law behavior near 0
//! with exponential or power decay at infinity; after u = log r both ends
//! become plain exponential tails, which the panel-extension scheme resolves
//! without any a-priori truncation radius.

use crate::error::{Error, Result};
use serde::Serialize;

/// Abscissae of the 15-point Kronrod rule on [-1, 1] (positive half).
/// Odd indices are the embedded 7-point Gauss nodes.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_838_258_730,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.000_000_000_000_000_000_000_000_000_000_000,
];

/// Weights of the embedded 7-point Gauss rule.
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Weights of the 15-point Kronrod rule.
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

/// Tolerances and budget for one quadrature task.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct QuadratureSpec {
    rel_tol: f64,
    max_subdivisions: usize,
    log_substitution: bool,
}

impl QuadratureSpec {
    /// Build a spec; `rel_tol` must lie in (0, 1e-2] and `max_subdivisions` be >= 8.
    pub fn new(rel_tol: f64, max_subdivisions: usize) -> Result<Self> {
        if !(rel_tol > 0.0 && rel_tol <= 1e-2) {
            return Err(Error::InvalidParameter(format!(
                "quadrature relative tolerance must lie in (0, 1e-2], got {rel_tol}"
            )));
        }
        if max_subdivisions < 8 {
            return Err(Error::InvalidParameter(format!(
                "quadrature needs max_subdivisions >= 8, got {max_subdivisions}"
            )));
        }
        Ok(Self { rel_tol, max_subdivisions, log_substitution: true })
    }

    /// Toggle the u = log r substitution used by [`integrate_radial`].
    pub fn with_log_substitution(mut self, on: bool) -> Self {
        self.log_substitution = on;
        self
    }

    pub fn rel_tol(&self) -> f64 {
        self.rel_tol
    }

    pub fn max_subdivisions(&self) -> usize {
        self.max_subdivisions
    }

    pub fn log_substitution(&self) -> bool {
        self.log_substitution
    }
}

impl Default for QuadratureSpec {
    fn default() -> Self {
        Self { rel_tol: 1e-10, max_subdivisions: 256, log_substitution: true }
    }
}

/// A numerical value with an error estimate (quadrature bound or MC standard error).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Estimate {
    pub value: f64,
    pub error: f64,
}

impl Estimate {
    pub fn rel_error(&self) -> f64 {
        self.error / self.value.abs().max(f64::MIN_POSITIVE)
    }
}

/// QUADPACK-style error rescaling for one panel.
fn rescale_error(err: f64, resabs: f64, resasc: f64) -> f64 {
    let mut err = err.abs();
    if resasc != 0.0 && err != 0.0 {
        let scale = (200.0 * err / resasc).powf(1.5);
        err = if scale < 1.0 { resasc * scale } else { resasc };
    }
    if resabs > f64::MIN_POSITIVE / (50.0 * f64::EPSILON) {
        err = err.max(50.0 * f64::EPSILON * resabs);
    }
    err
}

/// 15-point Kronrod rule on [a, b]; returns (value, error, resabs).
fn qk15<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64) -> Result<(f64, f64, f64)> {
    let center = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let abs_half = half.abs();

    let eval = |x: f64| -> Result<f64> {
        let y = f(x);
        if y.is_nan() {
            return Err(Error::Domain(format!("integrand returned NaN at x = {x:e}")));
        }
        Ok(y)
    };

    let f_center = eval(center)?;
    let mut fv1 = [0.0; 8];
    let mut fv2 = [0.0; 8];
    let mut kronrod = f_center * WGK[7];
    let mut gauss = f_center * WG[3];
    let mut resabs = kronrod.abs();
    for j in 0..7 {
        let dx = half * XGK[j];
        let f1 = eval(center - dx)?;
        let f2 = eval(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        kronrod += WGK[j] * (f1 + f2);
        resabs += WGK[j] * (f1.abs() + f2.abs());
        if j % 2 == 1 {
            gauss += WG[j / 2] * (f1 + f2);
        }
    }
    let mean = kronrod * 0.5;
    let mut resasc = WGK[7] * (f_center - mean).abs();
    for j in 0..7 {
        resasc += WGK[j] * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let value = kronrod * half;
    let err = rescale_error((kronrod - gauss) * half, resabs * abs_half, resasc * abs_half);
    if !value.is_finite() {
        return Err(Error::Divergence(format!(
            "integrand is not integrable on [{a:e}, {b:e}] (non-finite panel value)"
        )));
    }
    Ok((value, err, resabs * abs_half))
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
    resabs: f64,
}

/// Absolute error floor: below this the estimate is dominated by subnormal
/// rounding, where f64 carries no relative precision, so further refinement
/// cannot help and the panel is accepted as converged.
const ERR_FLOOR: f64 = 1e-290;

/// Adaptive integration of `f` over the finite interval [a, b].
pub fn integrate<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, spec: &QuadratureSpec) -> Result<Estimate> {
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration bounds must be finite, got [{a}, {b}]")));
    }
    if a == b {
        return Ok(Estimate { value: 0.0, error: 0.0 });
    }
    let (v, e, r) = qk15(&f, a, b)?;
    let mut segments = vec![Segment { a, b, value: v, error: e, resabs: r }];
    let mut history: Vec<f64> = Vec::new();

    loop {
        let total: f64 = segments.iter().map(|s| s.value).sum();
        let total_err: f64 = segments.iter().map(|s| s.error).sum();
        let total_resabs: f64 = segments.iter().map(|s| s.resabs).sum();
        history.push(total.abs());

        if total.abs() > 1e290 {
            return Err(Error::Divergence(format!(
                "partial sums exceeded 1e290 on [{a:e}, {b:e}]"
            )));
        }
        // Converged, or hit the round-off floor where refinement cannot help.
        if total_err <= spec.rel_tol * total.abs()
            || total_err <= 100.0 * f64::EPSILON * total_resabs
            || total_err <= ERR_FLOOR
        {
            return Ok(Estimate { value: total, error: total_err });
        }
        if segments.len() >= spec.max_subdivisions {
            // Classify: monotone growth over the recent history means the
            // partial sums are tracking a divergent integral.
            let k = history.len();
            let recent_monotone = k >= 9
                && history[k - 8..].windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12));
            let grew = history[k - 1] > 50.0 * history[k / 2].max(f64::MIN_POSITIVE);
            if recent_monotone && grew {
                return Err(Error::Divergence(format!(
                    "partial sums grow without bound on [{a:e}, {b:e}] ({} subdivisions)",
                    segments.len()
                )));
            }
            return Err(Error::NonConvergence(format!(
                "tolerance {:.1e} not reached on [{a:e}, {b:e}] after {} subdivisions \
                 (error estimate {:.3e}, value {:.6e})",
                spec.rel_tol,
                segments.len(),
                total_err,
                total
            )));
        }
        // Bisect the segment with the largest error contribution.
        let worst = segments
            .iter()
            .enumerate()
            .max_by(|x, y| x.1.error.total_cmp(&y.1.error))
            .map(|(i, _)| i)
            .expect("non-empty segment list");
        let seg = segments.swap_remove(worst);
        let mid = 0.5 * (seg.a + seg.b);
        if mid <= seg.a || mid >= seg.b {
            // Interval no longer splittable in f64; accept what we have.
            segments.push(seg);
            let total: f64 = segments.iter().map(|s| s.value).sum();
            let total_err: f64 = segments.iter().map(|s| s.error).sum();
            return Ok(Estimate { value: total, error: total_err });
        }
        let (v1, e1, r1) = qk15(&f, seg.a, mid)?;
        let (v2, e2, r2) = qk15(&f, mid, seg.b)?;
        segments.push(Segment { a: seg.a, b: mid, value: v1, error: e1, resabs: r1 });
        segments.push(Segment { a: mid, b: seg.b, value: v2, error: e2, resabs: r2 });
    }
}

/// Integral of g(r) r^{n-1} over (0, ∞).
///
/// With the spec's log substitution the integrand becomes g(e^u) e^{nu} on
/// the whole real line; a base window is integrated adaptively and then
/// extended panel by panel on both sides until the panel masses are
/// negligible. Non-decaying panel masses are reported as divergence. Without
/// the substitution the half-line is mapped to (0, 1) via r = t/(1-t).
pub fn integrate_radial<F: Fn(f64) -> f64>(g: F, n: usize, spec: &QuadratureSpec) -> Result<Estimate> {
    if n < 1 {
        return Err(Error::Domain(format!("radial power needs n >= 1, got {n}")));
    }
    let nf = n as f64;
    if !spec.log_substitution {
        let mapped = |t: f64| {
            let r = t / (1.0 - t);
            let jac = 1.0 / ((1.0 - t) * (1.0 - t));
            g(r) * r.powf(nf - 1.0) * jac
        };
        return integrate(mapped, 0.0, 1.0, spec);
    }

    let integrand = |u: f64| g(u.exp()) * (nf * u).exp();
    const PANEL: f64 = 4.0;
    const BASE: f64 = 8.0;
    const MAX_PANELS: usize = 80;

    let core = integrate(&integrand, -BASE, BASE, spec)?;
    let mut value = core.value;
    let mut error = core.error;

    // Extend one side; returns (mass, error) contributions beyond `base`.
    let extend = |sign: f64, base: f64| -> Result<(f64, f64)> {
        let mut mass = 0.0;
        let mut err = 0.0;
        let mut below = 0usize;
        let mut last: Vec<f64> = Vec::new();
        for i in 0..MAX_PANELS {
            let lo = BASE + PANEL * i as f64;
            let (a, b) = if sign > 0.0 { (lo, lo + PANEL) } else { (-lo - PANEL, -lo) };
            let panel = integrate(&integrand, a, b, spec)?;
            mass += panel.value;
            err += panel.error;
            let scale = (base + mass).abs().max(f64::MIN_POSITIVE);
            let threshold = spec.rel_tol * scale / 16.0;
            let pv = panel.value.abs();
            last.push(pv);
            if pv <= threshold {
                below += 1;
                if below >= 2 {
                    return Ok((mass, err + pv));
                }
            } else {
                below = 0;
            }
            // Three consecutive panels that refuse to decay: the tail mass is
            // constant or growing, i.e. the integral diverges.
            let k = last.len();
            if k >= 3
                && last[k - 1] >= 0.999 * last[k - 2]
                && last[k - 2] >= 0.999 * last[k - 3]
                && last[k - 1] > 1e3 * threshold
            {
                return Err(Error::Divergence(format!(
                    "tail mass does not decay (sign {sign:+.0}): last panels {:.3e}, {:.3e}, {:.3e}",
                    last[k - 3],
                    last[k - 2],
                    last[k - 1]
                )));
            }
        }
        Err(Error::NonConvergence(format!(
            "tail of radial integral still significant after {MAX_PANELS} panels (sign {sign:+.0})"
        )))
    };

    let (m_hi, e_hi) = extend(1.0, value)?;
    value += m_hi;
    error += e_hi;
    let (m_lo, e_lo) = extend(-1.0, value)?;
    value += m_lo;
    error += e_lo;
    Ok(Estimate { value, error })
}
