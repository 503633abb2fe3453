//! Affine shape of landmark figures.
//!
//! A figure of N landmarks in ℝᵏ is reduced by the Helmert submatrix to an
//! n×k matrix Y (n = N − 1), removing translation.  The general linear
//! group GL_k acts on the right, Y ↦ Y·Eᵀ; with r(Y) = Y₁ᵀ (the transposed
//! top k×k block) the maximal invariant is the configuration Z = [I; V],
//! V = Y₂Y₁⁻¹, whose law under the matrix-spherical null is the same for
//! every trace-form generator.  With respect to Lebesgue measure on V the
//! configuration density is c·det(ZᵀΣ₀⁻¹Z)^{−n/2} with the closed-form
//! constant c = Γ_k(n/2) / (π^{k(n−k)/2} (det Σ₀)^{k/2} Γ_k(k/2)).

use crate::batch::{matrix_columns, SampleBatch, SamplerStats};
use crate::error::{Error, Result};
use crate::numerics::linalg::PosDefMatrix;
use crate::numerics::quad::Estimate;
use crate::numerics::{integrate_radial, ln_gamma, ln_multivariate_gamma, QuadratureSpec};
use crate::orbital::{
    scalar_group_integral, DensityGenerator, FrameworkCheckHooks, GroupIntegral, Multiplier,
    OrbitalModel,
};
use crate::rng::stream;
use crate::vspherical::{RadialSampler, RadialGenerator};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Gamma as GammaDist, StandardNormal};
use serde_json::{json, Map, Value};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

/// Relative determinant threshold below which the leading block of a
/// reduced figure counts as singular.
const SINGULARITY_REL_TOL: f64 = 1e-12;
/// Draws per deterministic sampling shard.
const SHARD: usize = 1024;
/// Maximum tolerated share of resampled (numerically degenerate) draws.
const RESAMPLE_BUDGET: f64 = 1e-3;

/// The (N−1)×N Helmert submatrix: orthonormal rows, each orthogonal to the
/// vector of ones, so left multiplication removes the translation part of a
/// landmark figure.
pub fn helmert_submatrix(n_landmarks: usize) -> Result<DMatrix<f64>> {
    if n_landmarks < 2 {
        return Err(Error::InvalidParameter(format!(
            "Helmert reduction needs at least 2 landmarks, got {n_landmarks}"
        )));
    }
    let n = n_landmarks - 1;
    let mut l = DMatrix::zeros(n, n_landmarks);
    for j in 1..=n {
        let scale = 1.0 / ((j * (j + 1)) as f64).sqrt();
        for i in 0..j {
            l[(j - 1, i)] = scale;
        }
        l[(j - 1, j)] = -(j as f64) * scale;
    }
    Ok(l)
}

/// A figure of N labelled landmarks in ℝᵏ (one row per landmark).
#[derive(Debug, Clone)]
pub struct LandmarkFigure {
    points: DMatrix<f64>,
}

impl LandmarkFigure {
    /// Requires N ≥ k + 2 so the reduced figure has a nonsingular leading
    /// block plus at least one free row.
    pub fn new(points: DMatrix<f64>) -> Result<Self> {
        let (n_landmarks, k) = points.shape();
        if k == 0 {
            return Err(Error::InvalidParameter("landmarks need dimension ≥ 1".into()));
        }
        if n_landmarks < k + 2 {
            return Err(Error::InvalidParameter(format!(
                "affine shape needs at least k + 2 = {} landmarks in dimension {k}, got {n_landmarks}",
                k + 2
            )));
        }
        if !points.iter().all(|c| c.is_finite()) {
            return Err(Error::Domain("landmark coordinates must be finite".into()));
        }
        Ok(Self { points })
    }

    /// Parse a CSV table with one landmark per row; blank lines and lines
    /// starting with `#` are skipped, and a non-numeric first row is treated
    /// as a header.
    pub fn from_csv_str(text: &str) -> Result<Self> {
        let mut rows: Vec<Vec<f64>> = Vec::new();
        let mut width = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: std::result::Result<Vec<f64>, _> =
                fields.iter().map(|f| f.parse::<f64>()).collect();
            match parsed {
                Ok(vals) => {
                    if *width.get_or_insert(vals.len()) != vals.len() {
                        return Err(Error::Domain(format!(
                            "inconsistent column count at line {}: {} vs {}",
                            lineno + 1,
                            vals.len(),
                            width.unwrap()
                        )));
                    }
                    rows.push(vals);
                }
                Err(_) if rows.is_empty() && width.is_none() => {
                    // Header row: ignore.
                }
                Err(e) => {
                    return Err(Error::Domain(format!(
                        "unparseable landmark value at line {}: {e}",
                        lineno + 1
                    )));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::Domain("no landmark rows found".into()));
        }
        let k = rows[0].len();
        let flat: Vec<f64> = rows.iter().flatten().copied().collect();
        Self::new(DMatrix::from_row_slice(rows.len(), k, &flat))
    }

    pub fn n_landmarks(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn points(&self) -> &DMatrix<f64> {
        &self.points
    }

    /// The Helmert-reduced (N−1)×k matrix of translation-free coordinates.
    pub fn helmert_reduced(&self) -> Result<DMatrix<f64>> {
        Ok(helmert_submatrix(self.n_landmarks())? * &self.points)
    }
}

/// Whether the leading k×k block of a reduced figure is safely invertible:
/// |det Y₁| must exceed a relative threshold scaled by the block's size.
fn leading_block_regular(y1: &DMatrix<f64>) -> bool {
    let k = y1.nrows();
    let scale = (y1.norm() / (k as f64).sqrt()).max(1e-300);
    y1.determinant().abs() > SINGULARITY_REL_TOL * scale.powi(k as i32)
}

/// Configuration coordinates of a reduced figure: Z = [I; V] with
/// V = Y₂Y₁⁻¹.
#[derive(Debug, Clone)]
pub struct Configuration {
    v: DMatrix<f64>,
    z: DMatrix<f64>,
}

impl Configuration {
    /// The free (n−k)×k block.
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// The full n×k configuration matrix with identity top block.
    pub fn z(&self) -> &DMatrix<f64> {
        &self.z
    }

    /// Rebuild the configuration from a free block.
    pub fn from_v(v: DMatrix<f64>) -> Self {
        let k = v.ncols();
        let n = v.nrows() + k;
        let mut z = DMatrix::zeros(n, k);
        z.view_mut((0, 0), (k, k)).copy_from(&DMatrix::identity(k, k));
        z.view_mut((k, 0), (n - k, k)).copy_from(&v);
        Self { v, z }
    }
}

/// Compute the configuration of a reduced figure, checking that the leading
/// block is numerically invertible.
pub fn configuration_coords(y: &DMatrix<f64>) -> Result<Configuration> {
    let (n, k) = y.shape();
    if k == 0 || n <= k {
        return Err(Error::InvalidParameter(format!(
            "reduced figure must have more rows than columns, got {n}×{k}"
        )));
    }
    if !y.iter().all(|c| c.is_finite()) {
        return Err(Error::Domain("reduced figure contains non-finite entries".into()));
    }
    let y1 = y.view((0, 0), (k, k)).into_owned();
    if !leading_block_regular(&y1) {
        return Err(Error::Singular(format!(
            "leading {k}×{k} block of the reduced figure is numerically singular \
             (|det| = {:.3e})",
            y1.determinant().abs()
        )));
    }
    let y2 = y.view((k, 0), (n - k, k)).into_owned();
    // V = Y₂Y₁⁻¹ through a solve with Y₁ᵀ.
    let lu = y1.transpose().lu();
    let vt = lu
        .solve(&y2.transpose())
        .ok_or_else(|| Error::Singular("leading block solve failed".into()))?;
    Ok(Configuration::from_v(vt.transpose()))
}

/// Closed-form normalizing constant of the configuration density with
/// respect to Lebesgue measure on V:
/// c = Γ_k(n/2) / (π^{k(n−k)/2} (det Σ₀)^{k/2} Γ_k(k/2)).
pub fn config_normalizing_constant(sigma0: &PosDefMatrix, n: usize, k: usize) -> Result<f64> {
    if sigma0.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "row-covariance has dimension {}, expected n = {n}",
            sigma0.dim()
        )));
    }
    if k == 0 || n <= k {
        return Err(Error::InvalidParameter(format!("need 1 ≤ k < n, got k = {k}, n = {n}")));
    }
    let ln_c = ln_multivariate_gamma(k, n as f64 / 2.0)?
        - (k * (n - k)) as f64 / 2.0 * PI.ln()
        - k as f64 / 2.0 * sigma0.ln_det()
        - ln_multivariate_gamma(k, k as f64 / 2.0)?;
    Ok(ln_c.exp())
}

/// Generator-free configuration density c·det(ZᵀΣ₀⁻¹Z)^{−n/2} evaluated at
/// a free block V, with respect to Lebesgue measure dV.
pub fn config_density(v: &DMatrix<f64>, sigma0: &PosDefMatrix, n: usize) -> Result<f64> {
    let k = v.ncols();
    if v.nrows() + k != n {
        return Err(Error::DimensionMismatch(format!(
            "free block is {}×{k}, inconsistent with n = {n}",
            v.nrows()
        )));
    }
    let c = config_normalizing_constant(sigma0, n, k)?;
    let z = Configuration::from_v(v.clone());
    let gram = gram_with(sigma0, z.z());
    let det = gram.determinant();
    if !(det > 0.0) {
        return Err(Error::Domain(format!("configuration Gram matrix not positive: det {det}")));
    }
    Ok(c * det.powf(-(n as f64) / 2.0))
}

/// ZᵀΣ₀⁻¹Z for an n×k configuration.
fn gram_with(sigma0: &PosDefMatrix, z: &DMatrix<f64>) -> DMatrix<f64> {
    let s_inv_z = sigma0.solve_mat(z);
    z.transpose() * s_inv_z
}

// ---------------------------------------------------------------------------
// Trace-form generators
// ---------------------------------------------------------------------------

/// A scalar profile h(t) defining the trace-form generator
/// f(A) = h(tr(AᵀA)) on GL_k; the same profiles parameterize the built-in
/// matrix-spherical observation families.
#[derive(Clone)]
pub struct TraceProfile {
    eval: std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    label: String,
}

impl TraceProfile {
    pub fn new(label: impl Into<String>, eval: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self { eval: std::sync::Arc::new(eval), label: label.into() }
    }

    pub fn eval(&self, t: f64) -> f64 {
        (self.eval)(t)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Gaussian profile e^{−t/2}.
    pub fn gaussian() -> Self {
        Self::new("gaussian", |t| (-0.5 * t).exp())
    }

    /// Exponential-power profile e^{−t^{q/2}/q}; q = 2 recovers the
    /// Gaussian.
    pub fn exp_power(q: f64) -> Result<Self> {
        if !(q > 0.0) || !q.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "exponential-power shape must be positive, got {q}"
            )));
        }
        Ok(Self::new(format!("exp-power-q{q}"), move |t| (-t.powf(q / 2.0) / q).exp()))
    }

    /// Student-type profile (1 + t/d)^{−(p+d)/2} where p is the total
    /// dimension nk of the matrix family.
    pub fn student(p: usize, d: f64) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidParameter("student profile needs dimension ≥ 1".into()));
        }
        if !(d > 0.0) || !d.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "student tail parameter must be positive, got {d}"
            )));
        }
        let expo = -0.5 * (p as f64 + d);
        Ok(Self::new(format!("student-d{d}"), move |t| (1.0 + t / d).powf(expo)))
    }

    /// The radial profile ρ ↦ h(ρ²) viewed as a generator on ℝ_{>0} in
    /// dimension p = nk (used by the matrix sampler's radius law).
    pub fn radial(&self) -> RadialGenerator {
        let h = self.clone();
        RadialGenerator::new(self.label.clone(), move |rho| h.eval(rho * rho))
    }

    /// The built-in profile set for a family of total dimension p = nk.
    pub fn builtin_set(p: usize) -> Result<Vec<Self>> {
        Ok(vec![
            Self::gaussian(),
            Self::exp_power(1.0)?,
            Self::exp_power(4.0)?,
            Self::student(p, 3.0)?,
        ])
    }

    /// Look a built-in profile up by label.
    pub fn builtin(label: &str, p: usize) -> Result<Self> {
        match label {
            "gaussian" => Ok(Self::gaussian()),
            "exp-power-q1" => Self::exp_power(1.0),
            "exp-power-q4" => Self::exp_power(4.0),
            "student-d3" => Self::student(p, 3.0),
            other => Err(Error::InvalidParameter(format!(
                "unknown generator '{other}' (expected one of gaussian, exp-power-q1, exp-power-q4, student-d3)"
            ))),
        }
    }
}

/// Build the normalized trace-form generator on GL_k for a matrix family
/// with n rows, k columns and row-covariance Σ₀: the scale
/// (det Σ₀)^{k/2}·ω_{nk}·∫h(ρ²)ρ^{nk−1}dρ makes the induced observation
/// density integrate to one.
pub fn matrix_generator(
    profile: &TraceProfile,
    sigma0: &PosDefMatrix,
    n: usize,
    k: usize,
    spec: &QuadratureSpec,
) -> Result<DensityGenerator<DMatrix<f64>>> {
    if sigma0.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "row-covariance has dimension {}, expected n = {n}",
            sigma0.dim()
        )));
    }
    if k == 0 || n <= k {
        return Err(Error::InvalidParameter(format!("need 1 ≤ k < n, got k = {k}, n = {n}")));
    }
    let p = n * k;
    let h = profile.clone();
    let radial =
        integrate_radial(|rho| h.eval(rho * rho) * rho.powi(p as i32 - 1), 1, spec)?.value;
    let ln_scale = (k as f64 / 2.0) * sigma0.ln_det()
        + (p as f64 / 2.0) * PI.ln()
        + std::f64::consts::LN_2
        - ln_gamma(p as f64 / 2.0)?
        + radial.ln();
    let scale = ln_scale.exp();
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::Domain(format!(
            "normalization for trace profile '{}' is not positive finite: {scale}",
            profile.label()
        )));
    }
    Ok(DensityGenerator::new(profile.label(), move |a: &DMatrix<f64>| {
        let t = a.iter().map(|&x| x * x).sum::<f64>();
        h.eval(t) / scale
    }))
}

/// Power multiplier |det E|^a on GL_k, the relatively invariant prior
/// densities of the matrix scale group.
pub fn glk_power_multiplier(a: f64) -> Multiplier<DMatrix<f64>> {
    Multiplier::new(format!("m(E)=|det E|^{a}"), move |e: &DMatrix<f64>| {
        e.determinant().abs().powf(a)
    })
}

/// Standard t₃ density, the entrywise proposal of the GL_k group integral.
fn t3_pdf(x: f64) -> f64 {
    2.0 / (PI * 3.0f64.sqrt()) * (1.0 + x * x / 3.0).powi(-2)
}

/// Monte Carlo integral over GL_k against the left Haar measure
/// μ_G(dE) = |det E|^{−k} dE, with an entrywise-t₃ importance proposal
/// (heavy enough for every built-in profile).  Draws with numerically
/// vanishing determinant are skipped; determinism follows from the spec
/// seed.
pub fn glk_group_integral(k: usize) -> GroupIntegral<DMatrix<f64>> {
    Box::new(move |phi, spec| {
        let samples = spec.mc_samples.max(1000);
        let mut rng = stream(spec.seed, 0);
        let t3 = rand_distr::StudentT::new(3.0)
            .map_err(|e| Error::InvalidParameter(format!("student proposal: {e}")))?;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        let mut used = 0usize;
        for _ in 0..samples {
            let e = DMatrix::from_fn(k, k, |_, _| {
                let draw: f64 = t3.sample(&mut rng);
                draw
            });
            let det = e.determinant().abs();
            let scale = (e.norm() / (k as f64).sqrt()).max(1e-300);
            if det <= 1e-9 * scale.powi(k as i32) {
                // Negligible-measure sliver near the singular set; its
                // integrand vanishes for every χ_G-weighted generator.
                continue;
            }
            let q: f64 = e.iter().map(|&x| t3_pdf(x)).product();
            let w = phi(&e) * det.powi(-(k as i32)) / q;
            if !w.is_finite() {
                return Err(Error::Divergence(
                    "non-finite importance weight in GL_k integral".into(),
                ));
            }
            sum += w;
            sumsq += w * w;
            used += 1;
        }
        if used == 0 {
            return Err(Error::NonConvergence("all GL_k proposals were rejected".into()));
        }
        // Skipped draws contribute zero weight to preserve unbiasedness.
        let mean = sum / samples as f64;
        let var = (sumsq / samples as f64 - mean * mean).max(0.0);
        Ok(Estimate { value: mean, error: (var / samples as f64).sqrt() })
    })
}

// ---------------------------------------------------------------------------
// Orbital model
// ---------------------------------------------------------------------------

/// The affine-shape orbital model on reduced figures Y ∈ ℝ^{n×k}:
/// H = (ℝ^{n×k}, +), G = GL_k acting by Y ↦ Y·Eᵀ, r(Y) = Y₁ᵀ,
/// χ_G(E) = |det E|ⁿ, Δ_G = 1.
pub fn affine_model(
    sigma0: &PosDefMatrix,
    n: usize,
    k: usize,
) -> Result<OrbitalModel<DMatrix<f64>, DMatrix<f64>, DMatrix<f64>>> {
    if sigma0.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "row-covariance has dimension {}, expected n = {n}",
            sigma0.dim()
        )));
    }
    if k == 0 || n <= k {
        return Err(Error::InvalidParameter(format!("need 1 ≤ k < n, got k = {k}, n = {n}")));
    }
    let s0 = sigma0.clone();
    Ok(OrbitalModel {
        label: format!("affine-shape(n={n},k={k})"),
        r_map: Box::new(move |y: &DMatrix<f64>| {
            let y1 = y.view((0, 0), (k, k)).into_owned();
            if !leading_block_regular(&y1) {
                return Err(Error::ExcludedPoint(
                    "leading block of the reduced figure is singular".into(),
                ));
            }
            Ok(y1.transpose())
        }),
        s_map: Box::new(move |z: &DMatrix<f64>| {
            let gram = gram_with(&s0, z);
            // Z has full column rank by construction, so the Gram matrix is
            // positive definite.
            PosDefMatrix::new(gram)
                .expect("configuration Gram matrix must be positive definite")
                .sqrt_lower()
                .clone()
        }),
        chi_h: Box::new(|_m: &DMatrix<f64>| 1.0),
        chi_g: Box::new(move |e: &DMatrix<f64>| e.determinant().abs().powi(n as i32)),
        delta_g: Box::new(|_e| 1.0),
        h_action: Box::new(|m: &DMatrix<f64>, y: &DMatrix<f64>| y + m),
        h_inverse: Box::new(|m: &DMatrix<f64>| -m),
        h_compose: Box::new(|a: &DMatrix<f64>, b: &DMatrix<f64>| a + b),
        g_action: Box::new(|e: &DMatrix<f64>, y: &DMatrix<f64>| y * e.transpose()),
        g_inverse: Box::new(|e: &DMatrix<f64>| {
            e.clone().try_inverse().expect("group element must be invertible")
        }),
        g_compose: Box::new(|a: &DMatrix<f64>, b: &DMatrix<f64>| a * b),
        membership: Box::new(move |y: &DMatrix<f64>| {
            y.shape() == (n, k)
                && y.iter().all(|c| c.is_finite())
                && leading_block_regular(&y.view((0, 0), (k, k)).into_owned())
        }),
        group_integral: glk_group_integral(k),
    })
}

/// Marginal posterior kernel for the matrix location M under a relatively
/// invariant GL_k prior with multiplier m(E) = |det E|^a:
/// |det(Y₁ − M₁)|^{a−n} · det(ZᵀΣ₀⁻¹Z)^{(a−n)/2} with Z the configuration
/// of Y − M.
pub fn affine_posterior_kernel(
    y: &DMatrix<f64>,
    m_loc: &DMatrix<f64>,
    sigma0: &PosDefMatrix,
    a: f64,
) -> Result<f64> {
    let (n, k) = y.shape();
    if m_loc.shape() != (n, k) {
        return Err(Error::DimensionMismatch(format!(
            "location is {:?}, observation is {n}×{k}",
            m_loc.shape()
        )));
    }
    if sigma0.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "row-covariance has dimension {}, expected n = {n}",
            sigma0.dim()
        )));
    }
    let centered = y - m_loc;
    let cfg = configuration_coords(&centered).map_err(|e| match e {
        Error::Singular(msg) => Error::ExcludedPoint(msg),
        other => other,
    })?;
    let y1 = centered.view((0, 0), (k, k)).into_owned();
    let det_r = y1.determinant().abs();
    let gram_det = gram_with(sigma0, cfg.z()).determinant();
    if !(gram_det > 0.0) {
        return Err(Error::Domain(format!("configuration Gram determinant not positive: {gram_det}")));
    }
    Ok(det_r.powf(a - n as f64) * gram_det.powf(0.5 * (a - n as f64)))
}

// ---------------------------------------------------------------------------
// Sampling
// ---------------------------------------------------------------------------

/// Parameters of the matrix model: location M ∈ ℝ^{n×k} and scale E ∈ GL_k.
#[derive(Debug, Clone)]
pub struct MatrixModelParams {
    m: DMatrix<f64>,
    e: DMatrix<f64>,
}

impl MatrixModelParams {
    pub fn new(m: DMatrix<f64>, e: DMatrix<f64>) -> Result<Self> {
        let (n, k) = m.shape();
        if e.shape() != (k, k) {
            return Err(Error::DimensionMismatch(format!(
                "scale must be {k}×{k} to match a {n}×{k} location, got {:?}",
                e.shape()
            )));
        }
        if !m.iter().all(|c| c.is_finite()) || !e.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("parameters must be finite".into()));
        }
        if !leading_block_regular(&e) {
            return Err(Error::InvalidParameter("scale matrix is numerically singular".into()));
        }
        Ok(Self { m, e })
    }

    /// Identity-scale parameters at a given location.
    pub fn location(m: DMatrix<f64>) -> Result<Self> {
        let k = m.ncols();
        let e = DMatrix::identity(k, k);
        Self::new(m, e)
    }

    /// Use the lower Cholesky factor of a scatter matrix Φ = EEᵀ as the
    /// scale.
    pub fn from_scatter(m: DMatrix<f64>, phi: &PosDefMatrix) -> Result<Self> {
        Self::new(m, phi.sqrt_lower().clone())
    }

    pub fn m(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn e(&self) -> &DMatrix<f64> {
        &self.e
    }
}

/// Draw reduced figures Y = M + Σ₀^{1/2}·U·Eᵀ where vec(U) is spherical in
/// ℝ^{nk} with the radius law of the given profile.  Draws whose leading
/// block is numerically singular are resampled and counted; exceeding the
/// resample budget is an error.
pub fn sample_matrix_figures(
    count: usize,
    params: &MatrixModelParams,
    sigma0: &PosDefMatrix,
    profile: &TraceProfile,
    seed: u64,
    threads: usize,
) -> Result<(Vec<DMatrix<f64>>, SamplerStats)> {
    let (n, k) = params.m.shape();
    if sigma0.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "row-covariance has dimension {}, expected n = {n}",
            sigma0.dim()
        )));
    }
    let p = n * k;
    let rad = RadialSampler::build(&profile.radial(), p, &QuadratureSpec::default())?;
    let sqrt_sigma = sigma0.sqrt_lower().clone();
    let et = params.e.transpose();

    let n_shards = count.div_ceil(SHARD).max(1);
    let run_shard = |i: usize| -> Result<(Vec<DMatrix<f64>>, u64)> {
        let mut rng = stream(seed, i as u64);
        let lo = i * SHARD;
        let hi = ((i + 1) * SHARD).min(count);
        let mut out = Vec::with_capacity(hi - lo);
        let mut resampled = 0u64;
        for _ in lo..hi {
            loop {
                let rho = rad.sample(&mut rng);
                let mut w = DMatrix::from_fn(n, k, |_, _| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g
                });
                let norm = w.norm();
                if norm < 1e-100 {
                    resampled += 1;
                    continue;
                }
                w *= rho / norm;
                let y = &params.m + &sqrt_sigma * w * &et;
                if leading_block_regular(&y.view((0, 0), (k, k)).into_owned()) {
                    out.push(y);
                    break;
                }
                resampled += 1;
                if resampled as usize > count / 100 + 100 {
                    return Err(Error::ResampleBudget {
                        rate: resampled as f64 / (resampled as f64 + out.len() as f64),
                    });
                }
            }
        }
        Ok((out, resampled))
    };

    let workers = threads.max(1).min(n_shards);
    let mut outs: Vec<Option<Result<(Vec<DMatrix<f64>>, u64)>>> =
        (0..n_shards).map(|_| None).collect();
    if workers <= 1 {
        for (i, slot) in outs.iter_mut().enumerate() {
            *slot = Some(run_shard(i));
        }
    } else {
        let next = AtomicUsize::new(0);
        let (tx, rx) = mpsc::channel();
        std::thread::scope(|scope| {
            let run = &run_shard;
            let next = &next;
            for _ in 0..workers {
                let tx = tx.clone();
                scope.spawn(move || loop {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    if i >= n_shards {
                        break;
                    }
                    if tx.send((i, run(i))).is_err() {
                        break;
                    }
                });
            }
        });
        drop(tx);
        for (i, out) in rx {
            outs[i] = Some(out);
        }
    }

    let mut figures = Vec::with_capacity(count);
    let mut stats = SamplerStats::default();
    for out in outs {
        let (mut figs, resampled) = out.expect("all shards executed")?;
        stats.resampled += resampled;
        stats.proposals += figs.len() as u64 + resampled;
        stats.accepted += figs.len() as u64;
        figures.append(&mut figs);
    }
    if count > 1000 && (stats.resampled as f64) > RESAMPLE_BUDGET * count as f64 {
        return Err(Error::ResampleBudget { rate: stats.resampled as f64 / count as f64 });
    }
    Ok((figures, stats))
}

/// Draw reduced figures into a tabular batch (rows flattened row-major).
pub fn sample_matrix_model(
    count: usize,
    params: &MatrixModelParams,
    sigma0: &PosDefMatrix,
    profile: &TraceProfile,
    seed: u64,
    threads: usize,
) -> Result<SampleBatch> {
    let (n, k) = params.m.shape();
    let (figures, stats) = sample_matrix_figures(count, params, sigma0, profile, seed, threads)?;
    let meta: Map<String, Value> = match json!({
        "model": "affine-shape",
        "generator": profile.label(),
        "n": n,
        "k": k,
        "m": params.m.iter().copied().collect::<Vec<f64>>(),
        "e": params.e.iter().copied().collect::<Vec<f64>>(),
    }) {
        Value::Object(map) => map,
        _ => unreachable!(),
    };
    let mut batch = SampleBatch::new(seed, meta, matrix_columns(n, k));
    for y in figures {
        let mut row = Vec::with_capacity(n * k);
        for i in 0..n {
            for j in 0..k {
                row.push(y[(i, j)]);
            }
        }
        batch.push(row);
    }
    batch.merge_stats(stats);
    Ok(batch)
}

/// Monte Carlo check of the configuration normalization: integrates
/// det(ZᵀΣ₀⁻¹Z)^{−n/2} over vec(V) ∈ ℝ^{(n−k)k} with a radial
/// multivariate-t proposal (ν = 1/2) whose polynomial tails dominate the
/// integrand's.  The product with the closed-form constant should be 1.
pub fn config_normalization_mc(
    sigma0: &PosDefMatrix,
    n: usize,
    k: usize,
    samples: usize,
    seed: u64,
) -> Result<Estimate> {
    if k == 0 || n <= k {
        return Err(Error::InvalidParameter(format!("need 1 ≤ k < n, got k = {k}, n = {n}")));
    }
    if sigma0.dim() != n {
        return Err(Error::DimensionMismatch(format!(
            "row-covariance has dimension {}, expected n = {n}",
            sigma0.dim()
        )));
    }
    let p = (n - k) * k;
    let nu = 0.5;
    let chisq = GammaDist::new(nu / 2.0, 2.0)
        .map_err(|e| Error::InvalidParameter(format!("chi-square mixing draw: {e}")))?;
    // Multivariate-t log normalizing constant.
    let ln_cq = ln_gamma((nu + p as f64) / 2.0)?
        - ln_gamma(nu / 2.0)?
        - (p as f64 / 2.0) * ((nu * PI).ln());
    let mut rng = stream(seed, 0);
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..samples {
        let z: Vec<f64> = (0..p)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                g
            })
            .collect();
        let s: f64 = chisq.sample(&mut rng);
        let scale = (nu / s.max(1e-300)).sqrt();
        let w: Vec<f64> = z.iter().map(|&c| c * scale).collect();
        let norm_sq: f64 = w.iter().map(|&c| c * c).sum();
        let ln_q = ln_cq - 0.5 * (nu + p as f64) * (1.0 + norm_sq / nu).ln();
        let v = DMatrix::from_row_slice(n - k, k, &w);
        let z_cfg = Configuration::from_v(v);
        let det = gram_with(sigma0, z_cfg.z()).determinant();
        if !(det > 0.0) {
            continue;
        }
        let ln_target = -(n as f64) / 2.0 * det.ln();
        let weight = (ln_target - ln_q).exp();
        sum += weight;
        sumsq += weight * weight;
    }
    let mean = sum / samples as f64;
    let var = (sumsq / samples as f64 - mean * mean).max(0.0);
    Ok(Estimate { value: mean, error: (var / samples as f64).sqrt() })
}

// ---------------------------------------------------------------------------
// Scalar (k = 1) model over the scale group
// ---------------------------------------------------------------------------

/// The k = 1 reduction of the affine model with the group restricted to
/// ℝ_{>0}: r(y) = |y₁|, s(z) = (zᵀΣ₀⁻¹z)^{1/2}, χ_G(g) = gⁿ.  This is an
/// alternative orbital decomposition of the elliptical location–scale
/// family; its cross section is the pair of hyperplanes {z₁ = ±1}.
pub fn affine_scalar_model(sigma0: &PosDefMatrix) -> OrbitalModel<DVector<f64>, DVector<f64>, f64> {
    let n = sigma0.dim();
    let s0 = sigma0.clone();
    OrbitalModel {
        label: format!("affine-scalar(n={n})"),
        r_map: Box::new(|y: &DVector<f64>| {
            if y[0] == 0.0 {
                return Err(Error::ExcludedPoint(
                    "first coordinate vanishes; the scalar section is undefined".into(),
                ));
            }
            Ok(y[0].abs())
        }),
        s_map: Box::new(move |z: &DVector<f64>| s0.inv_quad_form(z).sqrt()),
        chi_h: Box::new(|_h| 1.0),
        chi_g: Box::new(move |g: &f64| g.powi(n as i32)),
        delta_g: Box::new(|_g| 1.0),
        h_action: Box::new(|h: &DVector<f64>, y: &DVector<f64>| y + h),
        h_inverse: Box::new(|h: &DVector<f64>| -h),
        h_compose: Box::new(|a: &DVector<f64>, b: &DVector<f64>| a + b),
        g_action: Box::new(|g: &f64, y: &DVector<f64>| y * *g),
        g_inverse: Box::new(|g: &f64| 1.0 / g),
        g_compose: Box::new(|a: &f64, b: &f64| a * b),
        membership: Box::new(move |y: &DVector<f64>| {
            y.len() == n && y.iter().all(|c| c.is_finite()) && y[0] != 0.0
        }),
        group_integral: scalar_group_integral(),
    }
}

/// Randomized-check hooks for the affine-shape model.
pub fn framework_hooks(n: usize, k: usize) -> FrameworkCheckHooks<DMatrix<f64>, DMatrix<f64>, DMatrix<f64>> {
    let draw_glk = move |rng: &mut rand_chacha::ChaCha8Rng| loop {
        let e = DMatrix::from_fn(k, k, |i, j| {
            let g: f64 = StandardNormal.sample(rng);
            if i == j {
                1.0 + 0.5 * g
            } else {
                0.5 * g
            }
        });
        if e.determinant().abs() > 0.2 {
            return e;
        }
    };
    FrameworkCheckHooks {
        sample_point: Box::new(move |rng: &mut rand_chacha::ChaCha8Rng| loop {
            let y = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let y1 = y.view((0, 0), (k, k)).into_owned();
            if y1.determinant().abs() > 0.1 {
                return y;
            }
        }),
        sample_g: Box::new(draw_glk),
        sample_h: Box::new(move |rng| DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * 2.0 - 1.0)),
        point_rel_diff: Box::new(|a: &DMatrix<f64>, b: &DMatrix<f64>| {
            (a - b).norm() / b.norm().max(1e-300)
        }),
        group_rel_diff: Box::new(|a: &DMatrix<f64>, b: &DMatrix<f64>| {
            (a - b).norm() / b.norm().max(1e-300)
        }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbital::{check_framework, IntegralSpec, ParamPoint};

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn helmert_rows_orthonormal_and_centered() {
        for nl in [3usize, 5, 8] {
            let l = helmert_submatrix(nl).unwrap();
            let gram = &l * l.transpose();
            assert!((gram - DMatrix::identity(nl - 1, nl - 1)).norm() < 1e-12);
            let ones = DVector::from_element(nl, 1.0);
            assert!((&l * ones).norm() < 1e-12);
        }
        // N = 3 against the hand-computed Gram–Schmidt basis.
        let l = helmert_submatrix(3).unwrap();
        let s2 = 2.0f64.sqrt();
        let s6 = 6.0f64.sqrt();
        let want =
            DMatrix::from_row_slice(2, 3, &[1.0 / s2, -1.0 / s2, 0.0, 1.0 / s6, 1.0 / s6, -2.0 / s6]);
        assert!((l - want).norm() < 1e-14);
    }

    #[test]
    fn landmark_csv_roundtrip() {
        let text = "# triangle plus one\nx,y\n0.0,0.0\n1.0,0.2\n0.3,1.1\n-0.5,0.7\n";
        let fig = LandmarkFigure::from_csv_str(text).unwrap();
        assert_eq!(fig.n_landmarks(), 4);
        assert_eq!(fig.dim(), 2);
        let y = fig.helmert_reduced().unwrap();
        assert_eq!(y.shape(), (3, 2));
        // Too few landmarks for the dimension.
        let bad = "0,0\n1,0\n0,1\n";
        assert!(LandmarkFigure::from_csv_str(bad).is_err());
    }

    #[test]
    fn configuration_is_right_glk_invariant() {
        let mut rng = stream(31, 0);
        for _ in 0..200 {
            let y = DMatrix::from_fn(4, 2, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            if !leading_block_regular(&y.view((0, 0), (2, 2)).into_owned()) {
                continue;
            }
            let e = DMatrix::from_fn(2, 2, |i, j| {
                if i == j {
                    1.0 + rng.random::<f64>()
                } else {
                    rng.random::<f64>() - 0.5
                }
            });
            if e.determinant().abs() < 0.3 {
                continue;
            }
            let cfg = configuration_coords(&y).unwrap();
            let cfg2 = configuration_coords(&(&y * e.transpose())).unwrap();
            assert!(
                (cfg.v() - cfg2.v()).norm() < 1e-9 * cfg.v().norm().max(1.0),
                "V changed under right GL action"
            );
        }
    }

    #[test]
    fn config_density_is_cauchy_for_k1_n2() {
        // k = 1, n = 2, Σ₀ = I: the configuration coordinate v has the
        // standard Cauchy law.
        let s = PosDefMatrix::identity(2);
        for v in [-2.0f64, -0.3, 0.0, 1.5] {
            let vm = DMatrix::from_element(1, 1, v);
            let got = config_density(&vm, &s, 2).unwrap();
            let want = 1.0 / (PI * (1.0 + v * v));
            assert!(((got - want) / want).abs() < 1e-12, "v={v}: {got} vs {want}");
        }
    }

    #[test]
    fn config_constant_frozen_4_2() {
        let c = config_normalizing_constant(&PosDefMatrix::identity(4), 4, 2).unwrap();
        let want = 1.0 / (2.0 * PI * PI);
        assert!(((c - want) / want).abs() < 1e-12, "c = {c}");
    }

    #[test]
    fn config_normalization_mc_matches_constant() {
        // ∫ det(ZᵀΣ₀⁻¹Z)^{−n/2} dV should equal 1/c.
        let s = PosDefMatrix::identity(4);
        let est = config_normalization_mc(&s, 4, 2, 200_000, 99).unwrap();
        let want = 2.0 * PI * PI;
        assert!(
            ((est.value - want) / want).abs() < 0.05,
            "integral {} vs {want} (se {})",
            est.value,
            est.error
        );
        // Non-identity row covariance: 1/c scales with det Σ₀.
        let s = PosDefMatrix::from_diagonal(&[4.0, 1.0, 1.0, 1.0]).unwrap();
        let est = config_normalization_mc(&s, 4, 2, 200_000, 100).unwrap();
        let want = 2.0 * PI * PI * 4.0;
        assert!(
            ((est.value - want) / want).abs() < 0.05,
            "integral {} vs {want}",
            est.value
        );
    }

    #[test]
    fn gaussian_matrix_density_closed_form() {
        // At M = 0, E = I the sampling density is the matrix normal
        // (2π)^{−nk/2} (det Σ₀)^{−k/2} e^{−tr(YᵀΣ₀⁻¹Y)/2}.
        let (n, k) = (3usize, 1usize);
        let s = PosDefMatrix::from_diagonal(&[2.0, 1.0, 0.5]).unwrap();
        let model = affine_model(&s, n, k).unwrap();
        let f = matrix_generator(&TraceProfile::gaussian(), &s, n, k, &spec()).unwrap();
        let theta = ParamPoint::new(DMatrix::zeros(n, k), DMatrix::identity(k, k));
        let mut rng = stream(5, 0);
        for _ in 0..20 {
            let y = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * 3.0 - 1.5);
            if !model.in_domain(&y) {
                continue;
            }
            let got = model.sampling_density(&y, &theta, &f).unwrap();
            let tr = {
                let siy = s.solve_mat(&y);
                (y.transpose() * siy)[(0, 0)]
            };
            let want = (2.0 * PI).powf(-(n as f64) * (k as f64) / 2.0)
                * s.det().powf(-(k as f64) / 2.0)
                * (-0.5 * tr).exp();
            assert!(((got - want) / want).abs() < 1e-10, "got {got:e} want {want:e}");
        }
    }

    #[test]
    fn group_integral_matches_quadrature_k1() {
        // For k = 1 the GL₁ integral reduces to 2·∫φ(e)e^{−1}de over e > 0
        // for even φ; compare the importance-sampling estimate against
        // quadrature for the Gaussian trace profile with χ_G(e) = |e|³.
        let phi = |e: &DMatrix<f64>| {
            let x = e[(0, 0)];
            (-0.5 * x * x).exp() * x.abs().powi(3)
        };
        let integral = glk_group_integral(1);
        let est = integral(&phi, &IntegralSpec::monte_carlo(400_000, 7)).unwrap();
        let want = 2.0
            * integrate_radial(|e| (-0.5 * e * e).exp() * e.powi(3) / e, 1, &spec())
                .unwrap()
                .value;
        assert!(
            ((est.value - want) / want).abs() < 0.02,
            "IS {} vs quadrature {want} (se {})",
            est.value,
            est.error
        );
    }

    #[test]
    fn group_integral_constant_matches_config_constant_4_2() {
        // Theorem-side constant c = ∫ f(E) χ_G(E) μ_G(dE) for the Gaussian
        // generator at (n, k) = (4, 2), Σ₀ = I equals the closed-form
        // configuration constant 1/(2π²).
        let s = PosDefMatrix::identity(4);
        let model = affine_model(&s, 4, 2).unwrap();
        let f = matrix_generator(&TraceProfile::gaussian(), &s, 4, 2, &spec()).unwrap();
        let est = model
            .normalizing_constant(&f, &IntegralSpec::monte_carlo(400_000, 11))
            .unwrap();
        let want = 1.0 / (2.0 * PI * PI);
        assert!(
            ((est.value - want) / want).abs() < 0.05,
            "c = {} vs {want} (se {})",
            est.value,
            est.error
        );
    }

    #[test]
    fn sampler_moments_gaussian() {
        // With M = 0, E = I and the Gaussian profile, vec(Y) is centered
        // normal with E[YᵀY] = tr(Σ₀)·I_k.
        let (n, k) = (4usize, 2usize);
        let s = PosDefMatrix::from_diagonal(&[2.0, 1.0, 1.0, 0.5]).unwrap();
        let params = MatrixModelParams::location(DMatrix::zeros(n, k)).unwrap();
        let (figs, stats) =
            sample_matrix_figures(20_000, &params, &s, &TraceProfile::gaussian(), 17, 1).unwrap();
        assert_eq!(figs.len(), 20_000);
        assert!(stats.resample_rate() < 1e-3);
        let mut acc = DMatrix::zeros(k, k);
        let mut mean = DMatrix::zeros(n, k);
        for y in &figs {
            acc += y.transpose() * y;
            mean += y;
        }
        acc /= figs.len() as f64;
        mean /= figs.len() as f64;
        let want = DMatrix::identity(k, k) * s.matrix().trace();
        assert!(mean.norm() < 0.05, "mean norm {}", mean.norm());
        assert!((acc - want).norm() < 0.12, "second moment deviates");
    }

    #[test]
    fn sampling_deterministic_across_threads() {
        let (n, k) = (4usize, 2usize);
        let s = PosDefMatrix::identity(4);
        let params = MatrixModelParams::location(DMatrix::zeros(n, k)).unwrap();
        let profile = TraceProfile::student(n * k, 3.0).unwrap();
        let a = sample_matrix_model(2500, &params, &s, &profile, 3, 1).unwrap();
        let b = sample_matrix_model(2500, &params, &s, &profile, 3, 3).unwrap();
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
    }

    #[test]
    fn posterior_kernel_matches_model() {
        let (n, k) = (4usize, 2usize);
        let s = PosDefMatrix::from_diagonal(&[2.0, 1.0, 1.0, 0.5]).unwrap();
        let model = affine_model(&s, n, k).unwrap();
        let mut rng = stream(23, 0);
        for a in [0.0, 1.0] {
            let mult = glk_power_multiplier(a);
            for _ in 0..20 {
                let y = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * 3.0 - 1.5);
                let m_loc = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() - 0.5);
                if !model.in_domain(&(&y - &m_loc)) {
                    continue;
                }
                let via_model = model.marginal_kernel(&y, &m_loc, &mult).unwrap();
                let direct = affine_posterior_kernel(&y, &m_loc, &s, a).unwrap();
                assert!(
                    ((via_model - direct) / direct).abs() < 1e-10,
                    "a={a}: model {via_model:e} vs direct {direct:e}"
                );
            }
        }
    }

    #[test]
    fn framework_checks_pass() {
        let s = PosDefMatrix::from_diagonal(&[2.0, 1.0, 0.5]).unwrap();
        let model = affine_model(&s, 3, 2).unwrap();
        let hooks = framework_hooks(3, 2);
        let report = check_framework(&model, &hooks, 400, 1e-8, 19).unwrap();
        assert!(report.max_equivariance < 1e-10, "{report:?}");
        assert!(report.max_reconstruction < 1e-10);
        assert!(report.max_invariance < 1e-10);
        assert!(report.max_chi_g_law < 1e-10);
    }

    #[test]
    fn scalar_model_matches_vspherical_family() {
        // The k = 1 model is an alternative decomposition of the elliptical
        // family: its sampling density must equal the v-spherical one.
        use crate::vspherical::{gaussian, v_elliptical, VSphericalParams};
        let s = PosDefMatrix::from_diagonal(&[2.0, 1.0, 0.5]).unwrap();
        let n = 3;
        let v = v_elliptical(s.clone());
        let f = gaussian().normalized_for(&v, n, &spec()).unwrap();
        let model = affine_scalar_model(&s);
        let mu = DVector::from_vec(vec![0.3, -0.2, 0.1]);
        let sigma = 1.4;
        let params = VSphericalParams::new(mu.clone(), sigma).unwrap();
        let theta = ParamPoint::new(mu, sigma);
        let forb = f.as_orbital();
        let mut rng = stream(9, 0);
        for _ in 0..30 {
            let x = DVector::from_fn(n, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            if !model.in_domain(&(&x - params.mu())) {
                continue;
            }
            let via_affine = model.sampling_density(&x, &theta, &forb).unwrap();
            let via_vsph = crate::vspherical::density(&x, &params, &v, &f).unwrap();
            assert!(
                ((via_affine - via_vsph) / via_vsph).abs() < 1e-12,
                "affine {via_affine:e} vs vspherical {via_vsph:e}"
            );
        }
    }
}
