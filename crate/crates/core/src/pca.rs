//! Principal-component orbital model.
//!
//! Observations are data matrices X ∈ ℝ^{n×k} whose rows, under the
//! Gaussian member, are draws from N_k(0, g²·PΛ₀Pᵀ): Λ₀ is a fixed,
//! strictly decreasing eigenvalue profile, P ∈ O(k) the principal frame and
//! g > 0 an overall scale.  The scale group acts by X ↦ gX with
//! χ_G(g) = g^{kn}; the frame acts by X ↦ XPᵀ.  The equivariant radius is
//! r(X) = tr(XΛ₀⁻¹Xᵀ)^{1/2} and the section is trivial, so the marginal
//! posterior kernel for P under the relatively invariant scale prior with
//! multiplier g^a is tr(XPΛ₀⁻¹PᵀXᵀ)^{(a−kn)/2}.
//!
//! P is identified only up to column signs (P and PD with D = diag(±1)
//! yield the same covariance), so frames are compared through a canonical
//! sign-coset representative.

use crate::affine_shape::TraceProfile;
use crate::batch::{matrix_columns, SampleBatch, SamplerStats};
use crate::error::{Error, Result};
use crate::numerics::{integrate_radial, ln_gamma, QuadratureSpec};
use crate::orbital::{scalar_group_integral, DensityGenerator, FrameworkCheckHooks, OrbitalModel};
use crate::rng::stream;
use crate::vspherical::RadialSampler;
use nalgebra::DMatrix;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde_json::{json, Map, Value};
use std::f64::consts::PI;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

/// Tolerance on ‖PᵀP − I‖ for frame parameters.
const ORTHOGONALITY_TOL: f64 = 1e-10;
/// Eigenvalue gaps below this fraction of the leading eigenvalue make the
/// frame unidentifiable and are rejected.
const EIGENGAP_REL_TOL: f64 = 1e-8;
/// Draws per deterministic sampling shard.
const SHARD: usize = 1024;

/// Validate a fixed eigenvalue profile: finite, positive, strictly
/// decreasing with relative gaps above the identifiability threshold.
pub fn validate_lambda0(lambda0: &[f64]) -> Result<()> {
    if lambda0.is_empty() {
        return Err(Error::InvalidParameter("eigenvalue profile must be non-empty".into()));
    }
    if !lambda0.iter().all(|&l| l.is_finite() && l > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "eigenvalue profile must be positive and finite, got {lambda0:?}"
        )));
    }
    let lead = lambda0[0];
    for pair in lambda0.windows(2) {
        if pair[1] >= pair[0] || pair[0] - pair[1] < EIGENGAP_REL_TOL * lead {
            return Err(Error::InvalidParameter(format!(
                "eigenvalue profile must be strictly decreasing with gaps above \
                 {EIGENGAP_REL_TOL:e}·λ₁ so the frame is identifiable, got {lambda0:?}"
            )));
        }
    }
    Ok(())
}

/// Frame-and-scale parameter of the principal-component model.
#[derive(Debug, Clone)]
pub struct PcaParams {
    p: DMatrix<f64>,
    g: f64,
}

impl PcaParams {
    pub fn new(p: DMatrix<f64>, g: f64) -> Result<Self> {
        let k = p.nrows();
        if p.ncols() != k {
            return Err(Error::DimensionMismatch(format!(
                "frame must be square, got {}×{}",
                p.nrows(),
                p.ncols()
            )));
        }
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("frame entries must be finite".into()));
        }
        let defect = (p.transpose() * &p - DMatrix::identity(k, k)).norm();
        if defect > ORTHOGONALITY_TOL {
            return Err(Error::InvalidParameter(format!(
                "frame is not orthogonal: ‖PᵀP − I‖ = {defect:.3e} exceeds {ORTHOGONALITY_TOL:e}"
            )));
        }
        if !(g > 0.0) || !g.is_finite() {
            return Err(Error::InvalidParameter(format!("scale must be positive finite, got {g}")));
        }
        Ok(Self { p, g })
    }

    pub fn p(&self) -> &DMatrix<f64> {
        &self.p
    }

    pub fn g(&self) -> f64 {
        self.g
    }
}

/// The equivariant radius r(X) = tr(XΛ₀⁻¹Xᵀ)^{1/2} = (Σ_ij x_ij²/λ_j)^{1/2}.
pub fn pca_r(x: &DMatrix<f64>, lambda0: &[f64]) -> Result<f64> {
    if x.ncols() != lambda0.len() {
        return Err(Error::DimensionMismatch(format!(
            "observation has {} columns, eigenvalue profile has {}",
            x.ncols(),
            lambda0.len()
        )));
    }
    let mut t = 0.0;
    for j in 0..x.ncols() {
        let lj = lambda0[j];
        for i in 0..x.nrows() {
            t += x[(i, j)] * x[(i, j)] / lj;
        }
    }
    if !(t > 0.0) {
        return Err(Error::ExcludedPoint("zero data matrix has no radius".into()));
    }
    Ok(t.sqrt())
}

/// tr(X P Λ₀⁻¹ Pᵀ Xᵀ), the squared radius of X in the frame P.
fn framed_trace(x: &DMatrix<f64>, p: &DMatrix<f64>, lambda0: &[f64]) -> f64 {
    let xp = x * p;
    let mut t = 0.0;
    for j in 0..xp.ncols() {
        let lj = lambda0[j];
        for i in 0..xp.nrows() {
            t += xp[(i, j)] * xp[(i, j)] / lj;
        }
    }
    t
}

/// Normalized scalar generator for the scale group: f(t) = h(t²)/scale with
/// scale = (det Λ₀)^{n/2}·ω_{nk}·∫h(ρ²)ρ^{nk−1}dρ, so the induced matrix
/// density integrates to one.
pub fn pca_generator(
    profile: &TraceProfile,
    lambda0: &[f64],
    n: usize,
    spec: &QuadratureSpec,
) -> Result<DensityGenerator<f64>> {
    validate_lambda0(lambda0)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one observation row".into()));
    }
    let k = lambda0.len();
    let p = n * k;
    let h = profile.clone();
    let radial =
        integrate_radial(|rho| h.eval(rho * rho) * rho.powi(p as i32 - 1), 1, spec)?.value;
    let ln_det_l: f64 = lambda0.iter().map(|l| l.ln()).sum();
    let ln_scale = (n as f64 / 2.0) * ln_det_l
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
    Ok(DensityGenerator::new(profile.label(), move |t: &f64| h.eval(t * t) / scale))
}

/// Closed-form sampling density (det Σ)^{−n/2}·f̃(tr XΣ⁻¹Xᵀ) with
/// Σ = g²PΛ₀Pᵀ and f̃ the normalized trace profile.
pub fn pca_sampling_density(
    x: &DMatrix<f64>,
    params: &PcaParams,
    lambda0: &[f64],
    f: &DensityGenerator<f64>,
) -> Result<f64> {
    validate_lambda0(lambda0)?;
    let n = x.nrows();
    let k = lambda0.len();
    if params.p.nrows() != k || x.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "frame is {}×{}, observation {}×{}, profile length {k}",
            params.p.nrows(),
            params.p.ncols(),
            n,
            x.ncols()
        )));
    }
    let t = framed_trace(x, &params.p, lambda0);
    if !(t > 0.0) {
        return Err(Error::ExcludedPoint("zero data matrix is excluded".into()));
    }
    Ok(f.eval(&(t.sqrt() / params.g)) / params.g.powi((n * k) as i32))
}

/// Marginal posterior kernel for the frame P after integrating the scale
/// against the relatively invariant prior with multiplier m(g) = g^a:
/// tr(XPΛ₀⁻¹PᵀXᵀ)^{(a−kn)/2}.  The reference analysis uses a = 0.
pub fn pca_marginal_kernel(
    x: &DMatrix<f64>,
    p: &DMatrix<f64>,
    lambda0: &[f64],
    a: f64,
) -> Result<f64> {
    validate_lambda0(lambda0)?;
    let n = x.nrows();
    let k = lambda0.len();
    if p.nrows() != k || p.ncols() != k || x.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "frame is {}×{}, observation {}×{}, profile length {k}",
            p.nrows(),
            p.ncols(),
            n,
            x.ncols()
        )));
    }
    if a >= (n * k) as f64 {
        return Err(Error::NotIntegrable(format!(
            "scale-prior exponent a = {a} must be below kn = {} for the marginal to exist",
            n * k
        )));
    }
    let t = framed_trace(x, p, lambda0);
    if !(t > 0.0) {
        return Err(Error::ExcludedPoint("zero data matrix is excluded".into()));
    }
    Ok(t.powf(0.5 * (a - (n * k) as f64)))
}

/// Canonical representative of the sign coset {PD : D = diag(±1)}: each
/// column is flipped so that its largest-magnitude entry (ties broken by the
/// lowest row index) is positive.  Idempotent by construction.
pub fn canonicalize_sign_coset(p: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = p.clone();
    for j in 0..out.ncols() {
        let mut best_row = 0usize;
        let mut best_abs = -1.0f64;
        for i in 0..out.nrows() {
            let a = out[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best_row = i;
            }
        }
        if out[(best_row, j)] < 0.0 {
            for i in 0..out.nrows() {
                out[(i, j)] = -out[(i, j)];
            }
        }
    }
    out
}

/// Haar-distributed orthogonal matrix: QR of a Gaussian matrix with the
/// R-diagonal sign correction.
pub fn haar_orthogonal(k: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let gauss = DMatrix::from_fn(k, k, |_, _| {
        let g: f64 = StandardNormal.sample(rng);
        g
    });
    let qr = gauss.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            for i in 0..k {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// The principal-component orbital model: H = O(k) acting by X ↦ XPᵀ,
/// G = ℝ_{>0} acting by X ↦ gX, r(X) = tr(XΛ₀⁻¹Xᵀ)^{1/2}, trivial section.
pub fn pca_model(lambda0: Vec<f64>, n: usize) -> Result<OrbitalModel<DMatrix<f64>, DMatrix<f64>, f64>> {
    validate_lambda0(&lambda0)?;
    if n == 0 {
        return Err(Error::InvalidParameter("need at least one observation row".into()));
    }
    let k = lambda0.len();
    let kn = (n * k) as i32;
    let l_r = lambda0.clone();
    Ok(OrbitalModel {
        label: format!("pca(n={n},k={k})"),
        r_map: Box::new(move |x: &DMatrix<f64>| pca_r(x, &l_r)),
        s_map: Box::new(|_z: &DMatrix<f64>| 1.0),
        chi_h: Box::new(|_p: &DMatrix<f64>| 1.0),
        chi_g: Box::new(move |g: &f64| g.powi(kn)),
        delta_g: Box::new(|_g| 1.0),
        h_action: Box::new(|p: &DMatrix<f64>, x: &DMatrix<f64>| x * p.transpose()),
        h_inverse: Box::new(|p: &DMatrix<f64>| p.transpose()),
        h_compose: Box::new(|a: &DMatrix<f64>, b: &DMatrix<f64>| a * b),
        g_action: Box::new(|g: &f64, x: &DMatrix<f64>| x * *g),
        g_inverse: Box::new(|g: &f64| 1.0 / g),
        g_compose: Box::new(|a: &f64, b: &f64| a * b),
        membership: Box::new(move |x: &DMatrix<f64>| {
            x.shape() == (n, k) && x.iter().all(|c| c.is_finite()) && x.iter().any(|&c| c != 0.0)
        }),
        group_integral: scalar_group_integral(),
    })
}

/// Draw data matrices X = g·U·Λ₀^{1/2}·Pᵀ where vec(U) is spherical in
/// ℝ^{nk} with the radius law of the given profile.
pub fn sample_pca_figures(
    count: usize,
    params: &PcaParams,
    lambda0: &[f64],
    n: usize,
    profile: &TraceProfile,
    seed: u64,
    threads: usize,
) -> Result<(Vec<DMatrix<f64>>, SamplerStats)> {
    validate_lambda0(lambda0)?;
    let k = lambda0.len();
    if params.p.nrows() != k {
        return Err(Error::DimensionMismatch(format!(
            "frame is {}×{}, eigenvalue profile has length {k}",
            params.p.nrows(),
            params.p.ncols()
        )));
    }
    let p_dim = n * k;
    let rad = RadialSampler::build(&profile.radial(), p_dim, &QuadratureSpec::default())?;
    // Λ₀^{1/2}Pᵀ scaled by g, applied on the right of U.
    let mut right = DMatrix::zeros(k, k);
    for j in 0..k {
        for c in 0..k {
            right[(j, c)] = lambda0[j].sqrt() * params.p[(c, j)] * params.g;
        }
    }

    let n_shards = count.div_ceil(SHARD).max(1);
    let run_shard = |i: usize| -> (Vec<DMatrix<f64>>, u64) {
        let mut rng = stream(seed, i as u64);
        let lo = i * SHARD;
        let hi = ((i + 1) * SHARD).min(count);
        let mut out = Vec::with_capacity(hi - lo);
        let mut resampled = 0u64;
        for _ in lo..hi {
            loop {
                let rho = rad.sample(&mut rng);
                let mut u = DMatrix::from_fn(n, k, |_, _| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g
                });
                let norm = u.norm();
                if norm < 1e-100 {
                    resampled += 1;
                    continue;
                }
                u *= rho / norm;
                out.push(&u * &right);
                break;
            }
        }
        (out, resampled)
    };

    let workers = threads.max(1).min(n_shards);
    let mut outs: Vec<Option<(Vec<DMatrix<f64>>, u64)>> = (0..n_shards).map(|_| None).collect();
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
        let (mut figs, resampled) = out.expect("all shards executed");
        stats.resampled += resampled;
        stats.proposals += figs.len() as u64 + resampled;
        stats.accepted += figs.len() as u64;
        figures.append(&mut figs);
    }
    Ok((figures, stats))
}

/// Draw data matrices into a tabular batch (rows flattened row-major).
pub fn sample_pca_model(
    count: usize,
    params: &PcaParams,
    lambda0: &[f64],
    n: usize,
    profile: &TraceProfile,
    seed: u64,
    threads: usize,
) -> Result<SampleBatch> {
    let k = lambda0.len();
    let (figures, stats) =
        sample_pca_figures(count, params, lambda0, n, profile, seed, threads)?;
    let meta: Map<String, Value> = match json!({
        "model": "pca",
        "generator": profile.label(),
        "n": n,
        "k": k,
        "lambda0": lambda0,
        "p": params.p.iter().copied().collect::<Vec<f64>>(),
        "g": params.g,
    }) {
        Value::Object(map) => map,
        _ => unreachable!(),
    };
    let mut batch = SampleBatch::new(seed, meta, matrix_columns(n, k));
    for x in figures {
        let mut row = Vec::with_capacity(n * k);
        for i in 0..n {
            for j in 0..k {
                row.push(x[(i, j)]);
            }
        }
        batch.push(row);
    }
    batch.merge_stats(stats);
    Ok(batch)
}

/// Randomized-check hooks for the principal-component model.
pub fn framework_hooks(n: usize, k: usize) -> FrameworkCheckHooks<DMatrix<f64>, DMatrix<f64>, f64> {
    FrameworkCheckHooks {
        sample_point: Box::new(move |rng: &mut ChaCha8Rng| loop {
            let x = DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            if x.norm() > 0.1 {
                return x;
            }
        }),
        sample_g: Box::new(|rng| 0.2 + 4.0 * rng.random::<f64>()),
        sample_h: Box::new(move |rng| haar_orthogonal(k, rng)),
        point_rel_diff: Box::new(|a: &DMatrix<f64>, b: &DMatrix<f64>| {
            (a - b).norm() / b.norm().max(1e-300)
        }),
        group_rel_diff: Box::new(|a: &f64, b: &f64| (a - b).abs() / b.abs().max(1e-300)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbital::{check_framework, Multiplier, ParamPoint};

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    fn lambda() -> Vec<f64> {
        vec![3.0, 1.5, 0.5]
    }

    #[test]
    fn lambda0_validation() {
        assert!(validate_lambda0(&[3.0, 1.5, 0.5]).is_ok());
        assert!(validate_lambda0(&[]).is_err());
        assert!(validate_lambda0(&[1.0, 1.0]).is_err(), "tie must be rejected");
        assert!(validate_lambda0(&[1.0, 2.0]).is_err(), "increasing must be rejected");
        assert!(
            validate_lambda0(&[1.0, 1.0 - 1e-10]).is_err(),
            "near-tie below the identifiability gap must be rejected"
        );
        assert!(validate_lambda0(&[1.0, -0.5]).is_err());
    }

    #[test]
    fn params_validation() {
        let mut rng = stream(3, 0);
        let p = haar_orthogonal(3, &mut rng);
        assert!(PcaParams::new(p.clone(), 1.3).is_ok());
        assert!(PcaParams::new(p.clone(), 0.0).is_err());
        let mut skew = p;
        skew[(0, 0)] += 1e-6;
        assert!(PcaParams::new(skew, 1.0).is_err(), "non-orthogonal frame must be rejected");
    }

    #[test]
    fn canonicalization_fixes_sign_cosets() {
        let mut rng = stream(7, 0);
        for _ in 0..50 {
            let p = haar_orthogonal(3, &mut rng);
            let canon = canonicalize_sign_coset(&p);
            // Idempotent.
            assert!((canonicalize_sign_coset(&canon) - &canon).norm() < 1e-15);
            // Same representative for every sign flip.
            for mask in 0..8u32 {
                let mut flipped = p.clone();
                for j in 0..3 {
                    if mask & (1 << j) != 0 {
                        for i in 0..3 {
                            flipped[(i, j)] = -flipped[(i, j)];
                        }
                    }
                }
                assert!(
                    (canonicalize_sign_coset(&flipped) - &canon).norm() < 1e-12,
                    "sign flip {mask:03b} changed the representative"
                );
            }
            // Largest-magnitude entry of each column is positive.
            for j in 0..3 {
                let (mut row, mut best) = (0usize, -1.0f64);
                for i in 0..3 {
                    if canon[(i, j)].abs() > best {
                        best = canon[(i, j)].abs();
                        row = i;
                    }
                }
                assert!(canon[(row, j)] > 0.0);
            }
        }
    }

    #[test]
    fn haar_frames_are_orthogonal() {
        let mut rng = stream(11, 0);
        let mut mean_sq = 0.0;
        let reps = 4000;
        for _ in 0..reps {
            let q = haar_orthogonal(3, &mut rng);
            assert!((q.transpose() * &q - DMatrix::identity(3, 3)).norm() < 1e-12);
            mean_sq += q[(0, 0)] * q[(0, 0)];
        }
        // Under Haar measure E[q₁₁²] = 1/k.
        mean_sq /= reps as f64;
        assert!((mean_sq - 1.0 / 3.0).abs() < 0.02, "E[q11²] = {mean_sq}");
    }

    #[test]
    fn gaussian_density_closed_form() {
        // The Gaussian member must equal the matrix normal with
        // Σ = g²PΛ₀Pᵀ row-covariance... rows iid N_k(0, Σ).
        let l = lambda();
        let n = 4usize;
        let mut rng = stream(13, 0);
        let p = haar_orthogonal(3, &mut rng);
        let g = 1.7;
        let params = PcaParams::new(p.clone(), g).unwrap();
        let f = pca_generator(&TraceProfile::gaussian(), &l, n, &spec()).unwrap();
        let sigma = {
            let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(l.clone()));
            &p * lam * p.transpose() * g * g
        };
        let sigma_inv = sigma.clone().try_inverse().unwrap();
        let det = sigma.determinant();
        for _ in 0..10 {
            let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let got = pca_sampling_density(&x, &params, &l, &f).unwrap();
            let tr = (&x * &sigma_inv * x.transpose()).trace();
            let want =
                (2.0 * PI).powf(-(n as f64) * 1.5) * det.powf(-(n as f64) / 2.0) * (-0.5 * tr).exp();
            assert!(((got - want) / want).abs() < 1e-10, "got {got:e} want {want:e}");
        }
    }

    #[test]
    fn model_density_matches_direct_form() {
        let l = lambda();
        let n = 4usize;
        let model = pca_model(l.clone(), n).unwrap();
        let mut rng = stream(17, 0);
        let p = haar_orthogonal(3, &mut rng);
        let g = 0.8;
        let params = PcaParams::new(p.clone(), g).unwrap();
        for profile in TraceProfile::builtin_set(n * 3).unwrap() {
            let f = pca_generator(&profile, &l, n, &spec()).unwrap();
            let theta = ParamPoint::new(p.clone(), g);
            for _ in 0..10 {
                let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                let via_model = model.sampling_density(&x, &theta, &f).unwrap();
                let direct = pca_sampling_density(&x, &params, &l, &f).unwrap();
                assert!(
                    ((via_model - direct) / direct).abs() < 1e-12,
                    "{}: model {via_model:e} vs direct {direct:e}",
                    profile.label()
                );
            }
        }
    }

    #[test]
    fn sampler_moments_gaussian() {
        // With the Gaussian profile, E[XᵀX] = n·g²·PΛ₀Pᵀ.
        let l = lambda();
        let n = 4usize;
        let mut rng = stream(19, 0);
        let p = haar_orthogonal(3, &mut rng);
        let g = 1.2;
        let params = PcaParams::new(p.clone(), g).unwrap();
        let (figs, _) =
            sample_pca_figures(20_000, &params, &l, n, &TraceProfile::gaussian(), 23, 2).unwrap();
        let mut acc = DMatrix::zeros(3, 3);
        for x in &figs {
            acc += x.transpose() * x;
        }
        acc /= figs.len() as f64;
        let lam = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(l.clone()));
        let want = &p * lam * p.transpose() * (n as f64) * g * g;
        assert!((acc - &want).norm() / want.norm() < 0.03, "second moment deviates");
    }

    #[test]
    fn sampling_deterministic_across_threads() {
        let l = lambda();
        let mut rng = stream(29, 0);
        let p = haar_orthogonal(3, &mut rng);
        let params = PcaParams::new(p, 1.0).unwrap();
        let profile = TraceProfile::student(12, 3.0).unwrap();
        let a = sample_pca_model(2500, &params, &l, 4, &profile, 31, 1).unwrap();
        let b = sample_pca_model(2500, &params, &l, 4, &profile, 31, 4).unwrap();
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
    }

    #[test]
    fn kernel_matches_model_and_is_sign_invariant() {
        let l = lambda();
        let n = 4usize;
        let model = pca_model(l.clone(), n).unwrap();
        let mut rng = stream(37, 0);
        let p = haar_orthogonal(3, &mut rng);
        for a in [0.0, 1.0] {
            let m = Multiplier::new(format!("m(g)=g^{a}"), move |g: &f64| g.powf(a));
            for _ in 0..10 {
                let x = DMatrix::from_fn(n, 3, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                let direct = pca_marginal_kernel(&x, &p, &l, a).unwrap();
                let via_model = model.marginal_kernel(&x, &p, &m).unwrap();
                assert!(
                    ((via_model - direct) / direct).abs() < 1e-10,
                    "a={a}: model {via_model:e} vs direct {direct:e}"
                );
                // Column sign flips leave the kernel unchanged.
                for mask in 1..8u32 {
                    let mut flipped = p.clone();
                    for j in 0..3 {
                        if mask & (1 << j) != 0 {
                            for i in 0..3 {
                                flipped[(i, j)] = -flipped[(i, j)];
                            }
                        }
                    }
                    let kf = pca_marginal_kernel(&x, &flipped, &l, a).unwrap();
                    assert!(((kf - direct) / direct).abs() < 1e-12);
                }
            }
        }
        // Exponents at or above kn leave a non-integrable scale marginal.
        let x = DMatrix::from_element(n, 3, 0.5);
        assert!(pca_marginal_kernel(&x, &p, &l, 12.0).is_err());
    }

    #[test]
    fn framework_checks_pass() {
        let model = pca_model(lambda(), 4).unwrap();
        let hooks = framework_hooks(4, 3);
        let report = check_framework(&model, &hooks, 400, 1e-8, 41).unwrap();
        assert!(report.max_equivariance < 1e-10, "{report:?}");
        assert!(report.max_reconstruction < 1e-10);
        assert!(report.max_invariance < 1e-10);
        assert!(report.max_chi_g_law < 1e-10);
    }

    #[test]
    fn raw_statistic_fails_invariance_precheck() {
        use crate::analysis::{invariance_precheck, InvarianceClass, StatisticSpec};
        let model = pca_model(lambda(), 4).unwrap();
        let hooks = framework_hooks(4, 3);
        // The normalized configuration X/r(X) is scale-invariant …
        let l = lambda();
        let invariant = StatisticSpec {
            label: "normalized-configuration".into(),
            eval: Box::new(move |x: &DMatrix<f64>| {
                let r = pca_r(x, &l)?;
                Ok(nalgebra::DVector::from_vec(
                    x.iter().map(|&c| c / r).collect::<Vec<f64>>(),
                ))
            }),
            invariance: InvarianceClass::Invariant,
        };
        let worst = invariance_precheck(&model, &hooks, &invariant, 100, 1e-9, 43).unwrap();
        assert!(worst < 1e-12);
        // … but a raw entry is not, and the precheck must say so.
        let raw = StatisticSpec {
            label: "raw-entry".into(),
            eval: Box::new(|x: &DMatrix<f64>| {
                Ok(nalgebra::DVector::from_vec(vec![x[(0, 0)]]))
            }),
            invariance: InvarianceClass::Invariant,
        };
        let err = invariance_precheck(&model, &hooks, &raw, 100, 1e-9, 47).unwrap_err();
        assert!(matches!(err, Error::InvarianceViolation(_)), "got {err:?}");
    }
}
