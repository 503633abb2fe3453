//! v-spherical location–scale families.
//!
//! A family is fixed by a positively homogeneous v-function and a radial
//! generator f; the density of an observation is σ⁻ⁿ f(v(σ⁻¹(x − μ))).
//! Under the orbital decomposition with r(x) = v(x) the maximal invariant is
//! the boundary point x/v(x) of the star set {v ≤ 1}; under r(x) = ‖x‖ it is
//! the direction x/‖x‖ with density c·v(u)⁻ⁿ on the unit sphere.  Both
//! decompositions are exposed as orbital models; the boundary density with
//! respect to surface measure carries the geometric factor ⟨z, n_z⟩ (the
//! support-function value of the star body at the outward normal), which the
//! intrinsic cross-section measure absorbs.

pub mod direction;
pub mod generators;
pub mod radial;
pub mod vfn;

pub use direction::{sphere_integral, uniform_unit_vector, DirectionSampler};
pub use generators::{
    builtin, builtin_set, cross_section_mass, exp_power, gaussian, student, RadialGenerator,
};
pub use radial::RadialSampler;
pub use vfn::{check_homogeneity, v_elliptical, v_lq, v_max, Smoothness, VFunction};

use crate::batch::{vector_columns, SampleBatch, SamplerStats};
use crate::error::{Error, Result};
use crate::numerics::QuadratureSpec;
use crate::orbital::{scalar_group_integral, FrameworkCheckHooks, Multiplier, OrbitalModel};
use crate::rng::stream;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde_json::{json, Map, Value};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

/// Draws generated per deterministic shard; output is identical for any
/// thread count because shard i always consumes substream i of the seed.
const SHARD: usize = 1024;

/// Location–scale parameters (μ ∈ ℝⁿ, σ > 0).
#[derive(Debug, Clone)]
pub struct VSphericalParams {
    mu: DVector<f64>,
    sigma: f64,
}

impl VSphericalParams {
    pub fn new(mu: DVector<f64>, sigma: f64) -> Result<Self> {
        if mu.is_empty() {
            return Err(Error::InvalidParameter("location must have dimension ≥ 1".into()));
        }
        if !mu.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidParameter("location contains non-finite entries".into()));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "scale must be positive and finite, got {sigma}"
            )));
        }
        Ok(Self { mu, sigma })
    }

    pub fn mu(&self) -> &DVector<f64> {
        &self.mu
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn dim(&self) -> usize {
        self.mu.len()
    }
}

/// Density σ⁻ⁿ f(v(σ⁻¹(x − μ))) of a v-spherical observation.
pub fn density(
    x: &DVector<f64>,
    params: &VSphericalParams,
    v: &VFunction,
    f: &RadialGenerator,
) -> Result<f64> {
    let n = params.dim();
    if x.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "observation has length {}, location has length {n}",
            x.len()
        )));
    }
    let y = (x - &params.mu) / params.sigma;
    let val = v.eval_checked(&y)?;
    Ok(f.eval(val) * params.sigma.powi(-(n as i32)))
}

/// Draw `count` observations; deterministic in (seed); `threads` only
/// changes wall time.  Returns the raw points plus sampler statistics.
pub fn sample_points(
    count: usize,
    params: &VSphericalParams,
    v: &VFunction,
    f: &RadialGenerator,
    seed: u64,
    threads: usize,
) -> Result<(Vec<DVector<f64>>, SamplerStats)> {
    let n = params.dim();
    let dir = DirectionSampler::build(v, n)?;
    let rad = RadialSampler::build(f, n, &QuadratureSpec::default())?;

    let n_shards = count.div_ceil(SHARD).max(1);
    let run_shard = |i: usize| -> Result<(Vec<DVector<f64>>, u64, u64)> {
        let mut rng = stream(seed, i as u64);
        let lo = i * SHARD;
        let hi = ((i + 1) * SHARD).min(count);
        let mut pts = Vec::with_capacity(hi - lo);
        let (mut proposals, mut accepted) = (0u64, 0u64);
        for _ in lo..hi {
            let t = rad.sample(&mut rng);
            let u = dir.sample(&mut rng, &mut proposals, &mut accepted)?;
            // y = t·u/v(u) places the draw on the star shell {v = t}.
            let vu = v.eval(&u);
            pts.push(&params.mu + u * (t * params.sigma / vu));
        }
        Ok((pts, proposals, accepted))
    };

    let workers = threads.max(1).min(n_shards);
    let mut outs: Vec<Option<Result<(Vec<DVector<f64>>, u64, u64)>>> =
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

    let mut points = Vec::with_capacity(count);
    let mut stats = SamplerStats::default();
    for out in outs {
        let (pts, proposals, accepted) =
            out.expect("all shards executed")?;
        points.extend(pts);
        stats.proposals += proposals;
        stats.accepted += accepted;
    }
    Ok((points, stats))
}

/// Draw `count` observations into a tabular batch with model metadata.
pub fn sample(
    count: usize,
    params: &VSphericalParams,
    v: &VFunction,
    f: &RadialGenerator,
    seed: u64,
    threads: usize,
) -> Result<SampleBatch> {
    let n = params.dim();
    let (points, stats) = sample_points(count, params, v, f, seed, threads)?;
    let meta: Map<String, Value> = match json!({
        "model": "vspherical",
        "generator": f.label(),
        "v": v.label(),
        "mu": params.mu.iter().copied().collect::<Vec<f64>>(),
        "sigma": params.sigma,
        "n": n,
    }) {
        Value::Object(m) => m,
        _ => unreachable!(),
    };
    let mut batch = SampleBatch::new(seed, meta, vector_columns(n));
    for p in points {
        batch.push(p.iter().copied().collect());
    }
    batch.merge_stats(stats);
    Ok(batch)
}

/// Direction density c·v(u)⁻ⁿ on the unit sphere, with c fixed once from
/// the cross-section mass.
pub struct DirectionDensity {
    v: VFunction,
    n: usize,
    c: f64,
}

impl DirectionDensity {
    pub fn new(v: &VFunction, n: usize, spec: &QuadratureSpec) -> Result<Self> {
        let mass = cross_section_mass(v, n, spec)?;
        Ok(Self { v: v.clone(), n, c: 1.0 / mass.value })
    }

    /// The normalizing constant c = 1/∫ v(u)⁻ⁿ λ(du).
    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn eval(&self, u: &DVector<f64>) -> Result<f64> {
        if u.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "direction has length {}, expected {}",
                u.len(),
                self.n
            )));
        }
        if (u.norm() - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!(
                "direction density requires a unit vector, got norm {}",
                u.norm()
            )));
        }
        Ok(self.c * self.v.eval_checked(u)?.powi(-(self.n as i32)))
    }
}

/// Cross-section density c·⟨z, n_z⟩ with respect to surface measure on the
/// star boundary {v = 1}; by Euler's homogeneity relation ⟨z, ∇v(z)⟩ = 1,
/// the geometric factor equals 1/‖∇v(z)‖.
pub struct StarCrossSection {
    v: VFunction,
    n: usize,
    c: f64,
}

impl StarCrossSection {
    pub fn new(v: &VFunction, n: usize, spec: &QuadratureSpec) -> Result<Self> {
        let mass = cross_section_mass(v, n, spec)?;
        Ok(Self { v: v.clone(), n, c: 1.0 / mass.value })
    }

    pub fn constant(&self) -> f64 {
        self.c
    }

    pub fn eval(&self, z: &DVector<f64>) -> Result<f64> {
        if z.len() != self.n {
            return Err(Error::DimensionMismatch(format!(
                "boundary point has length {}, expected {}",
                z.len(),
                self.n
            )));
        }
        let vz = self.v.eval_checked(z)?;
        if (vz - 1.0).abs() > 1e-10 {
            return Err(Error::Domain(format!(
                "point is not on the star boundary: v(z) = {vz}"
            )));
        }
        if let Some(sigma0) = self.v.elliptical() {
            // ∇v(z) = Σ₀⁻¹z on the boundary, so ⟨z, n_z⟩ = (zᵀΣ₀⁻²z)^{-1/2}.
            return Ok(self.c / sigma0.inv_sq_quad_form(z).sqrt());
        }
        // General v: central finite differences, with one-sided agreement and
        // the Euler identity as differentiability guards.
        let h = 1e-6 * z.norm().max(1.0);
        let mut grad = DVector::zeros(self.n);
        for i in 0..self.n {
            let mut up = z.clone();
            let mut dn = z.clone();
            up[i] += h;
            dn[i] -= h;
            let (vu, vd) = (self.v.eval(&up), self.v.eval(&dn));
            let fwd = (vu - vz) / h;
            let bwd = (vz - vd) / h;
            let central = (vu - vd) / (2.0 * h);
            if (fwd - bwd).abs() > 1e-3 * central.abs().max(1.0) {
                return Err(Error::Domain(format!(
                    "v-function '{}' appears non-differentiable at the boundary point \
                     (one-sided derivatives along coordinate {i} disagree: {fwd} vs {bwd})",
                    self.v.label()
                )));
            }
            grad[i] = central;
        }
        let euler = z.dot(&grad);
        if (euler - 1.0).abs() > 1e-3 {
            return Err(Error::Domain(format!(
                "finite-difference gradient of '{}' violates the homogeneity identity \
                 ⟨z, ∇v⟩ = v(z): got {euler}",
                self.v.label()
            )));
        }
        Ok(self.c / grad.norm())
    }
}

/// Direction of the least-squares residual e/‖e‖ for response y and design
/// X (full column rank required); the residual direction is invariant in
/// law across generators under the regression version of the family.
pub fn regression_residual_direction(y: &DVector<f64>, x: &DMatrix<f64>) -> Result<DVector<f64>> {
    let (n, k) = x.shape();
    if y.len() != n {
        return Err(Error::DimensionMismatch(format!(
            "response has length {}, design has {n} rows",
            y.len()
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::InvalidParameter(format!(
            "design must have 1 ≤ k < n columns, got k = {k}, n = {n}"
        )));
    }
    // Rank check through the pivoted factorization.
    let piv = x.clone().col_piv_qr();
    let rdiag = piv.r();
    let mut dmax = 0.0f64;
    let mut dmin = f64::INFINITY;
    for i in 0..k {
        let d = rdiag[(i, i)].abs();
        dmax = dmax.max(d);
        dmin = dmin.min(d);
    }
    if !(dmin > 1e-10 * dmax.max(1e-300)) {
        return Err(Error::RankDeficient(format!(
            "design matrix is numerically rank deficient (pivot ratio {:.3e})",
            dmin / dmax.max(1e-300)
        )));
    }
    let qr = x.clone().qr();
    let rhs = qr.q().transpose() * y;
    let beta = qr
        .r()
        .solve_upper_triangular(&rhs)
        .ok_or_else(|| Error::Singular("triangular solve failed in least squares".into()))?;
    let e = y - x * beta;
    let norm = e.norm();
    if norm <= 1e-12 * y.norm().max(1.0) {
        return Err(Error::ExcludedPoint(
            "response lies in the column space of the design; the residual direction is undefined"
                .into(),
        ));
    }
    Ok(e / norm)
}

/// Marginal posterior kernel m(v(x − μ))/v(x − μ)ⁿ for the scale-marginalized
/// location posterior under a relatively invariant scale prior with
/// multiplier m.
pub fn vspherical_marginal_kernel(
    x: &DVector<f64>,
    mu: &DVector<f64>,
    v: &VFunction,
    m: &Multiplier<f64>,
) -> Result<f64> {
    if x.len() != mu.len() {
        return Err(Error::DimensionMismatch(format!(
            "observation has length {}, location has length {}",
            x.len(),
            mu.len()
        )));
    }
    let n = x.len();
    let val = v.eval_checked(&(x - mu))?;
    Ok(m.eval(&val) / val.powi(n as i32))
}

fn scale_model(
    v: &VFunction,
    n: usize,
    r_of: impl Fn(&VFunction, &DVector<f64>) -> Result<f64> + Send + Sync + 'static,
    s_of: impl Fn(&VFunction, &DVector<f64>) -> f64 + Send + Sync + 'static,
    label: String,
) -> OrbitalModel<DVector<f64>, DVector<f64>, f64> {
    let v_r = v.clone();
    let v_s = v.clone();
    let v_m = v.clone();
    OrbitalModel {
        label,
        r_map: Box::new(move |x: &DVector<f64>| r_of(&v_r, x)),
        s_map: Box::new(move |z: &DVector<f64>| s_of(&v_s, z)),
        chi_h: Box::new(|_h| 1.0),
        chi_g: Box::new(move |g: &f64| g.powi(n as i32)),
        delta_g: Box::new(|_g| 1.0),
        h_action: Box::new(|h: &DVector<f64>, x: &DVector<f64>| x + h),
        h_inverse: Box::new(|h: &DVector<f64>| -h),
        h_compose: Box::new(|a: &DVector<f64>, b: &DVector<f64>| a + b),
        g_action: Box::new(|g: &f64, x: &DVector<f64>| x * *g),
        g_inverse: Box::new(|g: &f64| 1.0 / g),
        g_compose: Box::new(|a: &f64, b: &f64| a * b),
        membership: Box::new(move |x: &DVector<f64>| {
            x.len() == n
                && x.iter().all(|c| c.is_finite())
                && x.iter().any(|&c| c != 0.0)
                && {
                    let val = v_m.eval(x);
                    val.is_finite() && val > 0.0
                }
        }),
        group_integral: scalar_group_integral(),
    }
}

/// Orbital model with r(x) = v(x): the maximal invariant is the star-boundary
/// point x/v(x) and the section is trivially the identity, so the intrinsic
/// cross-section density is the constant c.
pub fn star_model(v: &VFunction, n: usize) -> OrbitalModel<DVector<f64>, DVector<f64>, f64> {
    scale_model(
        v,
        n,
        |v, x| v.eval_checked(x),
        |_v, _z| 1.0,
        format!("vspherical-star[{}]", v.label()),
    )
}

/// Orbital model with r(x) = ‖x‖: the maximal invariant is the direction
/// x/‖x‖ and the section is s(u) = v(u), recovering the direction density
/// c·v(u)⁻ⁿ from the generic cross-section formula.
pub fn direction_model(v: &VFunction, n: usize) -> OrbitalModel<DVector<f64>, DVector<f64>, f64> {
    scale_model(
        v,
        n,
        |_v, x| {
            let norm = x.norm();
            if norm > 0.0 && norm.is_finite() {
                Ok(norm)
            } else {
                Err(Error::ExcludedPoint("direction undefined at the origin".into()))
            }
        },
        |v, u| v.eval(u),
        format!("vspherical-direction[{}]", v.label()),
    )
}

/// Randomized-check hooks for the v-spherical models in dimension n.
pub fn framework_hooks(n: usize) -> FrameworkCheckHooks<DVector<f64>, DVector<f64>, f64> {
    FrameworkCheckHooks {
        sample_point: Box::new(move |rng: &mut rand_chacha::ChaCha8Rng| loop {
            let x = DVector::from_fn(n, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            if x.norm() > 1e-6 {
                return x;
            }
        }),
        sample_g: Box::new(|rng| (rng.random::<f64>() * 4.0 - 2.0).exp()),
        sample_h: Box::new(move |rng| DVector::from_fn(n, |_, _| rng.random::<f64>() * 4.0 - 2.0)),
        point_rel_diff: Box::new(|a: &DVector<f64>, b: &DVector<f64>| {
            (a - b).norm() / b.norm().max(1e-300)
        }),
        group_rel_diff: Box::new(|a: &f64, b: &f64| (a - b).abs() / b.abs().max(1e-300)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::linalg::PosDefMatrix;
    use crate::orbital::{check_framework, ParamPoint};

    fn spec() -> QuadratureSpec {
        QuadratureSpec::default()
    }

    #[test]
    fn density_agrees_with_orbital_model() {
        let sigma0 = PosDefMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        let v = v_elliptical(sigma0);
        let f = gaussian().normalized_for(&v, 2, &spec()).unwrap();
        let model = star_model(&v, 2);
        let params =
            VSphericalParams::new(DVector::from_vec(vec![1.0, -0.5]), 1.7).unwrap();
        let theta = ParamPoint::new(params.mu().clone(), params.sigma());
        let forb = f.as_orbital();
        for x in [
            DVector::from_vec(vec![0.3, 0.9]),
            DVector::from_vec(vec![-2.0, 1.4]),
            DVector::from_vec(vec![4.0, -3.0]),
        ] {
            let direct = density(&x, &params, &v, &f).unwrap();
            let via_model = model.sampling_density(&x, &theta, &forb).unwrap();
            assert!(
                ((direct - via_model) / direct).abs() < 1e-13,
                "direct {direct:e} vs model {via_model:e}"
            );
        }
    }

    #[test]
    fn gaussian_elliptical_is_multivariate_normal() {
        // v elliptical with Σ₀, Gaussian generator: the density must be the
        // N(μ, σ²Σ₀) density.
        let sigma0 = PosDefMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        let v = v_elliptical(sigma0.clone());
        let f = gaussian().normalized_for(&v, 2, &spec()).unwrap();
        let mu = DVector::from_vec(vec![0.5, -1.0]);
        let sigma = 1.3;
        let params = VSphericalParams::new(mu.clone(), sigma).unwrap();
        for x in [
            DVector::from_vec(vec![0.0, 0.0]),
            DVector::from_vec(vec![1.2, -0.7]),
            DVector::from_vec(vec![-2.0, 2.0]),
        ] {
            let got = density(&x, &params, &v, &f).unwrap();
            let d = &x - &mu;
            let q = sigma0.inv_quad_form(&d) / (sigma * sigma);
            let det = (sigma * sigma).powi(2) * sigma0.det();
            let want =
                (-0.5 * q).exp() / ((2.0 * std::f64::consts::PI).powi(1) * det.sqrt());
            assert!(((got - want) / want).abs() < 1e-9, "got {got:e} want {want:e}");
        }
    }

    #[test]
    fn sampler_matches_normal_moments() {
        let sigma0 = PosDefMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        let v = v_elliptical(sigma0);
        let f = gaussian().normalized_for(&v, 2, &spec()).unwrap();
        let mu = DVector::from_vec(vec![1.0, 2.0]);
        let params = VSphericalParams::new(mu.clone(), 0.5).unwrap();
        let (pts, stats) = sample_points(20_000, &params, &v, &f, 42, 1).unwrap();
        assert_eq!(pts.len(), 20_000);
        assert!(stats.acceptance_rate() > 0.4, "rate {}", stats.acceptance_rate());
        let m = pts.iter().fold(DVector::<f64>::zeros(2), |a, p| a + p) / pts.len() as f64;
        let mean_err = (&m - &mu).norm();
        assert!(mean_err < 0.03, "mean error {mean_err}");
        // Cov should be σ²Σ₀ = diag(1, 0.25).
        let mut c11 = 0.0;
        let mut c22 = 0.0;
        let mut c12 = 0.0;
        for p in &pts {
            let d = p - &mu;
            c11 += d[0] * d[0];
            c22 += d[1] * d[1];
            c12 += d[0] * d[1];
        }
        c11 /= pts.len() as f64;
        c22 /= pts.len() as f64;
        c12 /= pts.len() as f64;
        assert!((c11 - 1.0).abs() < 0.05, "c11 {c11}");
        assert!((c22 - 0.25).abs() < 0.02, "c22 {c22}");
        assert!(c12.abs() < 0.02, "c12 {c12}");
    }

    #[test]
    fn sampling_is_thread_count_invariant() {
        let v = v_lq(4.0).unwrap();
        let f = student(2, 3.0).unwrap().normalized_for(&v, 2, &spec()).unwrap();
        let params = VSphericalParams::new(DVector::from_vec(vec![0.0, 0.0]), 1.0).unwrap();
        let a = sample(3000, &params, &v, &f, 9, 1).unwrap();
        let b = sample(3000, &params, &v, &f, 9, 4).unwrap();
        assert_eq!(a.rows(), b.rows());
        assert_eq!(a.to_csv_string().unwrap(), b.to_csv_string().unwrap());
    }

    #[test]
    fn direction_density_integrates_to_one() {
        let v = v_lq(4.0).unwrap();
        let d = DirectionDensity::new(&v, 2, &spec()).unwrap();
        let total = sphere_integral(2, |u| d.eval(u).unwrap(), &spec()).unwrap().value;
        assert!((total - 1.0).abs() < 1e-9, "total {total}");
        // Non-unit input is rejected.
        assert!(d.eval(&DVector::from_vec(vec![1.0, 1.0])).is_err());
    }

    #[test]
    fn star_cross_section_closed_form_and_fd_agree() {
        // Euclidean geometry two ways: elliptical(I₂) takes the closed-form
        // path, l₂ takes the finite-difference path; both equal c·1 on S¹.
        let ve = v_elliptical(PosDefMatrix::identity(2));
        let vq = v_lq(2.0).unwrap();
        let se = StarCrossSection::new(&ve, 2, &spec()).unwrap();
        let sq = StarCrossSection::new(&vq, 2, &spec()).unwrap();
        let z = DVector::from_vec(vec![0.6, 0.8]);
        let a = se.eval(&z).unwrap();
        let b = sq.eval(&z).unwrap();
        assert!(((a - b) / a).abs() < 1e-9, "closed {a} vs fd {b}");
        // Elliptical diag(4,1) at z = (2, 0): ⟨z, n_z⟩ = 2.
        let v4 = v_elliptical(PosDefMatrix::from_diagonal(&[4.0, 1.0]).unwrap());
        let s4 = StarCrossSection::new(&v4, 2, &spec()).unwrap();
        let z = DVector::from_vec(vec![2.0, 0.0]);
        let got = s4.eval(&z).unwrap();
        assert!(((got - 2.0 * s4.constant()) / got).abs() < 1e-12);
    }

    #[test]
    fn star_cross_section_flags_kinks() {
        let v1 = v_lq(1.0).unwrap();
        let s1 = StarCrossSection::new(&v1, 2, &spec()).unwrap();
        // Smooth face point of the l₁ ball: ⟨z, n_z⟩ = 1/‖(±1,±1)‖ = 1/√2.
        let z = DVector::from_vec(vec![0.5, 0.5]);
        let got = s1.eval(&z).unwrap();
        let want = s1.constant() / 2.0f64.sqrt();
        assert!(((got - want) / want).abs() < 1e-6);
        // Corner of the l₁ ball: one-sided derivatives disagree.
        let corner = DVector::from_vec(vec![1.0, 0.0]);
        assert!(matches!(s1.eval(&corner), Err(Error::Domain(_))));
    }

    #[test]
    fn residual_direction_basics() {
        // Intercept-only design: residual is the centered response.
        let x = DMatrix::from_element(4, 1, 1.0);
        let y = DVector::from_vec(vec![1.0, 2.0, 4.0, 9.0]);
        let e = regression_residual_direction(&y, &x).unwrap();
        let centered = DVector::from_vec(vec![-3.0, -2.0, 0.0, 5.0]);
        let want: DVector<f64> = &centered / centered.norm();
        let diff: DVector<f64> = &e - &want;
        assert!(diff.norm() < 1e-12);

        // Rank-deficient design.
        let xx = DMatrix::from_columns(&[x.column(0).into_owned(), x.column(0).into_owned()]);
        assert!(matches!(
            regression_residual_direction(&y, &xx),
            Err(Error::RankDeficient(_))
        ));

        // Exact fit.
        let yfit = DVector::from_element(4, 3.0);
        assert!(matches!(
            regression_residual_direction(&yfit, &x),
            Err(Error::ExcludedPoint(_))
        ));
    }

    #[test]
    fn marginal_kernel_agrees_with_orbital_model() {
        let v = v_lq(4.0).unwrap();
        let model = star_model(&v, 2);
        let x = DVector::from_vec(vec![1.3, -0.4]);
        let mu = DVector::from_vec(vec![0.2, 0.1]);
        for m in [Multiplier::one(), Multiplier::power(0.7)] {
            let direct = vspherical_marginal_kernel(&x, &mu, &v, &m).unwrap();
            let via_model = model.marginal_kernel(&x, &mu, &m).unwrap();
            assert!(((direct - via_model) / direct).abs() < 1e-13);
        }
    }

    #[test]
    fn framework_checks_pass_for_both_decompositions() {
        for v in [v_elliptical(PosDefMatrix::from_diagonal(&[4.0, 1.0]).unwrap()), v_lq(1.0).unwrap()] {
            for model in [star_model(&v, 2), direction_model(&v, 2)] {
                let hooks = framework_hooks(2);
                let report = check_framework(&model, &hooks, 500, 1e-9, 13).unwrap();
                assert!(report.max_equivariance < 1e-10, "{}", model.label);
                assert!(report.max_reconstruction < 1e-10);
                assert!(report.max_invariance < 1e-10);
            }
        }
    }

    #[test]
    fn normalizing_constant_group_side_equals_cross_section_side() {
        // Theorem-side identity: for a normalized generator the group
        // integral c = ∫f(r)χ_G(r)μ_G(dr) must equal 1/mass_𝒵.
        let sigma0 = PosDefMatrix::from_diagonal(&[4.0, 1.0]).unwrap();
        let v = v_elliptical(sigma0);
        for f0 in builtin_set(2).unwrap() {
            let f = f0.normalized_for(&v, 2, &spec()).unwrap();
            let model = star_model(&v, 2);
            let c = model
                .normalizing_constant(&f.as_orbital(), &Default::default())
                .unwrap()
                .value;
            let mass = cross_section_mass(&v, 2, &spec()).unwrap().value;
            assert!(
                (c * mass - 1.0).abs() < 1e-8,
                "{}: c·mass = {}",
                f.label(),
                c * mass
            );
        }
    }
}
