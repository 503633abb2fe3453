//! Two-sample energy-distance permutation test.
//!
//! The statistic is E = nm/(n+m)·(2·d̄_xy − d̄_xx − d̄_yy) with d̄ the mean
//! Euclidean distance between/within groups.  The pooled all-pairs distance
//! total is permutation-invariant, so each permutation only needs the two
//! within-group sums; the cross sum falls out by subtraction.  Permutation k
//! always consumes substream k of the test seed, making the p-value
//! deterministic and independent of the worker count.

use crate::error::{Error, Result};
use crate::rng::stream;
use nalgebra::DVector;
use rand::seq::SliceRandom;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};

/// Outcome of one two-sample energy test.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct EnergyTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub permutations: usize,
    /// Number of permuted statistics ≥ the observed one.
    pub exceedances: u64,
    pub n_x: usize,
    pub n_y: usize,
}

struct PoolStats {
    total: f64,
    n: usize,
    m: usize,
}

impl PoolStats {
    /// Energy statistic from the two within-group pair sums.
    fn statistic(&self, s_xx: f64, s_yy: f64) -> f64 {
        let (n, m) = (self.n as f64, self.m as f64);
        let s_xy = self.total - s_xx - s_yy;
        let mean_xy = s_xy / (n * m);
        let mean_xx = 2.0 * s_xx / (n * n);
        let mean_yy = 2.0 * s_yy / (m * m);
        n * m / (n + m) * (2.0 * mean_xy - mean_xx - mean_yy)
    }
}

/// Sum of Euclidean distances over unordered pairs of `b`.
fn sum_pairs<const D: usize>(b: &[[f64; D]]) -> f64 {
    let mut s = 0.0;
    for i in 0..b.len() {
        let a = b[i];
        let mut row = 0.0;
        for q in &b[i + 1..] {
            let mut acc = 0.0;
            for d in 0..D {
                let t = a[d] - q[d];
                acc += t * t;
            }
            row += acc.sqrt();
        }
        s += row;
    }
    s
}

/// As `sum_pairs`, for row-major points of runtime dimension `dim`.
fn sum_pairs_dyn(flat: &[f64], dim: usize) -> f64 {
    let rows = flat.len() / dim;
    let mut s = 0.0;
    for i in 0..rows {
        let a = &flat[i * dim..(i + 1) * dim];
        let mut row = 0.0;
        for j in (i + 1)..rows {
            let b = &flat[j * dim..(j + 1) * dim];
            let mut acc = 0.0;
            for d in 0..dim {
                let t = a[d] - b[d];
                acc += t * t;
            }
            row += acc.sqrt();
        }
        s += row;
    }
    s
}

fn run_const<const D: usize>(
    xs: &[DVector<f64>],
    ys: &[DVector<f64>],
    permutations: usize,
    seed: u64,
    threads: usize,
) -> EnergyTestResult {
    let n = xs.len();
    let m = ys.len();
    let mut pool: Vec<[f64; D]> = Vec::with_capacity(n + m);
    for p in xs.iter().chain(ys) {
        let mut row = [0.0; D];
        for d in 0..D {
            row[d] = p[d];
        }
        pool.push(row);
    }
    let total = sum_pairs(&pool);
    let stats = PoolStats { total, n, m };
    let observed = stats.statistic(sum_pairs(&pool[..n]), sum_pairs(&pool[n..]));

    let exceed = AtomicU64::new(0);
    let next = AtomicUsize::new(0);
    let workers = threads.max(1).min(permutations);
    let body = |k: usize| {
        let mut rng = stream(seed, k as u64);
        let mut idx: Vec<u32> = (0..(n + m) as u32).collect();
        idx.shuffle(&mut rng);
        let mut buf: Vec<[f64; D]> = Vec::with_capacity(n.max(m));
        buf.extend(idx[..n].iter().map(|&i| pool[i as usize]));
        let s_xx = sum_pairs(&buf);
        buf.clear();
        buf.extend(idx[n..].iter().map(|&i| pool[i as usize]));
        let s_yy = sum_pairs(&buf);
        if stats.statistic(s_xx, s_yy) >= observed {
            exceed.fetch_add(1, Ordering::Relaxed);
        }
    };
    if workers <= 1 {
        for k in 0..permutations {
            body(k);
        }
    } else {
        std::thread::scope(|scope| {
            let body = &body;
            let next = &next;
            for _ in 0..workers {
                scope.spawn(move || loop {
                    let k = next.fetch_add(1, Ordering::Relaxed);
                    if k >= permutations {
                        break;
                    }
                    body(k);
                });
            }
        });
    }

    let exceedances = exceed.into_inner();
    EnergyTestResult {
        statistic: observed,
        p_value: (1 + exceedances) as f64 / (permutations + 1) as f64,
        permutations,
        exceedances,
        n_x: n,
        n_y: m,
    }
}

fn run_dyn(
    xs: &[DVector<f64>],
    ys: &[DVector<f64>],
    dim: usize,
    permutations: usize,
    seed: u64,
) -> EnergyTestResult {
    let n = xs.len();
    let m = ys.len();
    let mut flat = Vec::with_capacity((n + m) * dim);
    for p in xs.iter().chain(ys) {
        flat.extend(p.iter().copied());
    }
    let total = sum_pairs_dyn(&flat, dim);
    let stats = PoolStats { total, n, m };
    let observed =
        stats.statistic(sum_pairs_dyn(&flat[..n * dim], dim), sum_pairs_dyn(&flat[n * dim..], dim));

    let mut exceedances = 0u64;
    let mut buf = Vec::with_capacity(n.max(m) * dim);
    for k in 0..permutations {
        let mut rng = stream(seed, k as u64);
        let mut idx: Vec<u32> = (0..(n + m) as u32).collect();
        idx.shuffle(&mut rng);
        buf.clear();
        for &i in &idx[..n] {
            buf.extend_from_slice(&flat[i as usize * dim..(i as usize + 1) * dim]);
        }
        let s_xx = sum_pairs_dyn(&buf, dim);
        buf.clear();
        for &i in &idx[n..] {
            buf.extend_from_slice(&flat[i as usize * dim..(i as usize + 1) * dim]);
        }
        let s_yy = sum_pairs_dyn(&buf, dim);
        if stats.statistic(s_xx, s_yy) >= observed {
            exceedances += 1;
        }
    }
    EnergyTestResult {
        statistic: observed,
        p_value: (1 + exceedances) as f64 / (permutations + 1) as f64,
        permutations,
        exceedances,
        n_x: n,
        n_y: m,
    }
}

/// Two-sample energy test with permutation p-value.  Deterministic in
/// `seed`; `threads` only affects wall time.
pub fn energy_two_sample_test(
    xs: &[DVector<f64>],
    ys: &[DVector<f64>],
    permutations: usize,
    seed: u64,
    threads: usize,
) -> Result<EnergyTestResult> {
    if xs.len() < 2 || ys.len() < 2 {
        return Err(Error::InvalidParameter(format!(
            "energy test needs at least 2 points per group, got {} and {}",
            xs.len(),
            ys.len()
        )));
    }
    if permutations == 0 {
        return Err(Error::InvalidParameter("permutation count must be positive".into()));
    }
    let dim = xs[0].len();
    if dim == 0 {
        return Err(Error::InvalidParameter("points must have dimension ≥ 1".into()));
    }
    for p in xs.iter().chain(ys) {
        if p.len() != dim {
            return Err(Error::DimensionMismatch(format!(
                "mixed point dimensions in energy test: {} vs {dim}",
                p.len()
            )));
        }
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::Domain("non-finite coordinate in energy test input".into()));
        }
    }
    // Monomorphized fast paths for the dimensions the test batteries use.
    Ok(match dim {
        1 => run_const::<1>(xs, ys, permutations, seed, threads),
        2 => run_const::<2>(xs, ys, permutations, seed, threads),
        3 => run_const::<3>(xs, ys, permutations, seed, threads),
        4 => run_const::<4>(xs, ys, permutations, seed, threads),
        5 => run_const::<5>(xs, ys, permutations, seed, threads),
        8 => run_const::<8>(xs, ys, permutations, seed, threads),
        10 => run_const::<10>(xs, ys, permutations, seed, threads),
        _ => run_dyn(xs, ys, dim, permutations, seed),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::kolmogorov_sf;
    use rand::Rng;

    fn gaussian_cloud(n: usize, dim: usize, shift: f64, seed: u64) -> Vec<DVector<f64>> {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = stream(seed, 0);
        (0..n)
            .map(|_| {
                DVector::from_fn(dim, |_, _| {
                    let g: f64 = StandardNormal.sample(&mut rng);
                    g + shift
                })
            })
            .collect()
    }

    #[test]
    fn identical_distributions_not_rejected() {
        let xs = gaussian_cloud(300, 2, 0.0, 1);
        let ys = gaussian_cloud(300, 2, 0.0, 2);
        let r = energy_two_sample_test(&xs, &ys, 199, 77, 1).unwrap();
        assert!(r.p_value > 0.05, "p = {}", r.p_value);
    }

    #[test]
    fn shifted_distributions_rejected() {
        let xs = gaussian_cloud(200, 3, 0.0, 3);
        let ys = gaussian_cloud(200, 3, 1.5, 4);
        let r = energy_two_sample_test(&xs, &ys, 99, 5, 1).unwrap();
        assert_eq!(r.exceedances, 0);
        assert!((r.p_value - 0.01).abs() < 1e-12);
    }

    #[test]
    fn deterministic_across_threads() {
        let xs = gaussian_cloud(150, 2, 0.0, 6);
        let ys = gaussian_cloud(150, 2, 0.3, 7);
        let a = energy_two_sample_test(&xs, &ys, 99, 11, 1).unwrap();
        let b = energy_two_sample_test(&xs, &ys, 99, 11, 4).unwrap();
        assert_eq!(a.exceedances, b.exceedances);
        assert_eq!(a.statistic, b.statistic);
        assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn dynamic_dimension_fallback() {
        let xs = gaussian_cloud(80, 7, 0.0, 8);
        let ys = gaussian_cloud(80, 7, 0.0, 9);
        let r = energy_two_sample_test(&xs, &ys, 99, 12, 1).unwrap();
        assert!(r.p_value > 0.01, "p = {}", r.p_value);
        let ys = gaussian_cloud(80, 7, 2.0, 10);
        let r = energy_two_sample_test(&xs, &ys, 99, 13, 1).unwrap();
        assert_eq!(r.exceedances, 0);
    }

    #[test]
    fn p_values_calibrated_under_null() {
        // Under the null the permutation p-value is near-uniform; the KS
        // distance to U(0,1) stays below the asymptotic 1% critical value.
        let mut rng = stream(42, 0);
        let reps = 200;
        let mut ps = Vec::with_capacity(reps);
        for _ in 0..reps {
            let sa: u64 = rng.random();
            let sb: u64 = rng.random();
            let st: u64 = rng.random();
            let xs = gaussian_cloud(60, 2, 0.0, sa);
            let ys = gaussian_cloud(60, 2, 0.0, sb);
            ps.push(energy_two_sample_test(&xs, &ys, 49, st, 1).unwrap().p_value);
        }
        ps.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut d = 0.0f64;
        for (i, &p) in ps.iter().enumerate() {
            d = d.max((p - i as f64 / reps as f64).abs());
            d = d.max(((i + 1) as f64 / reps as f64 - p).abs());
        }
        let stat = d * (reps as f64).sqrt();
        // Discreteness of the 49-permutation p-value inflates the distance
        // by at most 1/50·√200 ≈ 0.28; stay below the 1% critical value.
        assert!(kolmogorov_sf(stat - 0.29) > 0.01, "KS statistic {stat}");
    }

    #[test]
    fn input_validation() {
        let xs = gaussian_cloud(5, 2, 0.0, 1);
        assert!(energy_two_sample_test(&xs, &xs[..1].to_vec(), 9, 0, 1).is_err());
        assert!(energy_two_sample_test(&xs, &xs, 0, 0, 1).is_err());
        let bad = vec![DVector::from_vec(vec![f64::NAN, 0.0]); 5];
        assert!(energy_two_sample_test(&xs, &bad, 9, 0, 1).is_err());
    }
}
