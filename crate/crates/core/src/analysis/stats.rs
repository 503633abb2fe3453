//! Classical goodness-of-fit helpers used by the verification batteries.

use crate::error::{Error, Result};
use crate::numerics::{chi_square_sf, kolmogorov_sf};

/// Result of a Pearson chi-square goodness-of-fit test.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ChiSquareGof {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson chi-square test of observed counts against cell probabilities.
///
/// `expected_probs` must be positive and sum to one (within 1e-8); the
/// degrees of freedom are cells − 1.
pub fn chi_square_gof(observed: &[u64], expected_probs: &[f64]) -> Result<ChiSquareGof> {
    if observed.len() != expected_probs.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} observed cells vs {} expected probabilities",
            observed.len(),
            expected_probs.len()
        )));
    }
    if observed.len() < 2 {
        return Err(Error::InvalidParameter("chi-square test needs at least 2 cells".into()));
    }
    let psum: f64 = expected_probs.iter().sum();
    if (psum - 1.0).abs() > 1e-8 {
        return Err(Error::InvalidParameter(format!(
            "expected probabilities sum to {psum}, not 1"
        )));
    }
    let n: u64 = observed.iter().sum();
    if n == 0 {
        return Err(Error::InvalidParameter("no observations".into()));
    }
    let mut stat = 0.0;
    for (&o, &p) in observed.iter().zip(expected_probs) {
        if !(p > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "expected probability must be positive, got {p}"
            )));
        }
        let e = n as f64 * p;
        let d = o as f64 - e;
        stat += d * d / e;
    }
    let dof = observed.len() - 1;
    Ok(ChiSquareGof { statistic: stat, dof, p_value: chi_square_sf(stat, dof)? })
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// One-sample Kolmogorov–Smirnov test against U(0,1), with the asymptotic
/// p-value (adequate for the sample sizes used here, a few hundred and up).
pub fn ks_uniform(values: &[f64]) -> Result<KsResult> {
    if values.len() < 5 {
        return Err(Error::InvalidParameter(format!(
            "KS test needs at least 5 values, got {}",
            values.len()
        )));
    }
    let mut v = values.to_vec();
    for &u in &v {
        if !(0.0..=1.0).contains(&u) {
            return Err(Error::Domain(format!("KS input {u} outside [0, 1]")));
        }
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = v.len() as f64;
    let mut d = 0.0f64;
    for (i, &u) in v.iter().enumerate() {
        d = d.max(u - i as f64 / n);
        d = d.max((i + 1) as f64 / n - u);
    }
    Ok(KsResult { statistic: d, p_value: kolmogorov_sf(d * n.sqrt()) })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chi_square_frozen_example() {
        // Uniform die, 120 rolls: X² = Σ(o−20)²/20 = 5.0 on 5 dof.
        let obs = [25u64, 17, 15, 23, 24, 16];
        let probs = [1.0 / 6.0; 6];
        let r = chi_square_gof(&obs, &probs).unwrap();
        assert!((r.statistic - 5.0).abs() < 1e-12, "stat {}", r.statistic);
        assert_eq!(r.dof, 5);
        // Survival of chi-square(5) at 5.0.
        assert!((r.p_value - 0.415_880_186_995_507_920).abs() < 1e-12);
    }

    #[test]
    fn chi_square_detects_bias() {
        let obs = [100u64, 10, 10, 10];
        let probs = [0.25; 4];
        let r = chi_square_gof(&obs, &probs).unwrap();
        assert!(r.p_value < 1e-10);
    }

    #[test]
    fn chi_square_validation() {
        assert!(chi_square_gof(&[1, 2], &[0.5]).is_err());
        assert!(chi_square_gof(&[1, 2], &[0.7, 0.7]).is_err());
        assert!(chi_square_gof(&[0, 0], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn ks_uniform_on_grid() {
        // Deterministic mid-grid points have the minimal possible distance.
        let n = 1000;
        let v: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
        let r = ks_uniform(&v).unwrap();
        assert!((r.statistic - 0.5 / n as f64).abs() < 1e-12);
        assert!(r.p_value > 0.999);
    }

    #[test]
    fn ks_detects_non_uniform() {
        let v: Vec<f64> = (0..500).map(|i| ((i as f64 + 0.5) / 500.0).powi(3)).collect();
        let r = ks_uniform(&v).unwrap();
        assert!(r.p_value < 1e-10);
    }
}
