//! Positively homogeneous v-functions: v(gx) = g·v(x) for g > 0.
//!
//! A v-function fixes the star-shaped geometry of a family; the elliptical
//! case (xᵀΣ₀⁻¹x)^{1/2} keeps a handle on Σ₀ so closed forms (determinants,
//! boundary normals) stay available downstream.

use crate::error::{Error, Result};
use crate::numerics::linalg::PosDefMatrix;
use nalgebra::DVector;
use std::sync::Arc;

/// Differentiability class of a v-function away from the origin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
pub enum Smoothness {
    /// Piecewise continuously differentiable (finite-difference normals valid
    /// off a null set).
    PiecewiseC1,
    /// No smoothness promised.
    General,
}

/// A positively homogeneous map ℝⁿ∖{0} → ℝ_{>0}.
#[derive(Clone)]
pub struct VFunction {
    eval: Arc<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>,
    label: String,
    smoothness: Smoothness,
    dim: Option<usize>,
    elliptical: Option<Arc<PosDefMatrix>>,
}

impl VFunction {
    /// Evaluate without validation; the argument must be nonzero (and of the
    /// right dimension for dimension-bound v-functions).
    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        (self.eval)(x)
    }

    /// Evaluate with domain validation.
    pub fn eval_checked(&self, x: &DVector<f64>) -> Result<f64> {
        if let Some(d) = self.dim {
            if x.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "v-function '{}' is bound to dimension {d}, got a vector of length {}",
                    self.label,
                    x.len()
                )));
            }
        }
        if x.iter().all(|&c| c == 0.0) {
            return Err(Error::ExcludedPoint("v-function undefined at the origin".into()));
        }
        let v = (self.eval)(x);
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Domain(format!(
                "v-function '{}' returned non-positive or non-finite value {v}",
                self.label
            )));
        }
        Ok(v)
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn smoothness(&self) -> Smoothness {
        self.smoothness
    }

    /// Dimension the v-function is bound to, if any.
    pub fn dim(&self) -> Option<usize> {
        self.dim
    }

    /// The Σ₀ handle when this is an elliptical v-function.
    pub fn elliptical(&self) -> Option<&PosDefMatrix> {
        self.elliptical.as_deref()
    }
}

impl std::fmt::Debug for VFunction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VFunction")
            .field("label", &self.label)
            .field("smoothness", &self.smoothness)
            .field("dim", &self.dim)
            .finish()
    }
}

/// Elliptical v-function v(x) = (xᵀΣ₀⁻¹x)^{1/2}.
pub fn v_elliptical(sigma0: PosDefMatrix) -> VFunction {
    let n = sigma0.dim();
    let sigma0 = Arc::new(sigma0);
    let s = Arc::clone(&sigma0);
    VFunction {
        eval: Arc::new(move |x: &DVector<f64>| s.inv_quad_form(x).sqrt()),
        label: format!("elliptical(n={n})"),
        smoothness: Smoothness::PiecewiseC1,
        dim: Some(n),
        elliptical: Some(sigma0),
    }
}

/// l_q norm v(x) = (Σ|x_i|^q)^{1/q}, q > 0; a norm only for q ≥ 1 but a
/// valid positively homogeneous v-function for every positive q.
pub fn v_lq(q: f64) -> Result<VFunction> {
    if !(q > 0.0) || !q.is_finite() {
        return Err(Error::InvalidParameter(format!("l_q exponent must be positive, got {q}")));
    }
    let smoothness = if q >= 1.0 { Smoothness::PiecewiseC1 } else { Smoothness::General };
    Ok(VFunction {
        eval: Arc::new(move |x: &DVector<f64>| {
            x.iter().map(|&c| c.abs().powf(q)).sum::<f64>().powf(1.0 / q)
        }),
        label: format!("lq(q={q})"),
        smoothness,
        dim: None,
        elliptical: None,
    })
}

/// Max-norm v(x) = max_i |x_i|, the q → ∞ limit of the l_q family.
pub fn v_max() -> VFunction {
    VFunction {
        eval: Arc::new(|x: &DVector<f64>| x.iter().fold(0.0f64, |m, &c| m.max(c.abs()))),
        label: "max-norm".into(),
        smoothness: Smoothness::PiecewiseC1,
        dim: None,
        elliptical: None,
    }
}

/// Check positive homogeneity on random (g, x) pairs; returns the worst
/// relative deviation, erroring if it exceeds `tol`.
pub fn check_homogeneity(
    v: &VFunction,
    n: usize,
    cases: usize,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    use rand::Rng;
    let mut rng = crate::rng::stream(seed, 0);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let x = DVector::from_fn(n, |_, _| rng.random::<f64>() * 4.0 - 2.0);
        if x.iter().all(|&c| c == 0.0) {
            continue;
        }
        let g = (rng.random::<f64>() * 6.0 - 3.0).exp();
        let gx = &x * g;
        let lhs = v.eval(&gx);
        let rhs = g * v.eval(&x);
        worst = worst.max((lhs - rhs).abs() / rhs);
    }
    if worst > tol {
        return Err(Error::InvarianceViolation(format!(
            "homogeneity violated for '{}': worst relative deviation {worst:.3e} > {tol:.1e}",
            v.label()
        )));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn elliptical_values() {
        let v = v_elliptical(PosDefMatrix::identity(2));
        assert!((v.eval(&DVector::from_vec(vec![3.0, 4.0])) - 5.0).abs() < 1e-14);
        let v = v_elliptical(PosDefMatrix::from_diagonal(&[4.0, 1.0]).unwrap());
        assert!((v.eval(&DVector::from_vec(vec![2.0, 0.0])) - 1.0).abs() < 1e-14);
    }

    #[test]
    fn lq_values() {
        let v = v_lq(2.0).unwrap();
        assert!((v.eval(&DVector::from_vec(vec![3.0, 4.0])) - 5.0).abs() < 1e-14);
        let v1 = v_lq(1.0).unwrap();
        assert!((v1.eval(&DVector::from_vec(vec![3.0, -4.0])) - 7.0).abs() < 1e-14);
        assert_eq!(v1.smoothness(), Smoothness::PiecewiseC1);
        assert_eq!(v_lq(0.5).unwrap().smoothness(), Smoothness::General);
        assert!(v_lq(0.0).is_err());
        let vm = v_max();
        assert!((vm.eval(&DVector::from_vec(vec![3.0, -4.0])) - 4.0).abs() < 1e-14);
    }

    #[test]
    fn homogeneity_builtins() {
        let sigma = PosDefMatrix::new(DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0])).unwrap();
        for (v, n) in [
            (v_elliptical(sigma), 2usize),
            (v_lq(1.0).unwrap(), 3),
            (v_lq(4.0).unwrap(), 3),
            (v_lq(0.7).unwrap(), 2),
            (v_max(), 4),
        ] {
            let worst = check_homogeneity(&v, n, 1000, 1e-10, 42).unwrap();
            assert!(worst < 1e-10, "{} worst {worst:e}", v.label());
        }
    }

    #[test]
    fn checked_eval_rejects_origin_and_bad_dim() {
        let v = v_elliptical(PosDefMatrix::identity(2));
        assert!(matches!(
            v.eval_checked(&DVector::zeros(2)),
            Err(Error::ExcludedPoint(_))
        ));
        assert!(matches!(
            v.eval_checked(&DVector::from_vec(vec![1.0, 2.0, 3.0])),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
