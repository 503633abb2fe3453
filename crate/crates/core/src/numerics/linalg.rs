//! Positive-definite matrices and the lower-triangular Cholesky square root.
//!
//! The square root convention is the unique lower-triangular factor T with
//! positive diagonal such that S = T Tᵀ. A `PosDefMatrix` symmetrizes its
//! input, enforces the symmetry tolerance, and caches the factor so repeated
//! solves are cheap.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// Absolute tolerance for the symmetry check on construction.
pub const SYMMETRY_TOL: f64 = 1e-12;

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
///
/// The input is symmetrized as (S + Sᵀ)/2 after an absolute symmetry check,
/// since user-supplied matrices accumulate round-off.
pub fn cholesky_sqrt(s: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = s.nrows();
    if s.ncols() != k {
        return Err(Error::DimensionMismatch(format!(
            "cholesky_sqrt needs a square matrix, got {}x{}",
            s.nrows(),
            s.ncols()
        )));
    }
    let mut max_asym = 0.0f64;
    for i in 0..k {
        for j in (i + 1)..k {
            max_asym = max_asym.max((s[(i, j)] - s[(j, i)]).abs());
        }
        if !s[(i, i)].is_finite() {
            return Err(Error::Domain("matrix entries must be finite".into()));
        }
    }
    if max_asym > SYMMETRY_TOL {
        return Err(Error::NotSymmetric { max_asym, tol: SYMMETRY_TOL });
    }
    let sym = (s + s.transpose()) * 0.5;

    let mut l = DMatrix::<f64>::zeros(k, k);
    for j in 0..k {
        let mut diag = sym[(j, j)];
        for p in 0..j {
            diag -= l[(j, p)] * l[(j, p)];
        }
        if !(diag > 0.0) {
            return Err(Error::NotPositiveDefinite { pivot: diag, index: j });
        }
        let d = diag.sqrt();
        l[(j, j)] = d;
        for i in (j + 1)..k {
            let mut v = sym[(i, j)];
            for p in 0..j {
                v -= l[(i, p)] * l[(j, p)];
            }
            l[(i, j)] = v / d;
        }
    }
    Ok(l)
}

/// A symmetric positive-definite matrix with its cached Cholesky factor.
#[derive(Debug, Clone)]
pub struct PosDefMatrix {
    matrix: DMatrix<f64>,
    chol: DMatrix<f64>,
}

impl PosDefMatrix {
    /// Validate symmetry (absolute tolerance 1e-12), symmetrize, and factor.
    pub fn new(matrix: DMatrix<f64>) -> Result<Self> {
        let chol = cholesky_sqrt(&matrix)?;
        let sym = (&matrix + matrix.transpose()) * 0.5;
        Ok(Self { matrix: sym, chol })
    }

    pub fn identity(k: usize) -> Self {
        Self { matrix: DMatrix::identity(k, k), chol: DMatrix::identity(k, k) }
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        if diag.iter().any(|&d| !(d > 0.0) || !d.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "diagonal entries must be positive and finite, got {diag:?}"
            )));
        }
        let k = diag.len();
        let matrix = DMatrix::from_fn(k, k, |i, j| if i == j { diag[i] } else { 0.0 });
        let chol = DMatrix::from_fn(k, k, |i, j| if i == j { diag[i].sqrt() } else { 0.0 });
        Ok(Self { matrix, chol })
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// The lower-triangular square root T with S = T Tᵀ.
    pub fn sqrt_lower(&self) -> &DMatrix<f64> {
        &self.chol
    }

    pub fn det(&self) -> f64 {
        self.chol.diagonal().iter().map(|d| d * d).product()
    }

    pub fn ln_det(&self) -> f64 {
        2.0 * self.chol.diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    /// Solve S y = b.
    pub fn solve_vec(&self, b: &DVector<f64>) -> DVector<f64> {
        let mut y = b.clone();
        self.chol.solve_lower_triangular_mut(&mut y);
        self.chol.transpose().solve_upper_triangular_mut(&mut y);
        y
    }

    /// Solve S Y = B column-wise.
    pub fn solve_mat(&self, b: &DMatrix<f64>) -> DMatrix<f64> {
        let mut y = b.clone();
        self.chol.solve_lower_triangular_mut(&mut y);
        self.chol.transpose().solve_upper_triangular_mut(&mut y);
        y
    }

    /// Quadratic form xᵀ S⁻¹ x = ‖T⁻¹x‖².
    pub fn inv_quad_form(&self, x: &DVector<f64>) -> f64 {
        let mut y = x.clone();
        self.chol.solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }

    /// ‖S⁻¹ x‖², i.e. the quadratic form with S⁻².
    pub fn inv_sq_quad_form(&self, x: &DVector<f64>) -> f64 {
        self.solve_vec(x).norm_squared()
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.solve_mat(&DMatrix::identity(self.dim(), self.dim()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_diagonal() {
        let l = cholesky_sqrt(&DMatrix::identity(3, 3)).unwrap();
        assert!((l - DMatrix::<f64>::identity(3, 3)).norm() < 1e-14);
        let d = cholesky_sqrt(&DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]))).unwrap();
        assert!((d[(0, 0)] - 2.0).abs() < 1e-14);
        assert!((d[(1, 1)] - 3.0).abs() < 1e-14);
        assert_eq!(d[(0, 1)], 0.0);
    }

    #[test]
    fn indefinite_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 1.0]);
        match cholesky_sqrt(&s) {
            Err(Error::NotPositiveDefinite { .. }) => {}
            other => panic!("expected not-positive-definite, got {other:?}"),
        }
    }

    #[test]
    fn asymmetric_rejected() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-9, 1.0]);
        match cholesky_sqrt(&s) {
            Err(Error::NotSymmetric { .. }) => {}
            other => panic!("expected not-symmetric, got {other:?}"),
        }
    }

    #[test]
    fn roundoff_asymmetry_symmetrized() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5 + 1e-14, 1.0]);
        assert!(cholesky_sqrt(&s).is_ok());
    }

    #[test]
    fn random_spd_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(314);
        for k in 1..=6usize {
            for _ in 0..20 {
                let a = DMatrix::from_fn(k, k, |_, _| rng.random::<f64>() * 2.0 - 1.0);
                let s = &a * a.transpose() + DMatrix::identity(k, k) * 0.5;
                let l = cholesky_sqrt(&s).unwrap();
                let recon = &l * l.transpose();
                let rel = (&recon - &s).norm() / s.norm();
                assert!(rel < 1e-10, "k={k} rel={rel:e}");
                for i in 0..k {
                    assert!(l[(i, i)] > 0.0);
                    for j in (i + 1)..k {
                        assert_eq!(l[(i, j)], 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn posdef_solve_and_det() {
        let s = PosDefMatrix::new(DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0])).unwrap();
        assert!((s.det() - 11.0).abs() < 1e-12);
        assert!((s.ln_det() - 11.0f64.ln()).abs() < 1e-12);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let y = s.solve_vec(&b);
        let back = s.matrix() * &y;
        assert!((back - &b).norm() < 1e-12);
        // xᵀS⁻¹x against direct inverse
        let inv = s.inverse();
        let q = (b.transpose() * inv * &b)[(0, 0)];
        assert!((s.inv_quad_form(&b) - q).abs() < 1e-12);
    }
}
