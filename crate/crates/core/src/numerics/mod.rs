//! Special functions, one-dimensional radial quadrature, and small dense
//! linear-algebra helpers shared by all model modules.

pub mod gamma;
pub mod linalg;
pub mod quad;

pub use gamma::{
    chi_square_sf, gamma as gamma_fn, kolmogorov_sf, ln_gamma, ln_multivariate_gamma,
    multivariate_gamma, regularized_gamma_p, regularized_gamma_q, sphere_surface_area,
};
pub use linalg::{cholesky_sqrt, PosDefMatrix, SYMMETRY_TOL};
pub use quad::{integrate, integrate_radial, Estimate, QuadratureSpec};
