//! Group-invariant sampling models: orbital decompositions, closed-form
//! cross-section densities, marginal posterior kernels, and the Monte Carlo /
//! quadrature machinery to verify their invariance properties.
//!
//! The framework decomposes an observation x into a group part r(x) and a
//! cross-section part z(x) = r(x)⁻¹x. Two structural facts drive everything
//! here: with the interest parameter at the identity coset, the distribution
//! of z(x) does not depend on the density generator (null robustness); and
//! integrating a relatively invariant prior over the nuisance group collapses
//! the marginal of (x, interest parameter) onto a single closed-form kernel
//! shared by every generator (marginal equivalence).
//!
//! Concrete instances: v-spherical (star-shaped) location–scale families on
//! ℝⁿ, affine shape configurations of landmark figures, and a PCA model with
//! known eigenvalue pattern.

pub mod affine_shape;
pub mod analysis;
pub mod batch;
pub mod error;
pub mod numerics;
pub mod orbital;
pub mod pca;
pub mod rng;
pub mod vspherical;

pub use error::{Error, Result};
