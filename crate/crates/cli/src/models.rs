//! Construction of library objects from the experiment configuration, plus
//! the named invariant statistics used by the robustness checks.

use crate::config::ModelConfig;
use ginv_core::affine_shape::{MatrixModelParams, TraceProfile};
use ginv_core::analysis::{InvarianceClass, StatisticSpec};
use ginv_core::numerics::PosDefMatrix;
use ginv_core::pca::PcaParams;
use ginv_core::vspherical::{v_elliptical, v_lq, v_max, VFunction, VSphericalParams};
use ginv_core::{Error, Result};
use nalgebra::{DMatrix, DVector};

/// The three sampling models exposed by the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelKind {
    VSpherical,
    AffineShape,
    Pca,
}

impl ModelKind {
    pub fn parse(label: &str) -> Result<Self> {
        match label {
            "vspherical" => Ok(Self::VSpherical),
            "affine-shape" => Ok(Self::AffineShape),
            "pca" => Ok(Self::Pca),
            other => Err(Error::InvalidParameter(format!(
                "unknown model kind '{other}' (expected vspherical, affine-shape, or pca)"
            ))),
        }
    }

    pub fn from_config(mc: &ModelConfig) -> Result<Self> {
        match &mc.kind {
            Some(kind) => Self::parse(kind),
            None => Err(Error::InvalidParameter(
                "missing required field `model.kind` (vspherical, affine-shape, or pca)".into(),
            )),
        }
    }
}

/// A fully validated v-spherical setup.
pub struct VsphSetup {
    pub n: usize,
    pub v: VFunction,
    pub sigma0: PosDefMatrix,
    pub params: VSphericalParams,
}

pub fn build_vspherical(mc: &ModelConfig) -> Result<VsphSetup> {
    let n = mc
        .n
        .ok_or_else(|| Error::InvalidParameter("missing required field `model.n`".into()))?;
    if n == 0 {
        return Err(Error::InvalidParameter("`model.n` must be at least 1".into()));
    }
    let sigma0 = match &mc.sigma0_diag {
        Some(diag) => {
            if diag.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "`model.sigma0_diag` has length {}, expected n = {n}",
                    diag.len()
                )));
            }
            PosDefMatrix::from_diagonal(diag)?
        }
        None => PosDefMatrix::identity(n),
    };
    let v = match mc.v.as_deref().unwrap_or("elliptical") {
        "elliptical" => v_elliptical(sigma0.clone()),
        "lq" => v_lq(mc.q.ok_or_else(|| {
            Error::InvalidParameter("`model.v = \"lq\"` needs `model.q`".into())
        })?)?,
        "max" => v_max(),
        other => {
            return Err(Error::InvalidParameter(format!(
                "unknown v-function '{other}' (expected elliptical, lq, or max)"
            )))
        }
    };
    let mu = match &mc.mu {
        Some(vals) => {
            if vals.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "`model.mu` has length {}, expected n = {n}",
                    vals.len()
                )));
            }
            DVector::from_vec(vals.clone())
        }
        None => DVector::zeros(n),
    };
    let params = VSphericalParams::new(mu, mc.sigma.unwrap_or(1.0))?;
    Ok(VsphSetup { n, v, sigma0, params })
}

/// A fully validated affine-shape setup.
pub struct AffineSetup {
    pub n: usize,
    pub k: usize,
    pub sigma0: PosDefMatrix,
    pub params: MatrixModelParams,
}

pub fn build_affine(mc: &ModelConfig) -> Result<AffineSetup> {
    let n = mc
        .n
        .ok_or_else(|| Error::InvalidParameter("missing required field `model.n`".into()))?;
    let k = mc
        .k
        .ok_or_else(|| Error::InvalidParameter("missing required field `model.k`".into()))?;
    if k == 0 || n <= k {
        return Err(Error::InvalidParameter(format!(
            "affine-shape needs 1 ≤ k < n, got k = {k}, n = {n}"
        )));
    }
    let sigma0 = match &mc.sigma0_diag {
        Some(diag) => {
            if diag.len() != n {
                return Err(Error::DimensionMismatch(format!(
                    "`model.sigma0_diag` has length {}, expected n = {n}",
                    diag.len()
                )));
            }
            PosDefMatrix::from_diagonal(diag)?
        }
        None => PosDefMatrix::identity(n),
    };
    let m = match &mc.m {
        Some(vals) => {
            if vals.len() != n * k {
                return Err(Error::DimensionMismatch(format!(
                    "`model.m` has {} values, expected n·k = {}",
                    vals.len(),
                    n * k
                )));
            }
            DMatrix::from_row_slice(n, k, vals)
        }
        None => DMatrix::zeros(n, k),
    };
    let e = match &mc.e {
        Some(vals) => {
            if vals.len() != k * k {
                return Err(Error::DimensionMismatch(format!(
                    "`model.e` has {} values, expected k·k = {}",
                    vals.len(),
                    k * k
                )));
            }
            DMatrix::from_row_slice(k, k, vals)
        }
        None => DMatrix::identity(k, k),
    };
    let params = MatrixModelParams::new(m, e)?;
    Ok(AffineSetup { n, k, sigma0, params })
}

/// A fully validated PCA setup.
pub struct PcaSetup {
    pub n: usize,
    pub lambda0: Vec<f64>,
    pub params: PcaParams,
}

pub fn build_pca(mc: &ModelConfig) -> Result<PcaSetup> {
    let n = mc
        .n
        .ok_or_else(|| Error::InvalidParameter("missing required field `model.n`".into()))?;
    let lambda0 = mc
        .lambda0
        .clone()
        .ok_or_else(|| Error::InvalidParameter("missing required field `model.lambda0`".into()))?;
    ginv_core::pca::validate_lambda0(&lambda0)?;
    let k = lambda0.len();
    let p = match &mc.p {
        Some(vals) => {
            if vals.len() != k * k {
                return Err(Error::DimensionMismatch(format!(
                    "`model.p` has {} values, expected k·k = {}",
                    vals.len(),
                    k * k
                )));
            }
            DMatrix::from_row_slice(k, k, vals)
        }
        None => DMatrix::identity(k, k),
    };
    let params = PcaParams::new(p, mc.g.unwrap_or(1.0))?;
    Ok(PcaSetup { n, lambda0, params })
}

/// The generator labels every model family exposes.
pub const BUILTIN_GENERATORS: [&str; 4] =
    ["gaussian", "exp-power-q1", "exp-power-q4", "student-d3"];

/// Resolve the trace profile for a matrix family of total dimension p = nk.
pub fn trace_profile(label: &str, p: usize) -> Result<TraceProfile> {
    TraceProfile::builtin(label, p)
}

/// Named statistic of the v-spherical model.  All invariant statistics act
/// on the raw observation, so null-robustness runs require a zero location.
pub fn vspherical_statistic(
    label: &str,
    v: &VFunction,
    design: Option<DMatrix<f64>>,
) -> Result<StatisticSpec<DVector<f64>>> {
    match label {
        "cross-section" => {
            let v = v.clone();
            Ok(StatisticSpec {
                label: "cross-section".into(),
                eval: Box::new(move |x: &DVector<f64>| {
                    let val = v.eval_checked(x)?;
                    Ok(x / val)
                }),
                invariance: InvarianceClass::Invariant,
            })
        }
        "direction" => Ok(StatisticSpec {
            label: "direction".into(),
            eval: Box::new(|x: &DVector<f64>| {
                let norm = x.norm();
                if norm == 0.0 {
                    return Err(Error::ExcludedPoint("zero observation has no direction".into()));
                }
                Ok(x / norm)
            }),
            invariance: InvarianceClass::Invariant,
        }),
        "residual-direction" => {
            let design = design.ok_or_else(|| {
                Error::InvalidParameter(
                    "the residual-direction statistic needs a regression design".into(),
                )
            })?;
            Ok(StatisticSpec {
                label: "residual-direction".into(),
                eval: Box::new(move |y: &DVector<f64>| {
                    ginv_core::vspherical::regression_residual_direction(y, &design)
                }),
                invariance: InvarianceClass::Invariant,
            })
        }
        "raw" => Ok(StatisticSpec {
            label: "raw".into(),
            eval: Box::new(|x: &DVector<f64>| Ok(x.clone())),
            invariance: InvarianceClass::Unrestricted,
        }),
        other => Err(Error::InvalidParameter(format!(
            "unknown v-spherical statistic '{other}' \
             (expected cross-section, direction, residual-direction, or raw)"
        ))),
    }
}

/// Named statistic of the affine-shape model.
pub fn affine_statistic(label: &str) -> Result<StatisticSpec<DMatrix<f64>>> {
    match label {
        "configuration" | "cross-section" => Ok(StatisticSpec {
            label: "configuration".into(),
            eval: Box::new(|y: &DMatrix<f64>| {
                let cfg = ginv_core::affine_shape::configuration_coords(y)?;
                Ok(DVector::from_vec(flatten_row_major(cfg.v())))
            }),
            invariance: InvarianceClass::Invariant,
        }),
        "raw" => Ok(StatisticSpec {
            label: "raw".into(),
            eval: Box::new(|y: &DMatrix<f64>| Ok(DVector::from_vec(flatten_row_major(y)))),
            invariance: InvarianceClass::Unrestricted,
        }),
        other => Err(Error::InvalidParameter(format!(
            "unknown affine-shape statistic '{other}' (expected configuration or raw)"
        ))),
    }
}

/// Named statistic of the PCA model.
pub fn pca_statistic(label: &str, lambda0: &[f64]) -> Result<StatisticSpec<DMatrix<f64>>> {
    match label {
        "cross-section" | "normalized-configuration" => {
            let l = lambda0.to_vec();
            Ok(StatisticSpec {
                label: "cross-section".into(),
                eval: Box::new(move |x: &DMatrix<f64>| {
                    let r = ginv_core::pca::pca_r(x, &l)?;
                    Ok(DVector::from_vec(flatten_row_major(x)) / r)
                }),
                invariance: InvarianceClass::Invariant,
            })
        }
        "raw" => Ok(StatisticSpec {
            label: "raw".into(),
            eval: Box::new(|x: &DMatrix<f64>| Ok(DVector::from_vec(flatten_row_major(x)))),
            invariance: InvarianceClass::Unrestricted,
        }),
        other => Err(Error::InvalidParameter(format!(
            "unknown PCA statistic '{other}' (expected cross-section or raw)"
        ))),
    }
}

/// Row-major flattening shared by the matrix statistics and artifacts.
pub fn flatten_row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

/// Map raw draws through a statistic, dropping nothing: a statistic error on
/// a sampled point is a hard failure because samplers already avoid the
/// excluded null set.
pub fn apply_statistic<X>(
    stat: &StatisticSpec<X>,
    draws: &[X],
) -> Result<Vec<DVector<f64>>> {
    draws.iter().map(|x| (stat.eval)(x)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn model_kind_parses() {
        assert_eq!(ModelKind::parse("vspherical").unwrap(), ModelKind::VSpherical);
        assert_eq!(ModelKind::parse("affine-shape").unwrap(), ModelKind::AffineShape);
        assert_eq!(ModelKind::parse("pca").unwrap(), ModelKind::Pca);
        assert!(ModelKind::parse("other").is_err());
    }

    #[test]
    fn vspherical_defaults() {
        let mc = ModelConfig { kind: Some("vspherical".into()), n: Some(2), ..Default::default() };
        let setup = build_vspherical(&mc).unwrap();
        assert_eq!(setup.n, 2);
        assert_eq!(setup.params.sigma(), 1.0);
        assert_eq!(setup.params.mu().len(), 2);
    }

    #[test]
    fn affine_validation() {
        let mc = ModelConfig {
            kind: Some("affine-shape".into()),
            n: Some(2),
            k: Some(2),
            ..Default::default()
        };
        assert!(build_affine(&mc).is_err(), "n ≤ k must be rejected");
    }

    #[test]
    fn statistics_resolve() {
        let v = v_max();
        assert!(vspherical_statistic("cross-section", &v, None).is_ok());
        assert!(vspherical_statistic("residual-direction", &v, None).is_err());
        assert!(vspherical_statistic("nope", &v, None).is_err());
        assert!(affine_statistic("configuration").is_ok());
        assert!(pca_statistic("cross-section", &[2.0, 1.0]).is_ok());
    }
}
