//! Regression backends for the effect-function step and the propensity model.
//!
//! Every backend is fit through [`fit`] and evaluated through [`HteModel`],
//! so learners can swap regressors without caring which one is in use.

mod kernel;
mod knn;
mod linear;
mod propensity;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use kernel::{select_bandwidth_loo, DEFAULT_BANDWIDTH_GRID};
pub use propensity::{expit, fit_propensity, PropensityDiagnostics, PropensityModel, DEFAULT_CLIP};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RegressError {
    #[error("no training rows")]
    Empty,
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("non-finite training data")]
    NonFinite,
    #[error("design matrix is rank deficient (rank {rank} of {cols}); use Ridge instead")]
    RankDeficient { rank: usize, cols: usize },
    #[error("invalid regressor: {0}")]
    InvalidSpec(String),
    #[error("single-class treatment indicator: propensity needs treated and control units")]
    SingleClass,
}

/// Kernel bandwidth, fixed or picked per fit by leave-one-out error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Bandwidth {
    Fixed(f64),
    LeaveOneOut { grid: Vec<f64> },
}

impl Bandwidth {
    pub fn loo_default() -> Self {
        Bandwidth::LeaveOneOut {
            grid: DEFAULT_BANDWIDTH_GRID.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RegressorSpec {
    #[default]
    Ols,
    Ridge {
        alpha: f64,
    },
    KernelSmoother {
        bandwidth: Bandwidth,
    },
    KNearest {
        k: usize,
    },
}

impl RegressorSpec {
    pub fn check(&self) -> Result<(), RegressError> {
        let bad = |msg: String| Err(RegressError::InvalidSpec(msg));
        match self {
            RegressorSpec::Ols => Ok(()),
            RegressorSpec::Ridge { alpha } if !(alpha.is_finite() && *alpha >= 0.0) => {
                bad(format!("ridge alpha must be >= 0, got {alpha}"))
            }
            RegressorSpec::KernelSmoother {
                bandwidth: Bandwidth::Fixed(h),
            } if !(h.is_finite() && *h > 0.0) => bad(format!("bandwidth must be > 0, got {h}")),
            RegressorSpec::KernelSmoother {
                bandwidth: Bandwidth::LeaveOneOut { grid },
            } if grid.is_empty() || grid.iter().any(|h| !(h.is_finite() && *h > 0.0)) => {
                bad("bandwidth grid must be nonempty and positive".into())
            }
            RegressorSpec::KNearest { k: 0 } => bad("k must be at least 1".into()),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) enum ModelState {
    Linear {
        intercept: f64,
        coefs: Vec<f64>,
    },
    Kernel {
        bandwidth: f64,
        points: Vec<Vec<f64>>,
        counts: Vec<f64>,
        sums: Vec<f64>,
    },
    Knn {
        k: usize,
        x: Vec<Vec<f64>>,
        y: Vec<f64>,
    },
}

/// A fitted regression function `x ↦ ŷ(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HteModel {
    pub spec: RegressorSpec,
    pub d: usize,
    pub(crate) state: ModelState,
}

impl HteModel {
    /// Linear model with the given intercept and slopes.
    pub fn linear(intercept: f64, coefs: Vec<f64>) -> Self {
        HteModel {
            spec: RegressorSpec::Ols,
            d: coefs.len(),
            state: ModelState::Linear { intercept, coefs },
        }
    }

    /// Evaluates the model; panics if `x` does not have `d` entries.
    pub fn predict(&self, x: &[f64]) -> f64 {
        assert_eq!(x.len(), self.d, "feature dimension mismatch");
        match &self.state {
            ModelState::Linear { intercept, coefs } => {
                intercept + coefs.iter().zip(x).map(|(b, v)| b * v).sum::<f64>()
            }
            ModelState::Kernel {
                bandwidth,
                points,
                counts,
                sums,
            } => kernel::predict(*bandwidth, points, counts, sums, x, None),
            ModelState::Knn { k, x: xs, y } => knn::predict(*k, xs, y, x),
        }
    }

    /// Evaluates at every row of `features`.
    pub fn predict_rows(&self, features: &DMatrix<f64>) -> Vec<f64> {
        (0..features.nrows())
            .map(|i| {
                let row: Vec<f64> = features.row(i).iter().copied().collect();
                self.predict(&row)
            })
            .collect()
    }

    /// `(intercept, slopes)` for linear backends.
    pub fn coefficients(&self) -> Option<(f64, &[f64])> {
        match &self.state {
            ModelState::Linear { intercept, coefs } => Some((*intercept, coefs)),
            _ => None,
        }
    }

    /// Bandwidth actually used by a kernel smoother.
    pub fn bandwidth(&self) -> Option<f64> {
        match &self.state {
            ModelState::Kernel { bandwidth, .. } => Some(*bandwidth),
            _ => None,
        }
    }
}

/// Fits `spec` to rows of `x` (q × d) against `y`.
pub fn fit(spec: &RegressorSpec, x: &DMatrix<f64>, y: &[f64]) -> Result<HteModel, RegressError> {
    spec.check()?;
    let q = x.nrows();
    if q == 0 {
        return Err(RegressError::Empty);
    }
    if y.len() != q {
        return Err(RegressError::DimensionMismatch(format!(
            "{q} feature rows but {} responses",
            y.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite);
    }
    let d = x.ncols();
    let state = match spec {
        RegressorSpec::Ols => linear::fit_ols(x, y)?,
        RegressorSpec::Ridge { alpha } => linear::fit_ridge(x, y, *alpha)?,
        RegressorSpec::KernelSmoother { bandwidth } => kernel::fit(x, y, bandwidth),
        RegressorSpec::KNearest { k } => knn::fit(x, y, *k),
    };
    Ok(HteModel {
        spec: spec.clone(),
        d,
        state,
    })
}

pub(crate) fn rows(x: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..x.nrows())
        .map(|i| x.row(i).iter().copied().collect())
        .collect()
}
