//! Synthetic control weights and counterfactual imputation.

mod fit;
mod impute;
mod penalty_cv;
mod projection;

use thiserror::Error;

pub use fit::{fit_weights, ConstraintKind, ConstraintSpec, SolverOpts, SyntheticFit};
pub use impute::{
    impute_control_counterfactuals, impute_side, impute_treated_counterfactuals, ScSettings,
    SideImputation,
};
pub use penalty_cv::{select_penalty_cv, TemporalFoldSpec};
pub use projection::{project_l1_ball, project_simplex};

#[derive(Debug, Error)]
pub enum ScError {
    #[error("non-finite values in {0}")]
    NonFinite(&'static str),
    #[error("invalid constraint: {0}")]
    InvalidConstraint(String),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("solver did not converge (final gap {gap:.3e} after {} iterations)", best.iterations)]
    NonConvergence { gap: f64, best: Box<SyntheticFit> },
    #[error("insufficient pre-period for CV: {0}")]
    InsufficientPrePeriod(String),
    #[error("unit `{unit}`: {source}")]
    Unit {
        unit: String,
        #[source]
        source: Box<ScError>,
    },
}
