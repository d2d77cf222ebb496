//! Heterogeneous treatment effect estimation for panel data with synthetic
//! control imputation.
//!
//! The pipeline: a [`PanelDataset`] is imputed unit by unit with restricted
//! least squares weights ([`sc`]), the imputed individual effects are
//! regressed on unit features ([`regress`]), and the learners in
//! [`learners`] assemble the final effect function. [`simgen`] and
//! [`harness`] provide simulated panels with known effects and a replicated
//! benchmark runner.
//!
//! ```
//! use panelhte::{generate, h1sl, LearnerConfig, ScenarioConfig};
//!
//! let sim = generate(&ScenarioConfig::preset("paper-a").unwrap()).unwrap();
//! let est = h1sl(&sim.dataset, &LearnerConfig::default()).unwrap();
//! let tau_hat = est.evaluate(&[0.5, -0.5]);
//! assert!(tau_hat.is_finite());
//! ```

pub mod harness;
pub mod learners;
pub mod panel;
pub mod regress;
pub mod sc;
pub mod simgen;

pub use harness::{
    run_experiment, summarize, EvalOn, Experiment, HarnessError, RunResult, RunStatus, SummaryRow,
};
pub use learners::{
    dr_h2sl, estimate, h1sl, h2sl, EffectFunction, HteEstimate, LearnerConfig, LearnerError,
    Method, Pooling,
};
pub use panel::{ColumnSpec, PanelDataset, PanelError, UnitSide};
pub use regress::{Bandwidth, HteModel, RegressError, RegressorSpec};
pub use sc::{
    fit_weights, ConstraintKind, ConstraintSpec, ScError, ScSettings, SolverOpts, SyntheticFit,
};
pub use simgen::{generate, true_tau, ScenarioConfig, SimError, SimulatedPanel, TauKind};
