//! Heterogeneous treatment effect learners.
//!
//! The synthetic learners impute individual effects with synthetic control
//! fits and regress them on unit features. The baselines pool post-period
//! observations as independent rows and share the same regression backends,
//! so comparisons isolate how each method treats the panel structure.

mod baselines;
mod dr;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::panel::{PanelDataset, PanelError};
use crate::regress::{HteModel, PropensityModel, RegressError, RegressorSpec, DEFAULT_CLIP};
use crate::sc::{ScError, ScSettings};

pub use baselines::{did_hte, r_learner_lite, s_learner, t_learner, x_learner};
pub use dr::{dr_h2sl, pseudo_outcome};
pub use synthetic::{h1sl, h2sl, side_effect_model, ImputedEffects};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    H1sl,
    H2sl,
    DrH2sl,
    SLearner,
    TLearner,
    XLearner,
    RLearnerLite,
    DidHte,
}

impl Method {
    pub const ALL: [Method; 8] = [
        Method::H1sl,
        Method::H2sl,
        Method::DrH2sl,
        Method::SLearner,
        Method::TLearner,
        Method::XLearner,
        Method::RLearnerLite,
        Method::DidHte,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::H1sl => "h1sl",
            Method::H2sl => "h2sl",
            Method::DrH2sl => "dr",
            Method::SLearner => "s",
            Method::TLearner => "t",
            Method::XLearner => "x",
            Method::RLearnerLite => "rlite",
            Method::DidHte => "did",
        }
    }

    /// Parses a comma-separated method list such as `h1sl,h2sl,x`.
    pub fn parse_list(list: &str) -> Result<Vec<Method>, LearnerError> {
        let methods = list
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(str::parse)
            .collect::<Result<Vec<_>, _>>()?;
        if methods.is_empty() {
            return Err(LearnerError::UnknownMethod(list.to_string()));
        }
        Ok(methods)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = LearnerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Method::ALL
            .iter()
            .copied()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| LearnerError::UnknownMethod(s.to_string()))
    }
}

/// How the imputed effects of one unit enter the effect regression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// One row per (unit, post-period).
    #[default]
    Pooled,
    /// One row per unit holding its mean post-period effect.
    UnitMean,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrOptions {
    pub crossfit: bool,
    /// Use every post-period instead of only the last one.
    pub pooled_time: bool,
    pub max_split_attempts: usize,
}

impl Default for DrOptions {
    fn default() -> Self {
        DrOptions {
            crossfit: true,
            pooled_time: false,
            max_split_attempts: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnerConfig {
    pub regressor: RegressorSpec,
    #[serde(default)]
    pub sc: ScSettings,
    pub propensity_clip: f64,
    #[serde(default)]
    pub pooling: Pooling,
    #[serde(default)]
    pub dr: DrOptions,
    /// Seed for the learners that randomize (sample splitting).
    #[serde(default)]
    pub seed: u64,
    /// Replaces the fitted propensity in the two-sided combination.
    #[serde(default)]
    pub force_propensity: Option<f64>,
}

impl Default for LearnerConfig {
    fn default() -> Self {
        LearnerConfig {
            regressor: RegressorSpec::Ols,
            sc: ScSettings::default(),
            propensity_clip: DEFAULT_CLIP,
            pooling: Pooling::Pooled,
            dr: DrOptions::default(),
            seed: 0,
            force_propensity: None,
        }
    }
}

impl LearnerConfig {
    pub fn with_regressor(regressor: RegressorSpec) -> Self {
        LearnerConfig {
            regressor,
            ..LearnerConfig::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum LearnerError {
    #[error(transparent)]
    Panel(#[from] PanelError),
    #[error("synthetic control step ({step}): {source}")]
    Sc {
        step: &'static str,
        #[source]
        source: ScError,
    },
    #[error("regression step ({step}): {source}")]
    Regress {
        step: &'static str,
        #[source]
        source: RegressError,
    },
    #[error("could not split units into two folds with both arms after {0} attempts")]
    FoldInfeasible(usize),
    #[error("unknown method `{0}` (expected one of h1sl,h2sl,dr,s,t,x,rlite,did)")]
    UnknownMethod(String),
}

pub(crate) trait StepContext<T> {
    fn step(self, step: &'static str) -> Result<T, LearnerError>;
}

impl<T> StepContext<T> for Result<T, RegressError> {
    fn step(self, step: &'static str) -> Result<T, LearnerError> {
        self.map_err(|source| LearnerError::Regress { step, source })
    }
}

impl<T> StepContext<T> for Result<T, ScError> {
    fn step(self, step: &'static str) -> Result<T, LearnerError> {
        self.map_err(|source| LearnerError::Sc { step, source })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum PropensitySource {
    Fitted(PropensityModel),
    Constant(f64),
}

impl PropensitySource {
    pub fn at(&self, x: &[f64]) -> f64 {
        match self {
            PropensitySource::Fitted(m) => m.predict(x),
            PropensitySource::Constant(e) => *e,
        }
    }
}

/// A fitted effect function `x ↦ τ̂(x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum EffectFunction {
    Direct(HteModel),
    /// `ê(x)·a(x) + (1 − ê(x))·b(x)` with `a = e_weighted`, `b = complement_weighted`.
    PropensityWeighted {
        propensity: PropensitySource,
        e_weighted: HteModel,
        complement_weighted: HteModel,
    },
    /// `μ̂₁(x) − μ̂₀(x)`.
    Difference {
        treated: HteModel,
        control: HteModel,
    },
    /// `μ̂(x, 1) − μ̂(x, 0)` for a model fit on features plus the indicator.
    Contrast(HteModel),
    /// Pointwise mean of several functions.
    Average(Vec<EffectFunction>),
}

impl EffectFunction {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        match self {
            EffectFunction::Direct(m) => m.predict(x),
            EffectFunction::PropensityWeighted {
                propensity,
                e_weighted,
                complement_weighted,
            } => {
                let e = propensity.at(x);
                e * e_weighted.predict(x) + (1.0 - e) * complement_weighted.predict(x)
            }
            EffectFunction::Difference { treated, control } => {
                treated.predict(x) - control.predict(x)
            }
            EffectFunction::Contrast(m) => {
                let mut z = x.to_vec();
                z.push(1.0);
                let on = m.predict(&z);
                *z.last_mut().unwrap() = 0.0;
                on - m.predict(&z)
            }
            EffectFunction::Average(parts) => {
                parts.iter().map(|p| p.evaluate(x)).sum::<f64>() / parts.len() as f64
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EstimateDiagnostics {
    /// Mean and max root mean squared pre-period residual of the synthetic fits.
    pub pre_rmse_mean: Option<f64>,
    pub pre_rmse_max: Option<f64>,
    /// Training units whose propensity sits on the clip boundary.
    pub propensity_clipped: usize,
    pub propensity_separated: bool,
}

impl EstimateDiagnostics {
    pub(crate) fn record_fits<'a>(&mut self, rmses: impl IntoIterator<Item = &'a f64>) {
        let v: Vec<f64> = rmses.into_iter().copied().collect();
        if v.is_empty() {
            return;
        }
        self.pre_rmse_mean = Some(v.iter().sum::<f64>() / v.len() as f64);
        self.pre_rmse_max = Some(v.iter().copied().fold(f64::NEG_INFINITY, f64::max));
    }

    pub(crate) fn record_propensity(&mut self, model: &PropensityModel, features: &DMatrix<f64>) {
        self.propensity_clipped += (0..features.nrows())
            .filter(|&i| {
                let row: Vec<f64> = features.row(i).iter().copied().collect();
                model.is_clipped(&row)
            })
            .count();
        self.propensity_separated |= model.diagnostics.separated;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HteEstimate {
    pub method: Method,
    pub function: EffectFunction,
    pub diagnostics: EstimateDiagnostics,
}

impl HteEstimate {
    pub fn evaluate(&self, x: &[f64]) -> f64 {
        self.function.evaluate(x)
    }

    pub fn evaluate_rows(&self, features: &DMatrix<f64>) -> Vec<f64> {
        (0..features.nrows())
            .map(|i| {
                let row: Vec<f64> = features.row(i).iter().copied().collect();
                self.evaluate(&row)
            })
            .collect()
    }
}

/// Runs `method` on `dataset`.
pub fn estimate(
    method: Method,
    dataset: &PanelDataset,
    config: &LearnerConfig,
) -> Result<HteEstimate, LearnerError> {
    match method {
        Method::H1sl => h1sl(dataset, config),
        Method::H2sl => h2sl(dataset, config),
        Method::DrH2sl => dr_h2sl(dataset, config),
        Method::SLearner => s_learner(dataset, config),
        Method::TLearner => t_learner(dataset, config),
        Method::XLearner => x_learner(dataset, config),
        Method::RLearnerLite => r_learner_lite(dataset, config),
        Method::DidHte => did_hte(dataset, config),
    }
}

/// Stacks the given feature rows into a matrix, repeating each `reps[k]` times.
pub(crate) fn repeat_rows(features: &DMatrix<f64>, units: &[usize], reps: usize) -> DMatrix<f64> {
    let d = features.ncols();
    DMatrix::from_fn(units.len() * reps, d, |r, k| features[(units[r / reps], k)])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn method_names_round_trip() {
        let parsed = Method::parse_list("h1sl,h2sl,dr,s,t,x,rlite,did").unwrap();
        assert_eq!(parsed, Method::ALL.to_vec());
        assert!(matches!(
            Method::parse_list("h1sl,bogus"),
            Err(LearnerError::UnknownMethod(_))
        ));
        assert!(Method::parse_list("").is_err());
    }

    #[test]
    fn two_sided_combination_arithmetic() {
        let tau0 = HteModel::linear(2.0, vec![0.0]);
        let tau1 = HteModel::linear(1.0, vec![0.0]);
        let f = EffectFunction::PropensityWeighted {
            propensity: PropensitySource::Constant(0.3),
            e_weighted: tau0.clone(),
            complement_weighted: tau1,
        };
        assert!((f.evaluate(&[5.0]) - 1.3).abs() < 1e-15);
        let same = EffectFunction::PropensityWeighted {
            propensity: PropensitySource::Constant(0.77),
            e_weighted: tau0.clone(),
            complement_weighted: tau0,
        };
        assert!((same.evaluate(&[-1.0]) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn contrast_and_average() {
        let m = HteModel::linear(1.0, vec![2.0, 0.5]);
        assert_eq!(EffectFunction::Contrast(m.clone()).evaluate(&[3.0]), 0.5);
        let avg = EffectFunction::Average(vec![
            EffectFunction::Direct(HteModel::linear(1.0, vec![0.0])),
            EffectFunction::Direct(HteModel::linear(3.0, vec![0.0])),
        ]);
        assert_eq!(avg.evaluate(&[9.0]), 2.0);
    }
}
