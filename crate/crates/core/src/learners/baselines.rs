//! Comparison learners that treat post-period observations as independent
//! rows (the S, T, X and residualization learners) or collapse each unit to a
//! before/after contrast (`did_hte`).

use nalgebra::{DMatrix, DVector};

use super::{
    EffectFunction, EstimateDiagnostics, HteEstimate, LearnerConfig, LearnerError, Method,
    PropensitySource, StepContext,
};
use crate::panel::PanelDataset;
use crate::regress::{self, fit_propensity, HteModel, RegressError};

/// Post-period rows: one per (unit, post period), unit-major.
struct PooledRows {
    x: DMatrix<f64>,
    y: Vec<f64>,
    treated: Vec<bool>,
}

impl PooledRows {
    fn new(ds: &PanelDataset) -> Self {
        let (n, t1, d) = (ds.n_units(), ds.t1(), ds.n_features());
        let x = DMatrix::from_fn(n * t1, d, |r, c| ds.features[(r / t1, c)]);
        let y = (0..n * t1)
            .map(|r| ds.outcomes[(r / t1, ds.t0 + r % t1)])
            .collect();
        let treated = (0..n * t1).map(|r| ds.treated_mask[r / t1]).collect();
        PooledRows { x, y, treated }
    }

    fn subset(&self, treated: bool) -> (DMatrix<f64>, Vec<f64>) {
        let idx: Vec<usize> = (0..self.y.len())
            .filter(|&r| self.treated[r] == treated)
            .collect();
        let x = DMatrix::from_fn(idx.len(), self.x.ncols(), |r, c| self.x[(idx[r], c)]);
        (x, idx.iter().map(|&r| self.y[r]).collect())
    }
}

fn row(x: &DMatrix<f64>, r: usize) -> Vec<f64> {
    x.row(r).iter().copied().collect()
}

fn finish(
    method: Method,
    function: EffectFunction,
    diagnostics: EstimateDiagnostics,
) -> HteEstimate {
    HteEstimate {
        method,
        function,
        diagnostics,
    }
}

/// One outcome model on `[x, D]`; the effect is `μ̂(x, 1) − μ̂(x, 0)`.
pub fn s_learner(
    dataset: &PanelDataset,
    config: &LearnerConfig,
) -> Result<HteEstimate, LearnerError> {
    dataset.validate().into_result()?;
    let rows = PooledRows::new(dataset);
    let d = rows.x.ncols();
    let z = DMatrix::from_fn(rows.y.len(), d + 1, |r, c| {
        if c < d {
            rows.x[(r, c)]
        } else {
            f64::from(u8::from(rows.treated[r]))
        }
    });
    let model = regress::fit(&config.regressor, &z, &rows.y).step("outcome regression")?;
    Ok(finish(
        Method::SLearner,
        EffectFunction::Contrast(model),
        EstimateDiagnostics::default(),
    ))
}

fn arm_models(
    rows: &PooledRows,
    config: &LearnerConfig,
) -> Result<(HteModel, HteModel), LearnerError> {
    let (x1, y1) = rows.subset(true);
    let (x0, y0) = rows.subset(false);
    let mu1 = regress::fit(&config.regressor, &x1, &y1).step("treated outcome regression")?;
    let mu0 = regress::fit(&config.regressor, &x0, &y0).step("control outcome regression")?;
    Ok((mu1, mu0))
}

/// Separate outcome models per arm; the effect is `μ̂₁(x) − μ̂₀(x)`.
pub fn t_learner(
    dataset: &PanelDataset,
    config: &LearnerConfig,
) -> Result<HteEstimate, LearnerError> {
    dataset.validate().into_result()?;
    let (mu1, mu0) = arm_models(&PooledRows::new(dataset), config)?;
    Ok(finish(
        Method::TLearner,
        EffectFunction::Difference {
            treated: mu1,
            control: mu0,
        },
        EstimateDiagnostics::default(),
    ))
}

/// X-learner: cross-imputed effects per arm, combined as
/// `ê(x)·τ̂₀(x) + (1 − ê(x))·τ̂₁(x)` with `τ̂₀` fit on controls.
pub fn x_learner(
    dataset: &PanelDataset,
    config: &LearnerConfig,
) -> Result<HteEstimate, LearnerError> {
    dataset.validate().into_result()?;
    let rows = PooledRows::new(dataset);
    let (mu1, mu0) = arm_models(&rows, config)?;
    let (x1, y1) = rows.subset(true);
    let (x0, y0) = rows.subset(false);
    let d1: Vec<f64> = y1
        .iter()
        .enumerate()
        .map(|(r, y)| y - mu0.predict(&row(&x1, r)))
        .collect();
    let d0: Vec<f64> = y0
        .iter()
        .enumerate()
        .map(|(r, y)| mu1.predict(&row(&x0, r)) - y)
        .collect();
    let tau1 = regress::fit(&config.regressor, &x1, &d1).step("treated effect regression")?;
    let tau0 = regress::fit(&config.regressor, &x0, &d0).step("control effect regression")?;
    let mut diagnostics = EstimateDiagnostics::default();
    let propensity = match config.force_propensity {
        Some(e) => PropensitySource::Constant(e),
        None => {
            let model = fit_propensity(
                &dataset.features,
                &dataset.treated_mask,
                config.propensity_clip,
            )
            .step("propensity")?;
            diagnostics.record_propensity(&model, &dataset.features);
            PropensitySource::Fitted(model)
        }
    };
    Ok(finish(
        Method::XLearner,
        EffectFunction::PropensityWeighted {
            propensity,
            e_weighted: tau0,
            complement_weighted: tau1,
        },
        diagnostics,
    ))
}

/// Least squares without intercept; errors on a rank-deficient design.
fn least_squares(z: DMatrix<f64>, y: &[f64]) -> Result<Vec<f64>, RegressError> {
    let cols = z.ncols();
    let svd = z.svd(true, true);
    let smax = svd.singular_values.max();
    let tol = 1e-10 * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > tol).count();
    if smax == 0.0 || rank < cols {
        return Err(RegressError::RankDeficient { rank, cols });
    }
    let theta = svd
        .solve(&DVector::from_column_slice(y), tol)
        .map_err(|e| RegressError::InvalidSpec(e.to_string()))?;
    Ok(theta.iter().copied().collect())
}

/// Robinson residualization: `Ỹ = Y − m̂(x)`, `D̃ = D − ê(x)` with both
/// nuisances fit by the configured regressor, then least squares of `Ỹ` on
/// `D̃·[1, x]`. The resulting effect is linear in `x`.
pub fn r_learner_lite(
    dataset: &PanelDataset,
    config: &LearnerConfig,
) -> Result<HteEstimate, LearnerError> {
    dataset.validate().into_result()?;
    let rows = PooledRows::new(dataset);
    let dflag: Vec<f64> = rows
        .treated
        .iter()
        .map(|&t| f64::from(u8::from(t)))
        .collect();
    let m =
        regress::fit(&config.regressor, &rows.x, &rows.y).step("outcome nuisance regression")?;
    let e =
        regress::fit(&config.regressor, &rows.x, &dflag).step("treatment nuisance regression")?;
    let mhat = m.predict_rows(&rows.x);
    let ehat = e.predict_rows(&rows.x);
    let d = rows.x.ncols();
    let z = DMatrix::from_fn(rows.y.len(), d + 1, |r, c| {
        let dt = dflag[r] - ehat[r];
        if c == 0 {
            dt
        } else {
            dt * rows.x[(r, c - 1)]
        }
    });
    let ytilde: Vec<f64> = rows.y.iter().zip(&mhat).map(|(y, m)| y - m).collect();
    let theta = least_squares(z, &ytilde).step("residual regression")?;
    let model = HteModel::linear(theta[0], theta[1..].to_vec());
    Ok(finish(
        Method::RLearnerLite,
        EffectFunction::Direct(model),
        EstimateDiagnostics::default(),
    ))
}

/// Difference-in-differences surrogate: each unit's post-mean minus pre-mean
/// contrast, with the control contrasts modelled as `ĝ(x)` and the treated
/// excess `contrast − ĝ(x)` regressed on features.
pub fn did_hte(
    dataset: &PanelDataset,
    config: &LearnerConfig,
) -> Result<HteEstimate, LearnerError> {
    dataset.validate().into_result()?;
    let (t0, t) = (dataset.t0, dataset.n_periods());
    let contrast: Vec<f64> = (0..dataset.n_units())
        .map(|i| {
            let y = dataset.outcomes.row(i);
            let pre = y.columns(0, t0).mean();
            let post = y.columns(t0, t - t0).mean();
            post - pre
        })
        .collect();
    let pick = |units: &[usize]| {
        let x = DMatrix::from_fn(units.len(), dataset.n_features(), |r, c| {
            dataset.features[(units[r], c)]
        });
        let y: Vec<f64> = units.iter().map(|&i| contrast[i]).collect();
        (x, y)
    };
    let (xc, yc) = pick(&dataset.units_on(crate::panel::UnitSide::Control));
    let g = regress::fit(&config.regressor, &xc, &yc).step("control contrast regression")?;
    let (xt, yt) = pick(&dataset.units_on(crate::panel::UnitSide::Treated));
    let excess: Vec<f64> = yt
        .iter()
        .enumerate()
        .map(|(r, c)| c - g.predict(&row(&xt, r)))
        .collect();
    let model = regress::fit(&config.regressor, &xt, &excess).step("treated excess regression")?;
    Ok(finish(
        Method::DidHte,
        EffectFunction::Direct(model),
        EstimateDiagnostics::default(),
    ))
}
