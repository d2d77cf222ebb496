use nalgebra::DMatrix;

use super::{
    repeat_rows, EffectFunction, EstimateDiagnostics, HteEstimate, LearnerConfig, LearnerError,
    Method, Pooling, PropensitySource, StepContext,
};
use crate::panel::{PanelDataset, UnitSide};
use crate::regress::{self, fit_propensity, HteModel};
use crate::sc::{impute_side, SideImputation, SyntheticFit};

/// Imputed individual effects for the units on one side over the post-period.
///
/// Treated units carry `Yᵢₜ − Ŷᵢₜ(0)`; control units carry `Ŷ′ⱼₜ(1) − Yⱼₜ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ImputedEffects {
    pub side: UnitSide,
    pub units: Vec<usize>,
    /// `units.len() × T₁`.
    pub values: DMatrix<f64>,
    pub source_fits: Vec<SyntheticFit>,
}

impl ImputedEffects {
    pub fn from_imputation(dataset: &PanelDataset, imputation: SideImputation) -> Self {
        let t0 = dataset.t0;
        let SideImputation {
            side,
            units,
            fits,
            imputed,
        } = imputation;
        let values = DMatrix::from_fn(units.len(), dataset.t1(), |r, s| {
            let observed = dataset.outcomes[(units[r], t0 + s)];
            match side {
                UnitSide::Treated => observed - imputed[(r, s)],
                UnitSide::Control => imputed[(r, s)] - observed,
            }
        });
        ImputedEffects {
            side,
            units,
            values,
            source_fits: fits,
        }
    }

    /// Rebuilds the effect of row `r` at post-period `s` from the stored fit.
    pub fn recompute(&self, dataset: &PanelDataset, r: usize, s: usize) -> f64 {
        let t = dataset.t0 + s;
        let donors = dataset.units_on(self.side.other());
        let synthetic =
            self.source_fits[r].predict(donors.iter().map(|&j| dataset.outcomes[(j, t)]));
        let observed = dataset.outcomes[(self.units[r], t)];
        match self.side {
            UnitSide::Treated => observed - synthetic,
            UnitSide::Control => synthetic - observed,
        }
    }

    /// Regression rows `(features, effects)` under the given pooling.
    pub(crate) fn design(
        &self,
        dataset: &PanelDataset,
        pooling: Pooling,
    ) -> (DMatrix<f64>, Vec<f64>) {
        match pooling {
            Pooling::Pooled => {
                let t1 = self.values.ncols();
                let x = repeat_rows(&dataset.features, &self.units, t1);
                let y = (0..self.units.len())
                    .flat_map(|r| self.values.row(r).iter().copied().collect::<Vec<_>>())
                    .collect();
                (x, y)
            }
            Pooling::UnitMean => {
                let x = repeat_rows(&dataset.features, &self.units, 1);
                let y = (0..self.units.len())
                    .map(|r| self.values.row(r).mean())
                    .collect();
                (x, y)
            }
        }
    }
}

fn imputed_effects(
    dataset: &PanelDataset,
    side: UnitSide,
    config: &LearnerConfig,
) -> Result<ImputedEffects, LearnerError> {
    let step = match side {
        UnitSide::Treated => "impute control counterfactuals",
        UnitSide::Control => "impute treated counterfactuals",
    };
    let imputation = impute_side(dataset, side, &config.sc).step(step)?;
    Ok(ImputedEffects::from_imputation(dataset, imputation))
}

/// Imputes the effects on `side` and regresses them on the features of that side.
pub fn side_effect_model(
    dataset: &PanelDataset,
    side: UnitSide,
    config: &LearnerConfig,
) -> Result<(HteModel, ImputedEffects), LearnerError> {
    dataset.validate().into_result()?;
    let effects = imputed_effects(dataset, side, config)?;
    let (x, y) = effects.design(dataset, config.pooling);
    let model = regress::fit(&config.regressor, &x, &y).step("effect regression")?;
    Ok((model, effects))
}

/// One-sided synthetic learner: synthesize each treated unit from the
/// controls, impute its post-period effects, and regress them on features.
pub fn h1sl(dataset: &PanelDataset, config: &LearnerConfig) -> Result<HteEstimate, LearnerError> {
    let (model, effects) = side_effect_model(dataset, UnitSide::Treated, config)?;
    let mut diagnostics = EstimateDiagnostics::default();
    diagnostics.record_fits(effects.source_fits.iter().map(|f| &f.pre_rmse));
    Ok(HteEstimate {
        method: Method::H1sl,
        function: EffectFunction::Direct(model),
        diagnostics,
    })
}

/// Two-sided synthetic learner: effect functions from both sides, combined
/// with propensity weights.
pub fn h2sl(dataset: &PanelDataset, config: &LearnerConfig) -> Result<HteEstimate, LearnerError> {
    let (tau0, treated) = side_effect_model(dataset, UnitSide::Treated, config)?;
    let (tau1, control) = side_effect_model(dataset, UnitSide::Control, config)?;
    let mut diagnostics = EstimateDiagnostics::default();
    diagnostics.record_fits(
        treated
            .source_fits
            .iter()
            .chain(&control.source_fits)
            .map(|f| &f.pre_rmse),
    );
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
    Ok(HteEstimate {
        method: Method::H2sl,
        function: EffectFunction::PropensityWeighted {
            propensity,
            e_weighted: tau0,
            complement_weighted: tau1,
        },
        diagnostics,
    })
}
