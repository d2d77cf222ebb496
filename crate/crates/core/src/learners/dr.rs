//! Doubly robust extension of the two-sided learner.
//!
//! Imputed effects come from synthetic control fits on the full panel. Units
//! are then split in two folds: nuisance models (propensity and both
//! side-specific effect functions) are trained on one fold and the
//! pseudo-outcome regression runs on the other.

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::synthetic::ImputedEffects;
use super::{
    EffectFunction, EstimateDiagnostics, HteEstimate, LearnerConfig, LearnerError, Method,
    PropensitySource, StepContext,
};
use crate::panel::{PanelDataset, UnitSide};
use crate::regress::{self, fit_propensity, HteModel};
use crate::sc::impute_side;

/// `(D − ê)/(ê(1 − ê))·(Δ̃ − τ̂) + τ̂`, where `delta` is the unit's imputed
/// effect and `tau` the effect model of the unit's own side at its features.
pub fn pseudo_outcome(treated: bool, e: f64, delta: f64, tau: f64) -> f64 {
    let d = if treated { 1.0 } else { 0.0 };
    (d - e) / (e * (1.0 - e)) * (delta - tau) + tau
}

/// Per-unit observations: feature row index, side, and imputed effects.
struct Observation {
    unit: usize,
    treated: bool,
    effects: Vec<f64>,
}

fn observations(
    dataset: &PanelDataset,
    sides: [&ImputedEffects; 2],
    pooled_time: bool,
) -> Vec<Observation> {
    let mut out = Vec::with_capacity(dataset.n_units());
    for eff in sides {
        let t1 = eff.values.ncols();
        for (r, &unit) in eff.units.iter().enumerate() {
            let effects = if pooled_time {
                eff.values.row(r).iter().copied().collect()
            } else {
                vec![eff.values[(r, t1 - 1)]]
            };
            out.push(Observation {
                unit,
                treated: eff.side == UnitSide::Treated,
                effects,
            });
        }
    }
    out.sort_by_key(|o| o.unit);
    out
}

fn has_both_arms(obs: &[Observation], fold: &[usize]) -> bool {
    fold.iter().any(|&k| obs[k].treated) && fold.iter().any(|&k| !obs[k].treated)
}

fn split_units(
    obs: &[Observation],
    seed: u64,
    attempts: usize,
) -> Result<(Vec<usize>, Vec<usize>), LearnerError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..obs.len()).collect();
    let half = obs.len() / 2;
    for _ in 0..attempts {
        order.shuffle(&mut rng);
        let (a, b) = order.split_at(half);
        if has_both_arms(obs, a) && has_both_arms(obs, b) {
            let (mut a, mut b) = (a.to_vec(), b.to_vec());
            a.sort_unstable();
            b.sort_unstable();
            return Ok((a, b));
        }
    }
    Err(LearnerError::FoldInfeasible(attempts))
}

fn stack(dataset: &PanelDataset, obs: &[Observation], fold: &[usize]) -> (DMatrix<f64>, Vec<f64>) {
    let rows: Vec<(usize, f64)> = fold
        .iter()
        .flat_map(|&k| obs[k].effects.iter().map(move |&v| (obs[k].unit, v)))
        .collect();
    let x = DMatrix::from_fn(rows.len(), dataset.n_features(), |r, c| {
        dataset.features[(rows[r].0, c)]
    });
    (x, rows.into_iter().map(|(_, v)| v).collect())
}

/// One pass: nuisances on `train`, pseudo-outcome regression on `target`.
fn one_direction(
    dataset: &PanelDataset,
    obs: &[Observation],
    train: &[usize],
    target: &[usize],
    config: &LearnerConfig,
    diagnostics: &mut EstimateDiagnostics,
) -> Result<HteModel, LearnerError> {
    let select = |treated: bool| -> Vec<usize> {
        train
            .iter()
            .copied()
            .filter(|&k| obs[k].treated == treated)
            .collect()
    };
    let (x0, y0) = stack(dataset, obs, &select(true));
    let tau0 =
        regress::fit(&config.regressor, &x0, &y0).step("treated-side nuisance regression")?;
    let (x1, y1) = stack(dataset, obs, &select(false));
    let tau1 =
        regress::fit(&config.regressor, &x1, &y1).step("control-side nuisance regression")?;

    let propensity = match config.force_propensity {
        Some(e) => PropensitySource::Constant(e),
        None => {
            let units: Vec<usize> = train.iter().map(|&k| obs[k].unit).collect();
            let features = DMatrix::from_fn(units.len(), dataset.n_features(), |r, c| {
                dataset.features[(units[r], c)]
            });
            let mask: Vec<bool> = train.iter().map(|&k| obs[k].treated).collect();
            let model =
                fit_propensity(&features, &mask, config.propensity_clip).step("propensity")?;
            let target_features = DMatrix::from_fn(target.len(), dataset.n_features(), |r, c| {
                dataset.features[(obs[target[r]].unit, c)]
            });
            diagnostics.record_propensity(&model, &target_features);
            PropensitySource::Fitted(model)
        }
    };

    let (x2, _) = stack(dataset, obs, target);
    let mut phi = Vec::with_capacity(x2.nrows());
    for &k in target {
        let o = &obs[k];
        let xi = dataset.feature_row(o.unit);
        let e = propensity.at(&xi);
        let tau = if o.treated {
            tau0.predict(&xi)
        } else {
            tau1.predict(&xi)
        };
        phi.extend(
            o.effects
                .iter()
                .map(|&delta| pseudo_outcome(o.treated, e, delta, tau)),
        );
    }
    regress::fit(&config.regressor, &x2, &phi).step("pseudo-outcome regression")
}

/// Doubly robust two-sided learner with sample splitting and optional cross-fitting.
pub fn dr_h2sl(
    dataset: &PanelDataset,
    config: &LearnerConfig,
) -> Result<HteEstimate, LearnerError> {
    dataset.validate().into_result()?;
    let treated = ImputedEffects::from_imputation(
        dataset,
        impute_side(dataset, UnitSide::Treated, &config.sc)
            .step("impute control counterfactuals")?,
    );
    let control = ImputedEffects::from_imputation(
        dataset,
        impute_side(dataset, UnitSide::Control, &config.sc)
            .step("impute treated counterfactuals")?,
    );
    let mut diagnostics = EstimateDiagnostics::default();
    diagnostics.record_fits(
        treated
            .source_fits
            .iter()
            .chain(&control.source_fits)
            .map(|f| &f.pre_rmse),
    );

    let obs = observations(dataset, [&treated, &control], config.dr.pooled_time);
    let (s1, s2) = split_units(&obs, config.seed, config.dr.max_split_attempts)?;
    let forward = one_direction(dataset, &obs, &s1, &s2, config, &mut diagnostics)?;
    let function = if config.dr.crossfit {
        let backward = one_direction(dataset, &obs, &s2, &s1, config, &mut diagnostics)?;
        EffectFunction::Average(vec![
            EffectFunction::Direct(forward),
            EffectFunction::Direct(backward),
        ])
    } else {
        EffectFunction::Direct(forward)
    };
    Ok(HteEstimate {
        method: Method::DrH2sl,
        function,
        diagnostics,
    })
}
