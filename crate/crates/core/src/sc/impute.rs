use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::fit::{fit_weights, ConstraintKind, ConstraintSpec, SolverOpts, SyntheticFit};
use super::penalty_cv::{select_penalty_cv, TemporalFoldSpec};
use super::ScError;
use crate::panel::{PanelDataset, UnitSide};

/// Everything the imputation step needs to fit one unit's weights.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScSettings {
    pub constraint: ConstraintSpec,
    pub opts: SolverOpts,
    /// Candidate penalties; when set with a penalized constraint, each target
    /// picks its own penalty by temporal cross-validation.
    #[serde(default)]
    pub penalty_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub folds: TemporalFoldSpec,
}

impl ScSettings {
    pub fn with_constraint(constraint: ConstraintSpec) -> Self {
        ScSettings {
            constraint,
            ..ScSettings::default()
        }
    }
}

/// Synthetic fits for every unit on one side, and their post-period predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct SideImputation {
    /// Side of the units that were synthesized (not of the donors).
    pub side: UnitSide,
    pub units: Vec<usize>,
    pub fits: Vec<SyntheticFit>,
    /// `units.len() × T₁` counterfactual predictions for the post-period.
    pub imputed: DMatrix<f64>,
}

/// Euclidean distance between two pre-period trajectories.
fn trajectory_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).powi(2))
        .sum::<f64>()
        .sqrt()
}

fn resolve_constraint(
    target_pre: &[f64],
    donors_pre: &DMatrix<f64>,
    settings: &ScSettings,
) -> Result<ConstraintSpec, ScError> {
    let ConstraintKind::PenalizedSimplex { lambda, distances } = &settings.constraint.kind else {
        return Ok(settings.constraint.clone());
    };
    let distances = if distances.is_empty() {
        donors_pre
            .column_iter()
            .map(|c| trajectory_distance(target_pre, c.as_slice()))
            .collect()
    } else {
        distances.clone()
    };
    let lambda = match &settings.penalty_grid {
        Some(grid) => select_penalty_cv(
            target_pre,
            donors_pre,
            grid,
            &settings.folds,
            settings.constraint.intercept,
            &settings.opts,
        )?,
        None => *lambda,
    };
    Ok(ConstraintSpec {
        kind: ConstraintKind::PenalizedSimplex { lambda, distances },
        intercept: settings.constraint.intercept,
    })
}

/// Synthesizes every unit on `side` from the units on the other side.
///
/// Weights are fit on the pre-period; predictions use the donors' observed
/// post-period outcomes. Units are fit in parallel and returned in panel order.
pub fn impute_side(
    dataset: &PanelDataset,
    side: UnitSide,
    settings: &ScSettings,
) -> Result<SideImputation, ScError> {
    dataset
        .validate()
        .into_result()
        .map_err(|e| ScError::DimensionMismatch(e.to_string()))?;
    let targets = dataset.units_on(side);
    let donors = dataset.units_on(side.other());
    let t0 = dataset.t0;
    let t1 = dataset.t1();
    let donors_pre = DMatrix::from_fn(t0, donors.len(), |t, k| dataset.outcomes[(donors[k], t)]);

    let fits: Vec<SyntheticFit> = targets
        .par_iter()
        .map(|&i| {
            let target_pre: Vec<f64> = (0..t0).map(|t| dataset.outcomes[(i, t)]).collect();
            resolve_constraint(&target_pre, &donors_pre, settings)
                .and_then(|spec| fit_weights(&target_pre, &donors_pre, &spec, &settings.opts))
                .map_err(|e| ScError::Unit {
                    unit: dataset.unit_ids[i].clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_, _>>()?;

    let imputed = DMatrix::from_fn(targets.len(), t1, |r, s| {
        fits[r].predict(donors.iter().map(|&j| dataset.outcomes[(j, t0 + s)]))
    });
    Ok(SideImputation {
        side,
        units: targets,
        fits,
        imputed,
    })
}

/// `Ŷᵢₜ(0)` for every treated unit, synthesized from the controls.
pub fn impute_control_counterfactuals(
    dataset: &PanelDataset,
    settings: &ScSettings,
) -> Result<SideImputation, ScError> {
    impute_side(dataset, UnitSide::Treated, settings)
}

/// `Ŷ′ⱼₜ(1)` for every control unit, synthesized from the treated units.
pub fn impute_treated_counterfactuals(
    dataset: &PanelDataset,
    settings: &ScSettings,
) -> Result<SideImputation, ScError> {
    impute_side(dataset, UnitSide::Control, settings)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noiseless_panel(seed: u64) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, t, t0) = (6, 8, 5);
        let mut y = DMatrix::from_fn(n, t, |_, _| rng.random_range(-1.0..1.0));
        // treated unit 0 copies control 2
        for s in 0..t {
            y[(0, s)] = y[(2, s)];
        }
        let x = DMatrix::from_fn(n, 2, |_, _| rng.random_range(-1.0..1.0));
        let mask = vec![true, true, false, false, false, false];
        PanelDataset::new(y, x, mask, t0).unwrap()
    }

    #[test]
    fn copied_control_is_reproduced() {
        let ds = noiseless_panel(1);
        let spec = ConstraintSpec::l1_ball(1.0).with_intercept(false);
        let out = impute_control_counterfactuals(&ds, &ScSettings::with_constraint(spec)).unwrap();
        assert_eq!(out.units, vec![0, 1]);
        for s in 0..ds.t1() {
            assert!((out.imputed[(0, s)] - ds.outcomes[(2, ds.t0 + s)]).abs() < 1e-8);
        }
    }

    #[test]
    fn constant_donors_impute_the_pre_mean() {
        let t = 6;
        let mut y = DMatrix::from_element(4, t, 3.0);
        let target = [1.0, 2.0, 4.0, 5.0, 9.0, 9.0];
        for s in 0..t {
            y[(0, s)] = target[s];
        }
        let x = DMatrix::from_fn(4, 1, |i, _| i as f64);
        let ds = PanelDataset::new(y, x, vec![true, false, false, false], 4).unwrap();
        let out = impute_control_counterfactuals(&ds, &ScSettings::default()).unwrap();
        for s in 0..2 {
            assert!((out.imputed[(0, s)] - 3.0).abs() < 1e-8);
        }
    }

    #[test]
    fn treated_side_mirrors_control_side_on_swapped_panel() {
        let ds = noiseless_panel(4);
        let settings = ScSettings::default();
        let a = impute_treated_counterfactuals(&ds, &settings).unwrap();
        let b = impute_control_counterfactuals(&ds.with_sides_swapped(), &settings).unwrap();
        assert_eq!(a.imputed, b.imputed);
        assert_eq!(a.fits, b.fits);
    }

    #[test]
    fn penalized_fits_use_trajectory_distances() {
        let ds = noiseless_panel(2);
        let settings = ScSettings {
            constraint: ConstraintSpec::penalized_simplex(0.1, vec![]),
            penalty_grid: Some(vec![0.0, 0.1, 1.0]),
            ..ScSettings::default()
        };
        let out = impute_control_counterfactuals(&ds, &settings).unwrap();
        for fit in &out.fits {
            assert!(fit.constraint.is_feasible(&fit.weights, 1e-8));
            match &fit.constraint.kind {
                ConstraintKind::PenalizedSimplex { distances, .. } => {
                    assert_eq!(distances.len(), 4)
                }
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn non_convergence_names_the_unit() {
        let ds = noiseless_panel(3);
        let settings = ScSettings {
            opts: SolverOpts {
                tol: 1e-16,
                max_iters: 1,
                record_trace: false,
            },
            ..ScSettings::default()
        };
        let err = impute_control_counterfactuals(&ds, &settings).unwrap_err();
        assert!(matches!(err, ScError::Unit { .. }), "{err}");
    }
}
