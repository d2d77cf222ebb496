use nalgebra::DMatrix;
use panelhte::sc::{project_l1_ball, project_simplex};
use panelhte::{fit_weights, ConstraintSpec, SolverOpts};
use proptest::prelude::*;

fn problem() -> impl Strategy<Value = (Vec<f64>, DMatrix<f64>)> {
    (4usize..14, 1usize..6).prop_flat_map(|(t0, j)| {
        (
            prop::collection::vec(-3f64..3.0, t0),
            prop::collection::vec(-3f64..3.0, t0 * j),
        )
            .prop_map(move |(y, a)| (y, DMatrix::from_row_slice(t0, j, &a)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_idempotent(v in prop::collection::vec(-5f64..5.0, 1..40), k in 0.1f64..4.0) {
        let once = project_l1_ball(&v, k).unwrap();
        prop_assert_eq!(project_l1_ball(&once, k).unwrap(), once.clone());
        let s = project_simplex(&v).unwrap();
        prop_assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(s.iter().all(|&w| w >= 0.0));
    }

    #[test]
    fn fits_are_feasible_with_monotone_trace((y, a) in problem()) {
        let opts = SolverOpts { record_trace: true, ..SolverOpts::default() };
        for spec in [ConstraintSpec::default(), ConstraintSpec::simplex(), ConstraintSpec::l1_ball(2.0).with_intercept(false)] {
            let fit = fit_weights(&y, &a, &spec, &opts).unwrap();
            prop_assert!(spec.is_feasible(&fit.weights, 1e-8));
            for pair in fit.trace.windows(2) {
                prop_assert!(pair[1] <= pair[0] * (1.0 + 1e-12) + 1e-15, "{:?}", pair);
            }
        }
    }

    #[test]
    fn scaling_covariance((y, a) in problem(), c in 0.1f64..20.0) {
        let spec = ConstraintSpec::default();
        let opts = SolverOpts::default();
        let base = fit_weights(&y, &a, &spec, &opts).unwrap();
        let ys: Vec<f64> = y.iter().map(|v| v * c).collect();
        let scaled = fit_weights(&ys, &(&a * c), &spec, &opts).unwrap();
        // weights may be non-unique; compare fitted values, intercept and rmse
        let fitted = |w: &[f64], mu: f64, m: &DMatrix<f64>| -> Vec<f64> {
            (0..m.nrows()).map(|t| mu + (0..w.len()).map(|j| m[(t, j)] * w[j]).sum::<f64>()).collect()
        };
        let f0 = fitted(&base.weights, base.intercept, &a);
        let f1 = fitted(&scaled.weights, scaled.intercept, &(&a * c));
        let tol = 1e-5 * c * (1.0 + y.iter().fold(0.0f64, |m, v| m.max(v.abs())));
        for (p, q) in f0.iter().zip(&f1) {
            prop_assert!((p * c - q).abs() <= tol, "{} vs {}", p * c, q);
        }
        prop_assert!((base.pre_rmse * c - scaled.pre_rmse).abs() <= tol);
    }
}

#[test]
fn exact_weights_are_found_for_unique_problem() {
    let a = DMatrix::from_row_slice(5, 2, &[1.0, 0.0, 0.0, 1.0, 2.0, 1.0, -1.0, 3.0, 0.5, -2.0]);
    let w = [0.3, -0.5];
    let y: Vec<f64> = (0..5)
        .map(|t| 0.7 + a[(t, 0)] * w[0] + a[(t, 1)] * w[1])
        .collect();
    let fit = fit_weights(&y, &a, &ConstraintSpec::default(), &SolverOpts::default()).unwrap();
    assert!((fit.weights[0] - 0.3).abs() < 1e-7 && (fit.weights[1] + 0.5).abs() < 1e-7);
    assert!((fit.intercept - 0.7).abs() < 1e-7);
    assert!(fit.pre_rmse < 1e-7);
}
