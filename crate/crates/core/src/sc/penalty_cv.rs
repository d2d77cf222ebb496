use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::fit::{fit_weights, ConstraintSpec, SolverOpts};
use super::ScError;

/// Rolling-origin split of the pre-period.
///
/// The first half of the pre-period is always training data; the remainder is
/// cut into `n_folds` consecutive test blocks, each scored after fitting on
/// everything before it.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemporalFoldSpec {
    pub n_folds: usize,
}

impl Default for TemporalFoldSpec {
    fn default() -> Self {
        TemporalFoldSpec { n_folds: 2 }
    }
}

impl TemporalFoldSpec {
    /// `(train_end, test_end)` pairs over `0..t0`.
    pub fn splits(&self, t0: usize) -> Result<Vec<(usize, usize)>, ScError> {
        let warmup = t0.div_ceil(2);
        let rest = t0 - warmup;
        if t0 < 4 || self.n_folds < 2 || rest < self.n_folds {
            return Err(ScError::InsufficientPrePeriod(format!(
                "{t0} pre-periods cannot hold {} temporal folds",
                self.n_folds
            )));
        }
        let mut out = Vec::with_capacity(self.n_folds);
        let mut start = warmup;
        for k in 0..self.n_folds {
            let len = rest / self.n_folds + usize::from(k < rest % self.n_folds);
            out.push((start, start + len));
            start += len;
        }
        Ok(out)
    }
}

fn distances(target: &[f64], donors: &DMatrix<f64>) -> Vec<f64> {
    donors
        .column_iter()
        .map(|c| {
            c.iter()
                .zip(target)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Mean held-out squared error of the penalized simplex fit for one `lambda`.
pub(crate) fn held_out_error(
    target_pre: &[f64],
    donors_pre: &DMatrix<f64>,
    lambda: f64,
    splits: &[(usize, usize)],
    intercept: bool,
    opts: &SolverOpts,
) -> Result<f64, ScError> {
    let mut total = 0.0;
    for &(train_end, test_end) in splits {
        let train_target = &target_pre[..train_end];
        let train_donors = donors_pre.rows(0, train_end).into_owned();
        let spec =
            ConstraintSpec::penalized_simplex(lambda, distances(train_target, &train_donors))
                .with_intercept(intercept);
        let fit = match fit_weights(train_target, &train_donors, &spec, opts) {
            Ok(fit) => fit,
            Err(ScError::NonConvergence { best, .. }) => *best,
            Err(e) => return Err(e),
        };
        let se: f64 = (train_end..test_end)
            .map(|t| (target_pre[t] - fit.predict(donors_pre.row(t).iter().copied())).powi(2))
            .sum();
        total += se / (test_end - train_end) as f64;
    }
    Ok(total / splits.len() as f64)
}

/// Chooses the penalty with the smallest mean held-out error over temporal
/// folds; ties go to the larger penalty.
pub fn select_penalty_cv(
    target_pre: &[f64],
    donors_pre: &DMatrix<f64>,
    lambdas: &[f64],
    folds: &TemporalFoldSpec,
    intercept: bool,
    opts: &SolverOpts,
) -> Result<f64, ScError> {
    if lambdas.is_empty() {
        return Err(ScError::InvalidConstraint("empty penalty grid".into()));
    }
    if let Some(bad) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(ScError::InvalidConstraint(format!("invalid penalty {bad}")));
    }
    let splits = folds.splits(target_pre.len())?;
    let mut best: Option<(f64, f64)> = None;
    for &lambda in lambdas {
        let err = held_out_error(target_pre, donors_pre, lambda, &splits, intercept, opts)?;
        best = match best {
            None => Some((lambda, err)),
            Some((bl, be)) => {
                let tie = (err - be).abs() <= 1e-12 * be.abs().max(1e-300);
                if err < be && !tie || tie && lambda > bl {
                    Some((lambda, err))
                } else {
                    Some((bl, be))
                }
            }
        };
    }
    Ok(best.map(|(l, _)| l).unwrap_or(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fold_layout() {
        assert_eq!(
            TemporalFoldSpec::default().splits(4).unwrap(),
            vec![(2, 3), (3, 4)]
        );
        assert_eq!(
            TemporalFoldSpec::default().splits(10).unwrap(),
            vec![(5, 8), (8, 10)]
        );
        let err = TemporalFoldSpec::default().splits(3).unwrap_err();
        assert!(err.to_string().contains("insufficient pre-period for CV"));
    }

    #[test]
    fn singleton_grid() {
        let x = DMatrix::from_fn(6, 2, |t, k| (t + k) as f64);
        let y: Vec<f64> = (0..6).map(|t| t as f64).collect();
        let opts = SolverOpts::default();
        assert_eq!(
            select_penalty_cv(&y, &x, &[0.0], &TemporalFoldSpec::default(), true, &opts).unwrap(),
            0.0
        );
    }

    #[test]
    fn chosen_penalty_minimizes_the_criterion() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let opts = SolverOpts::default();
        let folds = TemporalFoldSpec::default();
        for case in 0..4 {
            let x = DMatrix::from_fn(10, 4, |t, k| {
                (t as f64 * 0.3 + k as f64).sin() + rng.random_range(-0.1..0.1)
            });
            let y: Vec<f64> = if case % 2 == 0 {
                // exactly representable by donor 1
                x.column(1).iter().copied().collect()
            } else {
                (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()
            };
            let grid = [0.0, 1.0, 10.0];
            let chosen = select_penalty_cv(&y, &x, &grid, &folds, true, &opts).unwrap();
            let splits = folds.splits(10).unwrap();
            let chosen_err = held_out_error(&y, &x, chosen, &splits, true, &opts).unwrap();
            for &l in &grid {
                let e = held_out_error(&y, &x, l, &splits, true, &opts).unwrap();
                assert!(
                    chosen_err <= e + 1e-12,
                    "case {case}: {chosen} ({chosen_err}) vs {l} ({e})"
                );
            }
        }
    }
}
