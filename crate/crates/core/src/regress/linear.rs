use nalgebra::{DMatrix, DVector};

use super::{ModelState, RegressError};

/// Centers columns of `x` and `y`; returns the centered data and the means.
fn center(x: &DMatrix<f64>, y: &[f64]) -> (DMatrix<f64>, DVector<f64>, Vec<f64>, f64) {
    let q = x.nrows() as f64;
    let means: Vec<f64> = x.column_iter().map(|c| c.sum() / q).collect();
    let mut xc = x.clone();
    for (k, m) in means.iter().enumerate() {
        xc.column_mut(k).add_scalar_mut(-m);
    }
    let ym = y.iter().sum::<f64>() / q;
    let yc = DVector::from_iterator(y.len(), y.iter().map(|v| v - ym));
    (xc, yc, means, ym)
}

fn finish(coefs: DVector<f64>, means: &[f64], ym: f64) -> ModelState {
    let intercept = ym - coefs.iter().zip(means).map(|(b, m)| b * m).sum::<f64>();
    ModelState::Linear {
        intercept,
        coefs: coefs.iter().copied().collect(),
    }
}

/// Least squares with an unpenalized intercept; refuses rank-deficient designs.
pub(super) fn fit_ols(x: &DMatrix<f64>, y: &[f64]) -> Result<ModelState, RegressError> {
    let d = x.ncols();
    let (xc, yc, means, ym) = center(x, y);
    if d == 0 {
        return Ok(finish(DVector::zeros(0), &means, ym));
    }
    let svd = xc.svd(true, true);
    let smax = svd.singular_values.max();
    let cutoff = 1e-10 * smax;
    let rank = svd.singular_values.iter().filter(|&&s| s > cutoff).count();
    if smax == 0.0 || rank < d {
        return Err(RegressError::RankDeficient { rank, cols: d + 1 });
    }
    let coefs = svd
        .solve(&yc, cutoff)
        .map_err(|e| RegressError::InvalidSpec(e.to_string()))?;
    Ok(finish(coefs, &means, ym))
}

/// Ridge with penalty `alpha · ‖β‖²` on the slopes only.
pub(super) fn fit_ridge(
    x: &DMatrix<f64>,
    y: &[f64],
    alpha: f64,
) -> Result<ModelState, RegressError> {
    let d = x.ncols();
    let (xc, yc, means, ym) = center(x, y);
    let mut gram = xc.tr_mul(&xc);
    for k in 0..d {
        gram[(k, k)] += alpha;
    }
    let rhs = xc.tr_mul(&yc);
    let coefs = match gram.clone().cholesky() {
        Some(chol) => chol.solve(&rhs),
        None => {
            let rank = gram.rank(1e-12);
            return Err(RegressError::RankDeficient { rank, cols: d + 1 });
        }
    };
    Ok(finish(coefs, &means, ym))
}
