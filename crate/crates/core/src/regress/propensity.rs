//! Logistic propensity model fit by damped Newton iterations.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::RegressError;

pub const DEFAULT_CLIP: f64 = 0.01;
const MAX_ITERS: usize = 100;
const GRAD_TOL: f64 = 1e-10;

/// Numerically stable logistic function.
pub fn expit(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + eᶻ)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PropensityDiagnostics {
    pub iterations: usize,
    pub converged: bool,
    /// The classes are linearly separable; coefficients ran off towards infinity
    /// and predictions rely on clipping.
    pub separated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropensityModel {
    pub intercept: f64,
    pub coefficients: Vec<f64>,
    pub clip: f64,
    pub diagnostics: PropensityDiagnostics,
}

impl PropensityModel {
    /// Unclipped `expit(β₀ + xᵀβ)`.
    pub fn raw(&self, x: &[f64]) -> f64 {
        assert_eq!(
            x.len(),
            self.coefficients.len(),
            "feature dimension mismatch"
        );
        expit(self.linear_predictor(x))
    }

    pub fn linear_predictor(&self, x: &[f64]) -> f64 {
        self.intercept
            + self
                .coefficients
                .iter()
                .zip(x)
                .map(|(b, v)| b * v)
                .sum::<f64>()
    }

    /// Propensity clipped to `[clip, 1 − clip]`.
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.raw(x).clamp(self.clip, 1.0 - self.clip)
    }

    /// True when the clipped prediction sits on the clip boundary.
    pub fn is_clipped(&self, x: &[f64]) -> bool {
        let p = self.raw(x);
        p <= self.clip || p >= 1.0 - self.clip
    }
}

fn log_likelihood(z: &DMatrix<f64>, d: &[f64], beta: &DVector<f64>) -> f64 {
    let eta = z * beta;
    eta.iter().zip(d).map(|(e, y)| y * e - softplus(*e)).sum()
}

/// Logistic regression of the treatment indicator on features (with intercept).
pub fn fit_propensity(
    features: &DMatrix<f64>,
    treated: &[bool],
    clip: f64,
) -> Result<PropensityModel, RegressError> {
    let n = features.nrows();
    if n == 0 {
        return Err(RegressError::Empty);
    }
    if treated.len() != n {
        return Err(RegressError::DimensionMismatch(format!(
            "{n} feature rows but {} treatment flags",
            treated.len()
        )));
    }
    if !(clip.is_finite() && (0.0..0.5).contains(&clip)) {
        return Err(RegressError::InvalidSpec(format!(
            "propensity clip must lie in [0, 0.5), got {clip}"
        )));
    }
    if features.iter().any(|v| !v.is_finite()) {
        return Err(RegressError::NonFinite);
    }
    let n_treated = treated.iter().filter(|&&b| b).count();
    if n_treated == 0 || n_treated == n {
        return Err(RegressError::SingleClass);
    }

    let p = features.ncols() + 1;
    let z = DMatrix::from_fn(n, p, |i, k| if k == 0 { 1.0 } else { features[(i, k - 1)] });
    let d: Vec<f64> = treated.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mut beta = DVector::zeros(p);
    let mut ll = log_likelihood(&z, &d, &beta);
    let mut converged = false;
    let mut iterations = 0;

    while iterations < MAX_ITERS {
        let eta = &z * &beta;
        let probs: Vec<f64> = eta.iter().map(|&e| expit(e)).collect();
        let resid = DVector::from_iterator(n, d.iter().zip(&probs).map(|(y, q)| y - q));
        let grad = z.tr_mul(&resid);
        if grad.amax() <= GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;
        let mut weighted = z.clone();
        for (i, q) in probs.iter().enumerate() {
            let w = q * (1.0 - q);
            weighted.row_mut(i).scale_mut(w);
        }
        let mut hess = z.tr_mul(&weighted);
        let jitter = 1e-12 * (1.0 + hess.trace());
        for k in 0..p {
            hess[(k, k)] += jitter;
        }
        let step = match hess.cholesky() {
            Some(chol) => chol.solve(&grad),
            None => grad.clone(),
        };
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..40 {
            let candidate = &beta + &step * scale;
            let cand_ll = log_likelihood(&z, &d, &candidate);
            if cand_ll > ll {
                beta = candidate;
                ll = cand_ll;
                improved = true;
                break;
            }
            scale *= 0.5;
        }
        if !improved {
            // no representable ascent left; accept if the gradient is tiny
            converged = grad.amax() <= 1e-6 * n as f64;
            break;
        }
    }

    let eta = &z * &beta;
    // complete separation drives the likelihood to its supremum of zero
    let separated = ll > -1e-6
        && eta
            .iter()
            .zip(treated)
            .all(|(e, &t)| if t { *e > 0.0 } else { *e < 0.0 });
    Ok(PropensityModel {
        intercept: beta[0],
        coefficients: beta.iter().skip(1).copied().collect(),
        clip,
        diagnostics: PropensityDiagnostics {
            iterations,
            converged,
            separated,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn symmetric_data_is_one_half_at_origin() {
        let x = DMatrix::from_row_slice(4, 1, &[-2.0, -1.0, 1.0, 2.0]);
        let model = fit_propensity(&x, &[false, true, false, true], DEFAULT_CLIP).unwrap();
        assert!(model.diagnostics.converged);
        assert!((model.predict(&[0.0]) - expit(model.intercept)).abs() < 1e-15);
        let x = DMatrix::from_row_slice(4, 1, &[-1.0, -1.0, 1.0, 1.0]);
        let model = fit_propensity(&x, &[false, true, false, true], DEFAULT_CLIP).unwrap();
        assert!((model.predict(&[0.0]) - 0.5).abs() < 1e-12);
    }

    #[test]
    fn recovers_generating_coefficients() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let n = 100_000;
        let x = DMatrix::from_fn(n, 2, |_, _| rng.sample::<f64, _>(StandardNormal));
        let treated: Vec<bool> = (0..n)
            .map(|i| rng.random::<f64>() < expit(x[(i, 0)] + x[(i, 1)]))
            .collect();
        let model = fit_propensity(&x, &treated, DEFAULT_CLIP).unwrap();
        assert!(model.diagnostics.converged);
        for b in &model.coefficients {
            assert!((b - 1.0).abs() < 0.05, "{b}");
        }
        assert!(model.intercept.abs() < 0.05);
    }

    #[test]
    fn single_class_is_an_error() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 2.0]);
        let err = fit_propensity(&x, &[true, true, true], DEFAULT_CLIP).unwrap_err();
        assert!(err.to_string().contains("single-class"));
    }

    #[test]
    fn separation_is_flagged_and_clipped() {
        let x = DMatrix::from_row_slice(6, 1, &[-3.0, -2.0, -1.0, 1.0, 2.0, 3.0]);
        let model =
            fit_propensity(&x, &[false, false, false, true, true, true], DEFAULT_CLIP).unwrap();
        assert!(model.diagnostics.separated);
        assert_eq!(model.predict(&[3.0]), 0.99);
        assert_eq!(model.predict(&[-3.0]), 0.01);
        assert!(model.is_clipped(&[3.0]));
    }

    #[test]
    fn predictions_stay_inside_the_clip_band() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = DMatrix::from_fn(40, 2, |_, _| rng.random_range(-3.0..3.0));
        let treated: Vec<bool> = (0..40)
            .map(|i| x[(i, 0)] + 0.3 * rng.random::<f64>() > 0.0)
            .collect();
        let model = fit_propensity(&x, &treated, DEFAULT_CLIP).unwrap();
        for _ in 0..200 {
            let p = model.predict(&[rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)]);
            assert!((0.01..=0.99).contains(&p));
        }
    }
}
