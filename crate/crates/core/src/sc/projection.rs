//! Euclidean projections onto the L1 ball and the probability simplex.
//!
//! Both use the sorted soft-threshold construction: sort magnitudes in
//! decreasing order, find the largest prefix whose shifted mean stays
//! positive, and subtract the resulting threshold.

use super::ScError;

fn check_finite(v: &[f64]) -> Result<(), ScError> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(ScError::NonFinite("projection input"))
    }
}

/// Threshold `θ` with `Σ max(aᵢ − θ, 0) = z`.
fn sorted_threshold(a: &[f64], z: f64) -> f64 {
    let mut u = a.to_vec();
    u.sort_by(|x, y| y.total_cmp(x));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let candidate = (cumsum - z) / (j + 1) as f64;
        if uj - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    theta
}

/// Projects `v` onto `{u : ‖u‖₁ ≤ radius}`.
///
/// Vectors already inside the ball (up to `1e-12·radius`) are returned
/// unchanged, which also makes the projection idempotent in floating point.
pub fn project_l1_ball(v: &[f64], radius: f64) -> Result<Vec<f64>, ScError> {
    check_finite(v)?;
    if !(radius.is_finite() && radius > 0.0) {
        return Err(ScError::InvalidConstraint(format!(
            "L1 radius must be finite and positive, got {radius}"
        )));
    }
    let l1 = |u: &[f64]| u.iter().map(|x| x.abs()).sum::<f64>();
    let slack = radius * 1e-12;
    if l1(v) <= radius + slack {
        return Ok(v.to_vec());
    }
    let mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let theta = sorted_threshold(&mags, radius);
    let mut out: Vec<f64> = v
        .iter()
        .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
        .collect();
    // cancellation in |x| − θ can leave the norm a few ulps of max|v| outside
    let norm = l1(&out);
    if norm > radius + slack {
        out.iter_mut().for_each(|x| *x *= radius / norm);
    }
    Ok(out)
}

/// Projects `v` onto `{u : uᵢ ≥ 0, Σ uᵢ = 1}`.
pub fn project_simplex(v: &[f64]) -> Result<Vec<f64>, ScError> {
    check_finite(v)?;
    if v.is_empty() {
        return Err(ScError::DimensionMismatch(
            "cannot project an empty vector onto the simplex".into(),
        ));
    }
    let theta = sorted_threshold(v, 1.0);
    Ok(v.iter().map(|&x| (x - theta).max(0.0)).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Bisection on θ for Σ max(|vᵢ| − θ, 0) = radius.
    fn bisection_oracle(v: &[f64], radius: f64) -> Vec<f64> {
        let norm: f64 = v.iter().map(|x| x.abs()).sum();
        if norm <= radius {
            return v.to_vec();
        }
        let (mut lo, mut hi) = (0.0, v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let s: f64 = v.iter().map(|x| (x.abs() - mid).max(0.0)).sum();
            if s > radius {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let theta = 0.5 * (lo + hi);
        v.iter()
            .map(|&x| x.signum() * (x.abs() - theta).max(0.0))
            .collect()
    }

    #[test]
    fn inside_the_ball_is_unchanged() {
        assert_eq!(project_l1_ball(&[0.2, 0.3], 1.0).unwrap(), vec![0.2, 0.3]);
    }

    #[test]
    fn single_coordinate_shrinks_to_radius() {
        assert_eq!(project_l1_ball(&[-2.0, 0.0], 1.0).unwrap(), vec![-1.0, 0.0]);
    }

    #[test]
    fn two_coordinates_share_the_threshold() {
        let p = project_l1_ball(&[0.8, 0.3], 1.0).unwrap();
        let oracle = bisection_oracle(&[0.8, 0.3], 1.0);
        for (a, b) in p.iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((p[0] - 0.75).abs() < 1e-12 && (p[1] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(project_l1_ball(&[f64::NAN], 1.0).is_err());
        assert!(project_l1_ball(&[1.0], 0.0).is_err());
        assert!(project_simplex(&[]).is_err());
    }

    #[test]
    fn simplex_examples() {
        assert_eq!(project_simplex(&[0.5, 0.5]).unwrap(), vec![0.5, 0.5]);
        let p = project_simplex(&[2.0, 0.0]).unwrap();
        assert!((p[0] - 1.0).abs() < 1e-15 && p[1] == 0.0);
        let p = project_simplex(&[-3.0, -3.0, -3.0]).unwrap();
        for x in p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
    }

    proptest! {
        #[test]
        fn projection_is_idempotent(v in prop::collection::vec(-5.0f64..5.0, 1..40), r in 0.1f64..4.0) {
            let p = project_l1_ball(&v, r).unwrap();
            prop_assert_eq!(project_l1_ball(&p, r).unwrap(), p);
        }

        #[test]
        fn projection_matches_bisection(v in prop::collection::vec(-5.0f64..5.0, 1..50), r in 0.1f64..4.0) {
            let p = project_l1_ball(&v, r).unwrap();
            let o = bisection_oracle(&v, r);
            for (a, b) in p.iter().zip(&o) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }

        #[test]
        fn simplex_projection_is_feasible(v in prop::collection::vec(-5.0f64..5.0, 1..40)) {
            let p = project_simplex(&v).unwrap();
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}
