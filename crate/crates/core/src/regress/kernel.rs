//! Nadaraya-Watson smoother with a Gaussian kernel.
//!
//! Training rows that share a feature vector are stored once with their count
//! and response sum. Kernel weights are computed relative to the nearest
//! stored point, so predictions never underflow far from the data.

use std::collections::HashMap;

use nalgebra::DMatrix;

use super::{rows, Bandwidth, ModelState};

pub const DEFAULT_BANDWIDTH_GRID: [f64; 5] = [0.1, 0.25, 0.5, 1.0, 2.0];

struct Grouped {
    points: Vec<Vec<f64>>,
    counts: Vec<f64>,
    sums: Vec<f64>,
    sq_sums: Vec<f64>,
}

fn group(x: &DMatrix<f64>, y: &[f64]) -> Grouped {
    let mut index: HashMap<Vec<u64>, usize> = HashMap::new();
    let mut g = Grouped {
        points: Vec::new(),
        counts: Vec::new(),
        sums: Vec::new(),
        sq_sums: Vec::new(),
    };
    for (row, &yi) in rows(x).into_iter().zip(y) {
        let key: Vec<u64> = row.iter().map(|v| v.to_bits()).collect();
        let slot = *index.entry(key).or_insert_with(|| {
            g.points.push(row);
            g.counts.push(0.0);
            g.sums.push(0.0);
            g.sq_sums.push(0.0);
            g.points.len() - 1
        });
        g.counts[slot] += 1.0;
        g.sums[slot] += yi;
        g.sq_sums[slot] += yi * yi;
    }
    g
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(u, v)| (u - v).powi(2)).sum()
}

/// Kernel estimate at `x`, optionally ignoring one stored point.
pub(super) fn predict(
    bandwidth: f64,
    points: &[Vec<f64>],
    counts: &[f64],
    sums: &[f64],
    x: &[f64],
    exclude: Option<usize>,
) -> f64 {
    let dists: Vec<f64> = points.iter().map(|p| sq_dist(p, x)).collect();
    let nearest = dists
        .iter()
        .enumerate()
        .filter(|(k, _)| Some(*k) != exclude)
        .map(|(_, d)| *d)
        .fold(f64::INFINITY, f64::min);
    let denom = 2.0 * bandwidth * bandwidth;
    let (mut num, mut den) = (0.0, 0.0);
    for (k, d) in dists.iter().enumerate() {
        if Some(k) == exclude {
            continue;
        }
        let w = (-(d - nearest) / denom).exp();
        num += w * sums[k];
        den += w * counts[k];
    }
    num / den
}

/// Leave-one-out squared error where each distinct feature vector is left
/// out together with all of its rows.
fn loo_error(g: &Grouped, bandwidth: f64) -> f64 {
    (0..g.points.len())
        .map(|k| {
            let pred = predict(
                bandwidth,
                &g.points,
                &g.counts,
                &g.sums,
                &g.points[k],
                Some(k),
            );
            // Σ_rows (y − pred)² from the stored moments
            g.sq_sums[k] - 2.0 * pred * g.sums[k] + g.counts[k] * pred * pred
        })
        .sum()
}

/// Picks the grid bandwidth with the lowest leave-one-out error; ties go to
/// the larger bandwidth. With fewer than two distinct points the largest
/// bandwidth is returned.
pub fn select_bandwidth_loo(x: &DMatrix<f64>, y: &[f64], grid: &[f64]) -> f64 {
    select(&group(x, y), grid)
}

fn select(g: &Grouped, grid: &[f64]) -> f64 {
    let largest = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if g.points.len() < 2 {
        return largest;
    }
    let mut best = (largest, f64::INFINITY);
    for &h in grid {
        let err = loo_error(g, h);
        if err < best.1 || (err == best.1 && h > best.0) {
            best = (h, err);
        }
    }
    best.0
}

pub(super) fn fit(x: &DMatrix<f64>, y: &[f64], bandwidth: &Bandwidth) -> ModelState {
    let g = group(x, y);
    let bandwidth = match bandwidth {
        Bandwidth::Fixed(h) => *h,
        Bandwidth::LeaveOneOut { grid } => select(&g, grid),
    };
    ModelState::Kernel {
        bandwidth,
        points: g.points,
        counts: g.counts,
        sums: g.sums,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::regress::{fit as fit_model, RegressorSpec};

    #[test]
    fn repeated_rows_are_pooled() {
        let x = DMatrix::from_row_slice(4, 1, &[0.0, 0.0, 0.0, 1.0]);
        let y = [1.0, 2.0, 3.0, 10.0];
        let ModelState::Kernel { counts, sums, .. } = fit(&x, &y, &Bandwidth::Fixed(1.0)) else {
            unreachable!()
        };
        assert_eq!(counts, vec![3.0, 1.0]);
        assert_eq!(sums, vec![6.0, 10.0]);
    }

    #[test]
    fn matches_direct_weighted_mean() {
        let x = DMatrix::from_row_slice(3, 1, &[0.0, 1.0, 3.0]);
        let y = [1.0, 2.0, 4.0];
        let h = 0.7;
        let model = fit_model(
            &RegressorSpec::KernelSmoother {
                bandwidth: Bandwidth::Fixed(h),
            },
            &x,
            &y,
        )
        .unwrap();
        let at = 0.4;
        let w: Vec<f64> = [0.0f64, 1.0, 3.0]
            .iter()
            .map(|p| (-(p - at).powi(2) / (2.0 * h * h)).exp())
            .collect();
        let direct = (w[0] * 1.0 + w[1] * 2.0 + w[2] * 4.0) / w.iter().sum::<f64>();
        assert!((model.predict(&[at]) - direct).abs() < 1e-14);
    }

    #[test]
    fn smooth_signal_prefers_moderate_bandwidth() {
        let n = 60;
        let x = DMatrix::from_fn(n, 1, |i, _| -3.0 + 6.0 * i as f64 / (n - 1) as f64);
        let y: Vec<f64> = (0..n).map(|i| x[(i, 0)].cos()).collect();
        let h = select_bandwidth_loo(&x, &y, &DEFAULT_BANDWIDTH_GRID);
        assert!(h <= 0.5, "picked {h}");
        // flat data cannot distinguish bandwidths, so the largest wins the tie
        assert_eq!(
            select_bandwidth_loo(&x, &vec![1.0; n], &DEFAULT_BANDWIDTH_GRID),
            2.0
        );
    }

    #[test]
    fn loo_ignores_duplicate_copies() {
        // each point repeated several times; plain row-wise LOO would always
        // pick the smallest bandwidth
        let base: Vec<f64> = (0..20).map(|i| i as f64 * 0.25).collect();
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for (k, &b) in base.iter().enumerate() {
            for r in 0..5 {
                xs.push(b);
                ys.push(0.5 * b + if (k + r) % 2 == 0 { 0.3 } else { -0.3 });
            }
        }
        let x = DMatrix::from_column_slice(xs.len(), 1, &xs);
        let h = select_bandwidth_loo(&x, &ys, &DEFAULT_BANDWIDTH_GRID);
        assert!(h > 0.1, "picked {h}");
    }
}
