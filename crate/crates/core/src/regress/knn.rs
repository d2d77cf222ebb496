use nalgebra::DMatrix;

use super::{rows, ModelState};

pub(super) fn fit(x: &DMatrix<f64>, y: &[f64], k: usize) -> ModelState {
    ModelState::Knn {
        k: k.min(y.len()),
        x: rows(x),
        y: y.to_vec(),
    }
}

/// Mean response of the `k` nearest rows; distance ties resolve by row order.
pub(super) fn predict(k: usize, xs: &[Vec<f64>], y: &[f64], x: &[f64]) -> f64 {
    let mut order: Vec<(f64, usize)> = xs
        .iter()
        .enumerate()
        .map(|(i, p)| (p.iter().zip(x).map(|(a, b)| (a - b).powi(2)).sum(), i))
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    order[..k].iter().map(|&(_, i)| y[i]).sum::<f64>() / k as f64
}
