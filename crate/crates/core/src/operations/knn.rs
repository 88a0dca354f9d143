//! Brute-force k-nearest neighbours with Euclidean distance.

use super::logistic::class_indices;
use super::{require_finite, LearnedState, OperationError};
use crate::matrix::Matrix;

pub(super) fn fit(op: &str, x: &Matrix, y: &[f64], classes: usize, k: usize) -> Result<LearnedState, OperationError> {
    require_finite(op, x)?;
    if classes > 0 {
        class_indices(op, y, classes)?;
    } else if y.iter().any(|v| !v.is_finite()) {
        return Err(OperationError::Fit { operation: op.into(), reason: "target contains non-finite values".into() });
    }
    Ok(LearnedState::Knn { train: x.clone(), target: y.to_vec(), k, classes })
}

/// Neighbours are ranked by distance, then by training index.
pub(super) fn predict(
    train: &Matrix,
    target: &[f64],
    k: usize,
    classes: usize,
    x: &Matrix,
) -> (Vec<f64>, Option<Matrix>) {
    let k = k.min(train.rows()).max(1);
    let mut values = Vec::with_capacity(x.rows());
    let mut probs = (classes > 0).then(|| Matrix::zeros(x.rows(), classes));
    let mut dist: Vec<(f64, usize)> = Vec::with_capacity(train.rows());
    for r in 0..x.rows() {
        let q = x.row(r);
        dist.clear();
        dist.extend((0..train.rows()).map(|i| {
            let d: f64 = train.row(i).iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
            (d, i)
        }));
        dist.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let nearest = &mut dist[..k];
        nearest.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        match probs.as_mut() {
            None => values.push(nearest.iter().map(|&(_, i)| target[i]).sum::<f64>() / k as f64),
            Some(m) => {
                let row = m.row_mut(r);
                for &(_, i) in nearest.iter() {
                    row[target[i] as usize] += 1.0 / k as f64;
                }
                // Ties go to the class of the closest neighbour among the tied.
                let top = row.iter().cloned().fold(0.0, f64::max);
                let label =
                    nearest.iter().map(|&(_, i)| target[i] as usize).find(|&c| row[c] >= top - 1e-12).unwrap_or(0);
                values.push(label as f64);
            }
        }
    }
    (values, probs)
}
