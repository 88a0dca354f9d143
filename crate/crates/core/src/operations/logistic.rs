//! Multinomial logistic regression trained by full-batch gradient descent.

use super::{require_finite, LearnedState, OperationError};
use crate::matrix::Matrix;

const ITERATIONS: usize = 500;
const LEARNING_RATE: f64 = 0.1;

pub(super) fn fit(op: &str, x: &Matrix, y: &[f64], classes: usize, l2: f64) -> Result<LearnedState, OperationError> {
    require_finite(op, x)?;
    let labels = class_indices(op, y, classes)?;
    let (n, d) = (x.rows(), x.cols());
    let mean: Vec<f64> = (0..d).map(|c| (0..n).map(|r| x.get(r, c)).sum::<f64>() / n as f64).collect();
    let scale: Vec<f64> = (0..d)
        .map(|c| {
            let var = (0..n).map(|r| (x.get(r, c) - mean[c]).powi(2)).sum::<f64>() / n as f64;
            if var > 0.0 {
                var.sqrt()
            } else {
                1.0
            }
        })
        .collect();
    let z = standardized(x, &mean, &scale);

    let mut weights = Matrix::zeros(classes, d);
    let mut bias = vec![0.0; classes];
    let mut probs = vec![0.0; classes];
    let mut grad_w = Matrix::zeros(classes, d);
    let mut grad_b = vec![0.0; classes];
    for _ in 0..ITERATIONS {
        grad_w.as_mut_slice().fill(0.0);
        grad_b.fill(0.0);
        for r in 0..n {
            let row = z.row(r);
            softmax_into(row, &weights, &bias, &mut probs);
            for k in 0..classes {
                let err = probs[k] - if labels[r] == k { 1.0 } else { 0.0 };
                grad_b[k] += err;
                for (g, v) in grad_w.row_mut(k).iter_mut().zip(row) {
                    *g += err * v;
                }
            }
        }
        let inv_n = 1.0 / n as f64;
        for k in 0..classes {
            bias[k] -= LEARNING_RATE * grad_b[k] * inv_n;
            let (w, g) = (weights.row_mut(k), grad_w.row(k));
            for c in 0..d {
                w[c] -= LEARNING_RATE * (g[c] * inv_n + l2 * w[c]);
            }
        }
    }
    if weights.has_non_finite() || bias.iter().any(|b| !b.is_finite()) {
        return Err(OperationError::Fit { operation: op.into(), reason: "gradient descent diverged".into() });
    }
    Ok(LearnedState::Logistic { mean, scale, weights, bias })
}

pub(super) fn predict_proba(x: &Matrix, mean: &[f64], scale: &[f64], weights: &Matrix, bias: &[f64]) -> Matrix {
    let z = standardized(x, mean, scale);
    let k = bias.len();
    let mut out = Matrix::zeros(x.rows(), k);
    let mut probs = vec![0.0; k];
    for r in 0..x.rows() {
        softmax_into(z.row(r), weights, bias, &mut probs);
        out.row_mut(r).copy_from_slice(&probs);
    }
    out
}

fn standardized(x: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    x.map_columns(|c, v| (v - mean[c]) / scale[c])
}

fn softmax_into(row: &[f64], weights: &Matrix, bias: &[f64], out: &mut [f64]) {
    for (k, o) in out.iter_mut().enumerate() {
        *o = bias[k] + weights.row(k).iter().zip(row).map(|(w, v)| w * v).sum::<f64>();
    }
    let max = out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for o in out.iter_mut() {
        *o = (*o - max).exp();
        total += *o;
    }
    for o in out.iter_mut() {
        *o /= total;
    }
}

/// Converts float-coded labels into class indices, rejecting anything outside `0..classes`.
pub(super) fn class_indices(op: &str, y: &[f64], classes: usize) -> Result<Vec<usize>, OperationError> {
    y.iter()
        .map(|&v| {
            if v.is_finite() && v >= 0.0 && v.fract() == 0.0 && (v as usize) < classes {
                Ok(v as usize)
            } else {
                Err(OperationError::Fit {
                    operation: op.into(),
                    reason: format!("label {v} is not a class index below {classes}"),
                })
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_two_blobs() {
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            let off = if i % 2 == 0 { -2.0 } else { 2.0 };
            rows.push(vec![off + (i as f64 * 0.37).sin() * 0.5, (i as f64 * 0.11).cos()]);
            y.push((i % 2) as f64);
        }
        let x = Matrix::from_rows(&rows);
        let LearnedState::Logistic { mean, scale, weights, bias } = fit("lr", &x, &y, 2, 1e-3).unwrap() else {
            panic!()
        };
        let p = predict_proba(&x, &mean, &scale, &weights, &bias);
        for r in 0..40 {
            assert_eq!((p.get(r, 1) > 0.5) as usize as f64, y[r]);
            assert!((p.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_labels_out_of_range() {
        let x = Matrix::column_vector(&[0.0, 1.0]);
        assert!(fit("lr", &x, &[0.0, 2.0], 2, 0.0).is_err());
    }
}
