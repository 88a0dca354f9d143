//! Gaussian naive Bayes.

use super::logistic::class_indices;
use super::{require_finite, LearnedState, OperationError};
use crate::matrix::Matrix;

pub(super) fn fit(
    op: &str,
    x: &Matrix,
    y: &[f64],
    classes: usize,
    smoothing: f64,
) -> Result<LearnedState, OperationError> {
    require_finite(op, x)?;
    let labels = class_indices(op, y, classes)?;
    let (n, d) = (x.rows(), x.cols());
    let mut counts = vec![0.0; classes];
    let mut means = Matrix::zeros(classes, d);
    let mut vars = Matrix::zeros(classes, d);
    for (r, &k) in labels.iter().enumerate() {
        counts[k] += 1.0;
        for (m, v) in means.row_mut(k).iter_mut().zip(x.row(r)) {
            *m += v;
        }
    }
    for k in 0..classes {
        if counts[k] > 0.0 {
            means.row_mut(k).iter_mut().for_each(|m| *m /= counts[k]);
        }
    }
    for (r, &k) in labels.iter().enumerate() {
        for c in 0..d {
            let diff = x.get(r, c) - means.get(k, c);
            vars.set(k, c, vars.get(k, c) + diff * diff);
        }
    }
    let mut max_var: f64 = 0.0;
    for c in 0..d {
        let col = x.column(c);
        let mean = col.iter().sum::<f64>() / n as f64;
        max_var = max_var.max(col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64);
    }
    let epsilon = (smoothing * max_var).max(1e-12);
    for k in 0..classes {
        for c in 0..d {
            let v = if counts[k] > 0.0 { vars.get(k, c) / counts[k] } else { 1.0 };
            vars.set(k, c, v + epsilon);
        }
    }
    let log_priors = counts.iter().map(|&c| if c > 0.0 { (c / n as f64).ln() } else { f64::NEG_INFINITY }).collect();
    Ok(LearnedState::NaiveBayes { means, vars, log_priors })
}

pub(super) fn predict_proba(x: &Matrix, means: &Matrix, vars: &Matrix, log_priors: &[f64]) -> Matrix {
    let classes = log_priors.len();
    let mut out = Matrix::zeros(x.rows(), classes);
    let mut joint = vec![0.0; classes];
    for r in 0..x.rows() {
        let row = x.row(r);
        for (k, j) in joint.iter_mut().enumerate() {
            *j = log_priors[k];
            for (c, &v) in row.iter().enumerate() {
                let var = vars.get(k, c);
                let diff = v - means.get(k, c);
                *j -= 0.5 * ((2.0 * std::f64::consts::PI * var).ln() + diff * diff / var);
            }
        }
        let max = joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = joint.iter().map(|j| (j - max).exp()).sum();
        for (k, j) in joint.iter().enumerate() {
            out.set(r, k, (j - max).exp() / total);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separates_gaussian_classes() {
        let rows: Vec<Vec<f64>> =
            (0..20).map(|i| vec![if i < 10 { 0.0 } else { 4.0 } + (i % 3) as f64 * 0.2]).collect();
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let x = Matrix::from_rows(&rows);
        let LearnedState::NaiveBayes { means, vars, log_priors } = fit("nb", &x, &y, 2, 1e-9).unwrap() else {
            panic!()
        };
        let p = predict_proba(&x, &means, &vars, &log_priors);
        for r in 0..20 {
            assert_eq!((p.get(r, 1) > 0.5) as u8 as f64, y[r]);
        }
    }
}
