//! Ordinary least squares and ridge regression via centered normal equations.

use super::{require_finite, LearnedState, OperationError};
use crate::matrix::{cholesky_solve, Matrix};

const PIVOT_TOL: f64 = 1e-10;

/// Minimizes `||y - Xb - c||^2 + alpha ||b||^2`. The intercept is not penalized.
pub(super) fn fit(op: &str, x: &Matrix, y: &[f64], alpha: f64) -> Result<LearnedState, OperationError> {
    require_finite(op, x)?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(OperationError::Fit { operation: op.into(), reason: "target contains non-finite values".into() });
    }
    let (n, d) = (x.rows(), x.cols());
    let y_mean = y.iter().sum::<f64>() / n as f64;
    if d == 0 {
        return Ok(LearnedState::Linear { coef: Vec::new(), intercept: y_mean });
    }
    let mean: Vec<f64> = (0..d).map(|c| (0..n).map(|r| x.get(r, c)).sum::<f64>() / n as f64).collect();

    let mut gram = vec![0.0; d * d];
    let mut rhs = vec![0.0; d];
    let mut centered = vec![0.0; d];
    for r in 0..n {
        for (c, v) in centered.iter_mut().enumerate() {
            *v = x.get(r, c) - mean[c];
        }
        let yc = y[r] - y_mean;
        for i in 0..d {
            rhs[i] += centered[i] * yc;
            for j in 0..=i {
                gram[i * d + j] += centered[i] * centered[j];
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            gram[j * d + i] = gram[i * d + j];
        }
        gram[i * d + i] += alpha;
    }
    let coef =
        cholesky_solve(&gram, &rhs, d, PIVOT_TOL).ok_or_else(|| OperationError::Singular { operation: op.into() })?;
    let intercept = y_mean - coef.iter().zip(&mean).map(|(b, m)| b * m).sum::<f64>();
    if !intercept.is_finite() || coef.iter().any(|v| !v.is_finite()) {
        return Err(OperationError::Singular { operation: op.into() });
    }
    Ok(LearnedState::Linear { coef, intercept })
}

pub(super) fn predict(x: &Matrix, coef: &[f64], intercept: f64) -> Vec<f64> {
    (0..x.rows()).map(|r| intercept + x.row(r).iter().zip(coef).map(|(a, b)| a * b).sum::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line_recovered_without_penalty() {
        let xs: Vec<f64> = (0..20).map(|i| i as f64 * 0.5 - 3.0).collect();
        let y: Vec<f64> = xs.iter().map(|v| 3.0 * v + 1.0).collect();
        let LearnedState::Linear { coef, intercept } = fit("ridge", &Matrix::column_vector(&xs), &y, 0.0).unwrap()
        else {
            panic!("wrong state")
        };
        assert!((coef[0] - 3.0).abs() < 1e-8);
        assert!((intercept - 1.0).abs() < 1e-8);
    }

    #[test]
    fn duplicate_columns_are_singular_without_penalty() {
        let x = Matrix::from_rows(&(0..10).map(|i| vec![i as f64, i as f64]).collect::<Vec<_>>());
        let y: Vec<f64> = (0..10).map(|i| i as f64).collect();
        assert!(matches!(fit("ols", &x, &y, 0.0), Err(OperationError::Singular { .. })));
        assert!(fit("ridge", &x, &y, 0.1).is_ok());
    }

    #[test]
    fn penalty_shrinks_coefficients() {
        let xs: Vec<f64> = (0..30).map(|i| i as f64 / 10.0).collect();
        let y: Vec<f64> = xs.iter().map(|v| 2.0 * v).collect();
        let x = Matrix::column_vector(&xs);
        let slope = |alpha| match fit("ridge", &x, &y, alpha).unwrap() {
            LearnedState::Linear { coef, .. } => coef[0],
            _ => unreachable!(),
        };
        assert!(slope(100.0) < slope(1.0));
        assert!(slope(1.0) < 2.0);
    }
}
