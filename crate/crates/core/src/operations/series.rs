//! Sliding-window and smoothing transforms for a single ordered series.

use super::{OperationError, Stage};
use crate::frame::{DataShape, Frame};
use crate::matrix::Matrix;

/// Turns a series into a lag table: row `t` holds the `window` values before
/// step `t`, with the value at `t` as target. At predict time an extra row
/// for the step after the last observation is appended.
pub(super) fn lagged(input: &Frame, window: usize, stage: Stage) -> Result<Frame, OperationError> {
    let n = input.len();
    let values = input.features.column(0);
    if n < window || (stage == Stage::Fit && n == window) {
        return Err(OperationError::Fit {
            operation: "lagged_transform".into(),
            reason: format!("series of length {n} is too short for window {window}"),
        });
    }
    let end = if stage == Stage::Predict { n + 1 } else { n };
    let mut data = Vec::with_capacity((end - window) * window);
    let mut rows = Vec::with_capacity(end - window);
    for t in window..end {
        data.extend_from_slice(&values[t - window..t]);
        rows.push(if t < n { input.rows[t] } else { input.rows[n - 1] + 1 });
    }
    let target = match stage {
        Stage::Fit => Some(match &input.target {
            Some(y) => y[window..n].to_vec(),
            None => values[window..n].to_vec(),
        }),
        Stage::Predict => None,
    };
    Ok(Frame { rows, features: Matrix::from_vec(end - window, window, data), target, shape: DataShape::Table })
}

/// Causal moving average: each value is the mean of itself and up to `window - 1` predecessors.
pub(super) fn trailing_mean(x: &Matrix, window: usize) -> Matrix {
    let mut out = x.clone();
    for c in 0..x.cols() {
        let col = x.column(c);
        let mut acc = 0.0;
        for t in 0..col.len() {
            acc += col[t];
            if t >= window {
                acc -= col[t - window];
            }
            let span = (t + 1).min(window);
            out.set(t, c, acc / span as f64);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sliding_windows_with_targets() {
        let frame = Frame::series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let out = lagged(&frame, 3, Stage::Fit).unwrap();
        assert_eq!(out.features, Matrix::from_rows(&[vec![1.0, 2.0, 3.0], vec![2.0, 3.0, 4.0]]));
        assert_eq!(out.target, Some(vec![4.0, 5.0]));
        assert_eq!(out.rows, vec![3, 4]);
    }

    #[test]
    fn predict_appends_next_step() {
        let frame = Frame::series(&[1.0, 2.0, 3.0, 4.0, 5.0]);
        let out = lagged(&frame, 3, Stage::Predict).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out.features.row(2), &[3.0, 4.0, 5.0]);
        assert_eq!(out.rows, vec![3, 4, 5]);
    }

    #[test]
    fn trailing_mean_is_causal() {
        let out = trailing_mean(&Matrix::column_vector(&[3.0, 6.0, 9.0, 0.0]), 2);
        assert_eq!(out.column(0), vec![3.0, 4.5, 7.5, 4.5]);
    }
}
