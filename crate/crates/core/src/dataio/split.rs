use rand::seq::SliceRandom;

use super::{DataError, Dataset, TaskType};
use crate::seed;

/// Splits into (train, test).
///
/// Tabular tasks are shuffled by `seed` (stratified by class for
/// classification) and split at `ratio`. Forecasting tasks split
/// chronologically: the last `forecast_horizon` points (or the `1 - ratio`
/// tail when no horizon is set) become the test part, never shuffled.
pub fn split(data: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    let n = data.rows();
    let (mut train_idx, mut test_idx): (Vec<usize>, Vec<usize>) = match data.task {
        TaskType::TsForecasting => {
            let test_len = data.forecast_horizon.unwrap_or_else(|| n - (ratio * n as f64).round() as usize);
            let cut = n.saturating_sub(test_len);
            ((0..cut).collect(), (cut..n).collect())
        }
        TaskType::Regression => {
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut seed::rng(seed));
            let cut = (ratio * n as f64).round() as usize;
            (idx[..cut].to_vec(), idx[cut..].to_vec())
        }
        TaskType::Classification => {
            let mut rng = seed::rng(seed);
            let k = data.n_classes();
            let mut train = Vec::new();
            let mut test = Vec::new();
            for class in 0..k {
                let mut idx: Vec<usize> = (0..n).filter(|&i| data.target[i] as usize == class).collect();
                idx.shuffle(&mut rng);
                let cut = (ratio * idx.len() as f64).round() as usize;
                train.extend_from_slice(&idx[..cut]);
                test.extend_from_slice(&idx[cut..]);
            }
            (train, test)
        }
    };
    if train_idx.is_empty() || test_idx.is_empty() {
        return Err(DataError::TooFewRows { train: train_idx.len(), test: test_idx.len() });
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((data.subset(&train_idx), data.subset(&test_idx)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrix::Matrix;

    fn regression(n: usize) -> Dataset {
        let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
        Dataset::new(Matrix::column_vector(&x), x.clone(), TaskType::Regression).unwrap()
    }

    #[test]
    fn eighty_twenty() {
        let (train, test) = split(&regression(100), 0.8, 1).unwrap();
        assert_eq!((train.rows(), test.rows()), (80, 20));
    }

    #[test]
    fn same_seed_same_split() {
        let d = regression(37);
        let (a, _) = split(&d, 0.7, 9).unwrap();
        let (b, _) = split(&d, 0.7, 9).unwrap();
        assert_eq!(a.target, b.target);
        let (c, _) = split(&d, 0.7, 10).unwrap();
        assert_ne!(a.target, c.target);
    }

    #[test]
    fn series_split_is_chronological() {
        let values: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let ds = Dataset::time_series(values, 10);
        let (train, test) = split(&ds, 0.8, 3).unwrap();
        assert_eq!(train.rows(), 40);
        assert_eq!(test.target, (40..50).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn empty_side_is_rejected() {
        assert!(matches!(split(&regression(1), 0.5, 0), Err(DataError::TooFewRows { .. })));
        assert!(matches!(split(&regression(10), 1.0, 0), Err(DataError::InvalidRatio(_))));
    }

    #[test]
    fn classification_split_keeps_both_classes() {
        let y: Vec<f64> = (0..40).map(|i| if i < 8 { 1.0 } else { 0.0 }).collect();
        let x: Vec<f64> = (0..40).map(|i| i as f64).collect();
        let ds = Dataset::new(Matrix::column_vector(&x), y, TaskType::Classification).unwrap();
        let (train, test) = split(&ds, 0.75, 4).unwrap();
        assert!(test.target.contains(&1.0) && test.target.contains(&0.0));
        assert_eq!(train.rows() + test.rows(), 40);
    }
}
