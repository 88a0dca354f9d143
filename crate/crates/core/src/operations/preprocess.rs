//! Feature-only transforms. None of these read the target.

use rand::seq::SliceRandom;
use rand_distr::{Distribution, StandardNormal};

use super::{require_finite, LearnedState, OperationError};
use crate::matrix::Matrix;
use crate::seed;

/// Column mean and population standard deviation, skipping missing cells.
fn column_moments(x: &Matrix) -> (Vec<f64>, Vec<f64>) {
    (0..x.cols())
        .map(|c| {
            let vals: Vec<f64> = (0..x.rows()).map(|r| x.get(r, c)).filter(|v| v.is_finite()).collect();
            if vals.is_empty() {
                return (0.0, 0.0);
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            (mean, var.sqrt())
        })
        .unzip()
}

pub(super) fn fit_standard(x: &Matrix) -> LearnedState {
    let (mean, std) = column_moments(x);
    let scale = std.into_iter().map(|s| if s > 0.0 { s } else { 1.0 }).collect();
    LearnedState::Standardize { mean, scale }
}

pub(super) fn fit_minmax(x: &Matrix) -> LearnedState {
    let (min, range) = (0..x.cols())
        .map(|c| {
            let (lo, hi) = (0..x.rows())
                .map(|r| x.get(r, c))
                .filter(|v| v.is_finite())
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
            if lo.is_finite() && hi > lo {
                (lo, hi - lo)
            } else if lo.is_finite() {
                (lo, 1.0)
            } else {
                (0.0, 1.0)
            }
        })
        .unzip();
    LearnedState::MinMax { min, range }
}

pub(super) fn fit_imputer(x: &Matrix) -> LearnedState {
    LearnedState::Impute { fill: column_moments(x).0 }
}

pub(super) fn fit_outlier_filter(x: &Matrix, threshold: f64) -> LearnedState {
    let (mean, std) = column_moments(x);
    LearnedState::OutlierFilter { mean, std, threshold }
}

/// Top-`k` principal directions by power iteration with deflation.
pub(super) fn fit_pca(op: &str, x: &Matrix, k: usize, seed: u64) -> Result<LearnedState, OperationError> {
    require_finite(op, x)?;
    let (n, d) = (x.rows(), x.cols());
    let k = k.min(d).max(1);
    let (mean, _) = column_moments(x);
    let mut cov = vec![0.0; d * d];
    for r in 0..n {
        let row = x.row(r);
        for i in 0..d {
            let a = row[i] - mean[i];
            for j in 0..=i {
                cov[i * d + j] += a * (row[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[i * d + j] /= n as f64;
            cov[j * d + i] = cov[i * d + j];
        }
    }
    let mut rng = seed::rng(seed);
    let mut components = Matrix::zeros(k, d);
    for comp in 0..k {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        normalize(&mut v);
        let mut eigen = 0.0;
        for _ in 0..500 {
            let mut w: Vec<f64> = (0..d).map(|i| (0..d).map(|j| cov[i * d + j] * v[j]).sum()).collect();
            let norm = normalize(&mut w);
            if norm == 0.0 {
                // Remaining variance is zero: any unit vector orthogonal to the others will do.
                w = orthogonal_fallback(&components, comp, d);
            }
            let delta: f64 = w.iter().zip(&v).map(|(a, b)| (a - b).abs()).sum();
            v = w;
            eigen = norm;
            if delta < 1e-12 {
                break;
            }
        }
        // Sign convention: largest-magnitude coordinate positive.
        let pivot = (0..d).fold(0, |b, i| if v[i].abs() > v[b].abs() { i } else { b });
        if v[pivot] < 0.0 {
            v.iter_mut().for_each(|a| *a = -*a);
        }
        for i in 0..d {
            for j in 0..d {
                cov[i * d + j] -= eigen * v[i] * v[j];
            }
        }
        components.row_mut(comp).copy_from_slice(&v);
    }
    Ok(LearnedState::Pca { mean, components })
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
    norm
}

fn orthogonal_fallback(components: &Matrix, found: usize, d: usize) -> Vec<f64> {
    for axis in 0..d {
        let mut v = vec![0.0; d];
        v[axis] = 1.0;
        for c in 0..found {
            let u = components.row(c);
            let dot: f64 = u.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= dot * b);
        }
        if normalize(&mut v) > 1e-6 {
            return v;
        }
    }
    vec![0.0; d]
}

pub(super) fn standardize(x: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    x.map_columns(|c, v| (v - mean[c]) / scale[c])
}

pub(super) fn unstandardize(x: &Matrix, mean: &[f64], scale: &[f64]) -> Matrix {
    x.map_columns(|c, v| v * scale[c] + mean[c])
}

pub(super) fn minmax(x: &Matrix, min: &[f64], range: &[f64]) -> Matrix {
    x.map_columns(|c, v| (v - min[c]) / range[c])
}

pub(super) fn unminmax(x: &Matrix, min: &[f64], range: &[f64]) -> Matrix {
    x.map_columns(|c, v| v * range[c] + min[c])
}

pub(super) fn impute(x: &Matrix, fill: &[f64]) -> Matrix {
    x.map_columns(|c, v| if v.is_nan() { fill[c] } else { v })
}

/// Rows whose every finite z-score is within the threshold.
pub(super) fn inlier_positions(x: &Matrix, mean: &[f64], std: &[f64], threshold: f64) -> Vec<usize> {
    (0..x.rows())
        .filter(|&r| {
            x.row(r).iter().enumerate().all(|(c, &v)| !(std[c] > 0.0 && ((v - mean[c]) / std[c]).abs() > threshold))
        })
        .collect()
}

pub(super) fn project(x: &Matrix, mean: &[f64], components: &Matrix) -> Matrix {
    let k = components.rows();
    let mut out = Matrix::zeros(x.rows(), k);
    for r in 0..x.rows() {
        let row = x.row(r);
        for c in 0..k {
            let v: f64 = components.row(c).iter().zip(row).zip(mean).map(|((w, v), m)| w * (v - m)).sum();
            out.set(r, c, v);
        }
    }
    out
}

pub(super) fn shuffle_in_place(values: &mut [f64], seed: u64) {
    values.shuffle(&mut seed::rng(seed));
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_scaler_stores_population_moments() {
        // Values 8 and 12 repeated: mean 10, population std 2.
        let x = Matrix::column_vector(&[8.0, 12.0, 8.0, 12.0]);
        let LearnedState::Standardize { mean, scale } = fit_standard(&x) else { panic!() };
        assert!((mean[0] - 10.0).abs() < 1e-12);
        assert!((scale[0] - 2.0).abs() < 1e-12);
        let z = standardize(&Matrix::column_vector(&[14.0]), &mean, &scale);
        assert_eq!(z.get(0, 0), 2.0);
    }

    #[test]
    fn single_far_point_is_dropped() {
        let mut values: Vec<f64> = (0..100).map(|i| ((i as f64) * 0.7).sin()).collect();
        let (mean, std) = {
            let m = values.iter().sum::<f64>() / 100.0;
            (m, (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / 100.0).sqrt())
        };
        values.push(mean + 10.0 * std);
        let x = Matrix::column_vector(&values);
        let LearnedState::OutlierFilter { mean, std, threshold } = fit_outlier_filter(&x, 3.0) else { panic!() };
        let keep = inlier_positions(&x, &mean, &std, threshold);
        assert_eq!(keep.len(), 100);
        assert!(!keep.contains(&100));
    }

    #[test]
    fn pca_finds_dominant_axis() {
        let rows: Vec<Vec<f64>> = (0..50)
            .map(|i| {
                let t = i as f64 / 5.0;
                vec![t, 2.0 * t + (i as f64 * 1.3).sin() * 0.01]
            })
            .collect();
        let x = Matrix::from_rows(&rows);
        let LearnedState::Pca { components, .. } = fit_pca("pca", &x, 2, 1).unwrap() else { panic!() };
        let expected = [1.0 / 5f64.sqrt(), 2.0 / 5f64.sqrt()];
        assert!((components.get(0, 0) - expected[0]).abs() < 1e-3);
        assert!((components.get(0, 1) - expected[1]).abs() < 1e-3);
        let dot: f64 = components.row(0).iter().zip(components.row(1)).map(|(a, b)| a * b).sum();
        assert!(dot.abs() < 1e-6);
    }

    #[test]
    fn imputer_fills_means() {
        let x = Matrix::from_rows(&[vec![1.0, f64::NAN], vec![3.0, 4.0]]);
        let LearnedState::Impute { fill } = fit_imputer(&x) else { panic!() };
        let out = impute(&x, &fill);
        assert_eq!(out.row(0), &[1.0, 4.0]);
    }
}
