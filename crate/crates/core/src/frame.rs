//! Data flowing along pipeline edges.

use serde::{Deserialize, Serialize};

use crate::dataio::{Dataset, TaskType};
use crate::matrix::Matrix;

/// Whether a frame is an ordered single-column series or a feature table.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataShape {
    Table,
    Series,
}

/// Features with row identifiers and (at fit time) the aligned target.
///
/// Row identifiers are ascending; they index rows of the raw input (or time
/// steps for series) so branches that drop or shift rows can be re-aligned
/// when merged.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub rows: Vec<usize>,
    pub features: Matrix,
    pub target: Option<Vec<f64>>,
    pub shape: DataShape,
}

impl Frame {
    pub fn table(features: Matrix, target: Option<Vec<f64>>) -> Self {
        Self { rows: (0..features.rows()).collect(), features, target, shape: DataShape::Table }
    }

    /// Raw input frame for a dataset; forecasting data becomes a series frame.
    pub fn from_dataset(data: &Dataset, with_target: bool) -> Self {
        let target = with_target.then(|| data.target.clone());
        match data.task {
            TaskType::TsForecasting => Self {
                rows: (0..data.rows()).collect(),
                features: Matrix::column_vector(&data.target),
                target,
                shape: DataShape::Series,
            },
            _ => Self::table(data.features.clone(), target),
        }
    }

    pub fn series(values: &[f64]) -> Self {
        Self {
            rows: (0..values.len()).collect(),
            features: Matrix::column_vector(values),
            target: None,
            shape: DataShape::Series,
        }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn width(&self) -> usize {
        self.features.cols()
    }

    /// Keeps the rows at the given positions.
    pub fn select(&self, positions: &[usize]) -> Self {
        Self {
            rows: positions.iter().map(|&p| self.rows[p]).collect(),
            features: self.features.select_rows(positions),
            target: self.target.as_ref().map(|t| positions.iter().map(|&p| t[p]).collect()),
            shape: self.shape,
        }
    }
}

/// Positions (in each input) of the row ids shared by every input.
pub(crate) fn intersect_rows(inputs: &[&[usize]]) -> Vec<Vec<usize>> {
    let mut common: Vec<usize> = inputs.first().map(|r| r.to_vec()).unwrap_or_default();
    for rows in &inputs[1..] {
        let mut out = Vec::with_capacity(common.len());
        let (mut i, mut j) = (0, 0);
        while i < common.len() && j < rows.len() {
            match common[i].cmp(&rows[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    out.push(common[i]);
                    i += 1;
                    j += 1;
                }
            }
        }
        common = out;
    }
    inputs
        .iter()
        .map(|rows| {
            let mut pos = Vec::with_capacity(common.len());
            let mut j = 0;
            for (p, r) in rows.iter().enumerate() {
                if j < common.len() && *r == common[j] {
                    pos.push(p);
                    j += 1;
                }
            }
            pos
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn intersection_positions() {
        let a = [0, 1, 2, 3, 5];
        let b = [1, 3, 4, 5];
        let pos = intersect_rows(&[&a, &b]);
        assert_eq!(pos[0], vec![1, 3, 4]);
        assert_eq!(pos[1], vec![0, 1, 3]);
    }
}
