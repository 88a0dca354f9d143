//! Dataset ingestion, task descriptors, splitting, and quality metrics.

mod csv_io;
mod metrics;
mod split;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;

pub use csv_io::{load_csv, load_csv_matching, load_csv_with_schema, write_csv, CsvSchema};
pub use metrics::{
    evaluate_metric, f1_score, mae, mape, rmse, roc_auc, to_fitness_score, Metric, MetricValue, PredictionTable,
};
pub use split::split;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskType {
    Classification,
    Regression,
    TsForecasting,
}

impl TaskType {
    pub fn as_str(self) -> &'static str {
        match self {
            TaskType::Classification => "classification",
            TaskType::Regression => "regression",
            TaskType::TsForecasting => "ts_forecasting",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classification" | "clf" => Some(TaskType::Classification),
            "regression" | "regr" => Some(TaskType::Regression),
            "ts" | "ts_forecasting" | "timeseries" | "time_series" => Some(TaskType::TsForecasting),
            _ => None,
        }
    }

    /// Quality metric used when the caller does not choose one.
    pub fn default_metric(self) -> Metric {
        match self {
            TaskType::Classification => Metric::RocAuc,
            TaskType::Regression => Metric::Rmse,
            TaskType::TsForecasting => Metric::Mape,
        }
    }
}

#[derive(Debug, Error)]
pub enum DataError {
    #[error("parse error at row {row}, column {column}: {message}")]
    Parse { row: usize, column: String, message: String },
    #[error("target column `{0}` not found")]
    MissingTarget(String),
    #[error("feature/target length mismatch: {rows} feature rows, {targets} targets")]
    Shape { rows: usize, targets: usize },
    #[error("split would leave an empty side ({train} train / {test} test rows)")]
    TooFewRows { train: usize, test: usize },
    #[error("invalid split ratio {0}; expected 0 < ratio < 1")]
    InvalidRatio(f64),
    #[error("MAPE undefined: truth contains zero at position {0}")]
    ZeroDenominator(usize),
    #[error("ROC AUC undefined: truth contains a single class")]
    DegenerateClass,
    #[error("metric {metric} requires {what}")]
    MissingScores { metric: &'static str, what: &'static str },
    #[error("prediction/truth length mismatch ({predictions} vs {truth})")]
    LengthMismatch { predictions: usize, truth: usize },
    #[error("schema mismatch: expected feature columns {expected:?}, found {found:?}")]
    SchemaMismatch { expected: Vec<String>, found: Vec<String> },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Feature matrix plus target and task descriptor.
///
/// Missing cells are stored as NaN. For forecasting tasks the dataset holds a
/// single ordered series: `target` is the series and `features` is the same
/// series as one column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub features: Matrix,
    pub target: Vec<f64>,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub task: TaskType,
    pub forecast_horizon: Option<usize>,
    /// Label encodings of categorical feature columns: column name -> categories by code.
    #[serde(default)]
    pub encodings: BTreeMap<String, Vec<String>>,
    /// Original class labels by code, for classification targets.
    #[serde(default)]
    pub class_labels: Option<Vec<String>>,
}

impl Dataset {
    pub fn new(features: Matrix, target: Vec<f64>, task: TaskType) -> Result<Self, DataError> {
        if features.rows() != target.len() {
            return Err(DataError::Shape { rows: features.rows(), targets: target.len() });
        }
        let feature_names = (0..features.cols()).map(|i| format!("x{i}")).collect();
        Ok(Self {
            features,
            target,
            feature_names,
            target_name: "target".into(),
            task,
            forecast_horizon: None,
            encodings: BTreeMap::new(),
            class_labels: None,
        })
    }

    /// Univariate series for forecasting with the given horizon.
    pub fn time_series(values: Vec<f64>, horizon: usize) -> Self {
        Self {
            features: Matrix::column_vector(&values),
            target: values,
            feature_names: vec!["value".into()],
            target_name: "value".into(),
            task: TaskType::TsForecasting,
            forecast_horizon: Some(horizon),
            encodings: BTreeMap::new(),
            class_labels: None,
        }
    }

    pub fn rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.features.cols()
    }

    /// Number of classes for classification targets (max label + 1), 0 otherwise.
    pub fn n_classes(&self) -> usize {
        if self.task != TaskType::Classification {
            return 0;
        }
        let from_labels = self.class_labels.as_ref().map_or(0, Vec::len);
        let from_data = self.target.iter().fold(0.0_f64, |m, &v| m.max(v)) as usize + 1;
        from_labels.max(from_data).max(2)
    }

    pub fn is_missing(&self, row: usize, col: usize) -> bool {
        self.features.get(row, col).is_nan()
    }

    pub fn missing_cells(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for r in 0..self.features.rows() {
            for c in 0..self.features.cols() {
                if self.is_missing(r, c) {
                    out.push((r, c));
                }
            }
        }
        out
    }

    /// Row subset, preserving metadata.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            target: idx.iter().map(|&i| self.target[i]).collect(),
            ..self.metadata_clone()
        }
    }

    fn metadata_clone(&self) -> Self {
        Self {
            features: Matrix::zeros(0, self.features.cols()),
            target: Vec::new(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            task: self.task,
            forecast_horizon: self.forecast_horizon,
            encodings: self.encodings.clone(),
            class_labels: self.class_labels.clone(),
        }
    }

    pub fn with_horizon(mut self, horizon: usize) -> Self {
        self.forecast_horizon = Some(horizon);
        self
    }

    pub fn schema(&self) -> CsvSchema {
        CsvSchema {
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
            encodings: self.encodings.clone(),
            class_labels: self.class_labels.clone(),
        }
    }
}
