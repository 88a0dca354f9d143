//! Registry of atomic building blocks: from-scratch models and data operations.
//!
//! Every operation fits on a [`Frame`] and produces either a transformed frame
//! (data operations) or a prediction table (models). Fitted state is plain
//! data ([`LearnedState`]) so it can be archived and restored bit-exactly.

mod bayes;
pub mod hyper;
mod knn;
mod linear;
mod logistic;
mod preprocess;
mod registry;
mod series;
mod tree;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{PredictionTable, TaskType};
use crate::frame::{DataShape, Frame};
use crate::matrix::Matrix;
use crate::pipeline::FittedPipeline;

pub use hyper::{Domain, HyperParams, HyperValue, Scale};
pub use registry::{OperationSpec, Registry, DEFAULT_REGISTRY_JSON};
pub use tree::TreeNode;

/// Lower/upper clip applied to class probabilities before they are consumed
/// downstream.
pub const PROBABILITY_CLIP: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OperationKind {
    Model,
    DataProcessing,
    TaskSpecificModel,
    DataFlow,
}

impl OperationKind {
    pub fn produces_predictions(self) -> bool {
        matches!(self, OperationKind::Model | OperationKind::TaskSpecificModel)
    }
}

#[derive(Debug, Error)]
pub enum OperationError {
    #[error("unknown operation `{0}`")]
    Unknown(String),
    #[error("singular system while fitting `{operation}`")]
    Singular { operation: String },
    #[error("invalid hyperparameter `{name}` for `{operation}`: {reason}")]
    InvalidHyperparam { operation: String, name: String, reason: String },
    #[error("schema mismatch: expected {expected} input columns, found {found}")]
    SchemaMismatch { expected: usize, found: usize },
    #[error("`{operation}` cannot fit: {reason}")]
    Fit { operation: String, reason: String },
    #[error("invalid registry: {0}")]
    Registry(String),
}

/// Operations implemented in this crate, keyed by registry id.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Builtin {
    Ols,
    Ridge,
    LogisticRegression,
    DecisionTree,
    Knn,
    NaiveBayesGaussian,
    StandardScaling,
    MinMaxScaling,
    MeanImputation,
    ZScoreOutlierFilter,
    PcaTopK,
    LaggedTransform,
    MovingAverageSmoothing,
    MergeConcat,
    LabelShuffle,
}

impl Builtin {
    pub const ALL: [Builtin; 15] = [
        Builtin::Ols,
        Builtin::Ridge,
        Builtin::LogisticRegression,
        Builtin::DecisionTree,
        Builtin::Knn,
        Builtin::NaiveBayesGaussian,
        Builtin::StandardScaling,
        Builtin::MinMaxScaling,
        Builtin::MeanImputation,
        Builtin::ZScoreOutlierFilter,
        Builtin::PcaTopK,
        Builtin::LaggedTransform,
        Builtin::MovingAverageSmoothing,
        Builtin::MergeConcat,
        Builtin::LabelShuffle,
    ];

    pub fn id(self) -> &'static str {
        match self {
            Builtin::Ols => "ols",
            Builtin::Ridge => "ridge",
            Builtin::LogisticRegression => "logistic_regression",
            Builtin::DecisionTree => "decision_tree",
            Builtin::Knn => "knn",
            Builtin::NaiveBayesGaussian => "naive_bayes_gaussian",
            Builtin::StandardScaling => "standard_scaling",
            Builtin::MinMaxScaling => "minmax_scaling",
            Builtin::MeanImputation => "mean_imputation",
            Builtin::ZScoreOutlierFilter => "zscore_outlier_filter",
            Builtin::PcaTopK => "pca_topk",
            Builtin::LaggedTransform => "lagged_transform",
            Builtin::MovingAverageSmoothing => "moving_average_smoothing",
            Builtin::MergeConcat => "merge_concat",
            Builtin::LabelShuffle => "label_shuffle",
        }
    }

    pub fn from_id(id: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.id() == id)
    }

    pub fn kind(self) -> OperationKind {
        match self {
            Builtin::Ols
            | Builtin::Ridge
            | Builtin::LogisticRegression
            | Builtin::DecisionTree
            | Builtin::Knn
            | Builtin::NaiveBayesGaussian => OperationKind::Model,
            Builtin::MergeConcat | Builtin::LabelShuffle => OperationKind::DataFlow,
            _ => OperationKind::DataProcessing,
        }
    }

    /// (accepted input shape, produced output shape)
    pub fn io_shapes(self) -> (DataShape, DataShape) {
        match self {
            Builtin::LaggedTransform => (DataShape::Series, DataShape::Table),
            Builtin::MovingAverageSmoothing => (DataShape::Series, DataShape::Series),
            _ => (DataShape::Table, DataShape::Table),
        }
    }
}

/// Information an operation needs beyond its input frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitContext {
    pub task: TaskType,
    /// Number of classes for classification; 0 otherwise.
    pub n_classes: usize,
    pub seed: u64,
}

/// Fit-time transforms may drop rows or alter targets; predict-time ones never do.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Fit,
    Predict,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum LearnedState {
    Linear { coef: Vec<f64>, intercept: f64 },
    Logistic { mean: Vec<f64>, scale: Vec<f64>, weights: Matrix, bias: Vec<f64> },
    Tree { nodes: Vec<TreeNode>, classes: usize },
    Knn { train: Matrix, target: Vec<f64>, k: usize, classes: usize },
    NaiveBayes { means: Matrix, vars: Matrix, log_priors: Vec<f64> },
    Standardize { mean: Vec<f64>, scale: Vec<f64> },
    MinMax { min: Vec<f64>, range: Vec<f64> },
    Impute { fill: Vec<f64> },
    OutlierFilter { mean: Vec<f64>, std: Vec<f64>, threshold: f64 },
    Pca { mean: Vec<f64>, components: Matrix },
    Lagged { window: usize },
    MovingAverage { window: usize },
    Identity,
    LabelShuffle { seed: u64 },
    Atomized(Box<FittedPipeline>),
}

/// A fitted operation: immutable, safe to share for concurrent prediction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedOperation {
    pub operation_id: String,
    pub state: LearnedState,
    pub input_width: usize,
    pub output_width: usize,
}

/// Result of applying a fitted operation.
#[derive(Debug, Clone, PartialEq)]
pub enum OpOutput {
    Features(Frame),
    Predictions(PredictionTable),
}

pub(crate) fn param_f64(op: &str, params: &HyperParams, name: &str) -> Result<f64, OperationError> {
    params.get(name).and_then(HyperValue::as_f64).ok_or_else(|| OperationError::InvalidHyperparam {
        operation: op.into(),
        name: name.into(),
        reason: "missing or not numeric".into(),
    })
}

pub(crate) fn param_usize(op: &str, params: &HyperParams, name: &str, min: usize) -> Result<usize, OperationError> {
    match params.get(name).and_then(HyperValue::as_i64) {
        Some(v) if v >= min as i64 => Ok(v as usize),
        Some(v) => Err(OperationError::InvalidHyperparam {
            operation: op.into(),
            name: name.into(),
            reason: format!("{v} is below the minimum {min}"),
        }),
        None => Err(OperationError::InvalidHyperparam {
            operation: op.into(),
            name: name.into(),
            reason: "missing or not an integer".into(),
        }),
    }
}

pub(crate) fn require_finite(op: &str, m: &Matrix) -> Result<(), OperationError> {
    if m.has_non_finite() {
        return Err(OperationError::Fit {
            operation: op.into(),
            reason: "input contains missing or non-finite values".into(),
        });
    }
    Ok(())
}

fn require_target<'a>(op: &str, frame: &'a Frame) -> Result<&'a [f64], OperationError> {
    frame
        .target
        .as_deref()
        .ok_or_else(|| OperationError::Fit { operation: op.into(), reason: "no target available at fit time".into() })
}

/// Fits a builtin operation. `params` must already be merged over defaults.
pub fn fit_builtin(
    builtin: Builtin,
    params: &HyperParams,
    input: &Frame,
    ctx: &FitContext,
) -> Result<FittedOperation, OperationError> {
    let op = builtin.id();
    let (expected_shape, _) = builtin.io_shapes();
    if input.shape != expected_shape {
        return Err(OperationError::Fit {
            operation: op.into(),
            reason: format!("expects {expected_shape:?} input, got {:?}", input.shape),
        });
    }
    if input.is_empty() {
        return Err(OperationError::Fit { operation: op.into(), reason: "no rows to fit on".into() });
    }
    let x = &input.features;
    let state = match builtin {
        Builtin::Ols => linear::fit(op, x, require_target(op, input)?, 0.0)?,
        Builtin::Ridge => {
            let alpha = param_f64(op, params, "alpha")?;
            if !(alpha >= 0.0) {
                return Err(OperationError::InvalidHyperparam {
                    operation: op.into(),
                    name: "alpha".into(),
                    reason: "must be non-negative".into(),
                });
            }
            linear::fit(op, x, require_target(op, input)?, alpha)?
        }
        Builtin::LogisticRegression => {
            let l2 = param_f64(op, params, "l2")?;
            logistic::fit(op, x, require_target(op, input)?, ctx.n_classes.max(2), l2)?
        }
        Builtin::DecisionTree => {
            let depth = param_usize(op, params, "max_depth", 1)?;
            let leaf = param_usize(op, params, "min_samples_leaf", 1)?;
            tree::fit(op, x, require_target(op, input)?, classes_for(ctx), depth, leaf)?
        }
        Builtin::Knn => {
            let k = param_usize(op, params, "k", 1)?;
            knn::fit(op, x, require_target(op, input)?, classes_for(ctx), k)?
        }
        Builtin::NaiveBayesGaussian => {
            let smoothing = param_f64(op, params, "var_smoothing")?;
            bayes::fit(op, x, require_target(op, input)?, ctx.n_classes.max(2), smoothing)?
        }
        Builtin::StandardScaling => preprocess::fit_standard(x),
        Builtin::MinMaxScaling => preprocess::fit_minmax(x),
        Builtin::MeanImputation => preprocess::fit_imputer(x),
        Builtin::ZScoreOutlierFilter => {
            let threshold = param_f64(op, params, "threshold")?;
            preprocess::fit_outlier_filter(x, threshold)
        }
        Builtin::PcaTopK => {
            let k = param_usize(op, params, "n_components", 1)?;
            preprocess::fit_pca(op, x, k, ctx.seed)?
        }
        Builtin::LaggedTransform => {
            let window = param_usize(op, params, "window", 1)?;
            if input.len() <= window {
                return Err(OperationError::Fit {
                    operation: op.into(),
                    reason: format!("series of length {} is too short for window {window}", input.len()),
                });
            }
            LearnedState::Lagged { window }
        }
        Builtin::MovingAverageSmoothing => {
            LearnedState::MovingAverage { window: param_usize(op, params, "window", 1)? }
        }
        Builtin::MergeConcat => LearnedState::Identity,
        Builtin::LabelShuffle => LearnedState::LabelShuffle { seed: ctx.seed },
    };
    let output_width = output_width(&state, x.cols());
    Ok(FittedOperation { operation_id: op.to_string(), state, input_width: x.cols(), output_width })
}

fn classes_for(ctx: &FitContext) -> usize {
    if ctx.task == TaskType::Classification {
        ctx.n_classes.max(2)
    } else {
        0
    }
}

/// Width of the downstream representation: one column for regression, the
/// positive-class probability for binary classifiers, one probability per
/// class otherwise.
pub(crate) fn prediction_width(classes: usize) -> usize {
    if classes <= 2 {
        1
    } else {
        classes
    }
}

fn output_width(state: &LearnedState, input_width: usize) -> usize {
    match state {
        LearnedState::Linear { .. } => 1,
        LearnedState::Logistic { bias, .. } => prediction_width(bias.len()),
        LearnedState::Tree { classes, .. } | LearnedState::Knn { classes, .. } => prediction_width(*classes),
        LearnedState::NaiveBayes { log_priors, .. } => prediction_width(log_priors.len()),
        LearnedState::Pca { components, .. } => components.rows(),
        LearnedState::Lagged { window } => *window,
        LearnedState::Atomized(inner) => prediction_width(inner.n_classes()),
        _ => input_width,
    }
}

impl FittedOperation {
    pub fn is_model(&self) -> bool {
        matches!(
            self.state,
            LearnedState::Linear { .. }
                | LearnedState::Logistic { .. }
                | LearnedState::Tree { .. }
                | LearnedState::Knn { .. }
                | LearnedState::NaiveBayes { .. }
                | LearnedState::Atomized(_)
        )
    }

    /// Inverse of a scaling transform; `None` for operations without one.
    pub fn inverse_transform(&self, x: &Matrix) -> Option<Matrix> {
        match &self.state {
            LearnedState::Standardize { mean, scale } => Some(preprocess::unstandardize(x, mean, scale)),
            LearnedState::MinMax { min, range } => Some(preprocess::unminmax(x, min, range)),
            _ => None,
        }
    }

    /// Applies the operation to a frame.
    pub fn apply(&self, input: &Frame, stage: Stage) -> Result<OpOutput, OperationError> {
        let atomized = matches!(self.state, LearnedState::Atomized(_));
        if !atomized && input.width() != self.input_width {
            return Err(OperationError::SchemaMismatch { expected: self.input_width, found: input.width() });
        }
        let x = &input.features;
        let predictions = |values: Vec<f64>, probabilities: Option<Matrix>| {
            OpOutput::Predictions(PredictionTable { rows: input.rows.clone(), values, probabilities })
        };
        let features = |m: Matrix| {
            OpOutput::Features(Frame {
                rows: input.rows.clone(),
                features: m,
                target: input.target.clone(),
                shape: input.shape,
            })
        };
        Ok(match &self.state {
            LearnedState::Linear { coef, intercept } => predictions(linear::predict(x, coef, *intercept), None),
            LearnedState::Logistic { mean, scale, weights, bias } => {
                let probs = logistic::predict_proba(x, mean, scale, weights, bias);
                predictions(argmax_rows(&probs), Some(probs))
            }
            LearnedState::Tree { nodes, classes } => {
                let (values, probs) = tree::predict(nodes, *classes, x);
                predictions(values, probs)
            }
            LearnedState::Knn { train, target, k, classes } => {
                let (values, probs) = knn::predict(train, target, *k, *classes, x);
                predictions(values, probs)
            }
            LearnedState::NaiveBayes { means, vars, log_priors } => {
                let probs = bayes::predict_proba(x, means, vars, log_priors);
                predictions(argmax_rows(&probs), Some(probs))
            }
            LearnedState::Standardize { mean, scale } => features(preprocess::standardize(x, mean, scale)),
            LearnedState::MinMax { min, range } => features(preprocess::minmax(x, min, range)),
            LearnedState::Impute { fill } => features(preprocess::impute(x, fill)),
            LearnedState::OutlierFilter { mean, std, threshold } => match stage {
                Stage::Predict => features(x.clone()),
                Stage::Fit => {
                    let keep = preprocess::inlier_positions(x, mean, std, *threshold);
                    OpOutput::Features(input.select(&keep))
                }
            },
            LearnedState::Pca { mean, components } => features(preprocess::project(x, mean, components)),
            LearnedState::Lagged { window } => OpOutput::Features(series::lagged(input, *window, stage)?),
            LearnedState::MovingAverage { window } => features(series::trailing_mean(x, *window)),
            LearnedState::Identity => features(x.clone()),
            LearnedState::LabelShuffle { seed } => match stage {
                Stage::Predict => features(x.clone()),
                Stage::Fit => {
                    let mut out = input.clone();
                    if let Some(t) = out.target.as_mut() {
                        preprocess::shuffle_in_place(t, *seed);
                    }
                    OpOutput::Features(out)
                }
            },
            LearnedState::Atomized(inner) => {
                let table = inner
                    .predict_frame(input)
                    .map_err(|e| OperationError::Fit { operation: self.operation_id.clone(), reason: e.to_string() })?;
                OpOutput::Predictions(table)
            }
        })
    }
}

pub(crate) fn argmax_rows(probs: &Matrix) -> Vec<f64> {
    (0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            let mut best = 0;
            for (c, &p) in row.iter().enumerate() {
                if p > row[best] {
                    best = c;
                }
            }
            best as f64
        })
        .collect()
}

/// Fits a single operation on bare features/target (no pipeline involved).
pub fn op_fit(
    spec: &OperationSpec,
    hyperparams: &HyperParams,
    features: &Matrix,
    target: &[f64],
    ctx: &FitContext,
) -> Result<FittedOperation, OperationError> {
    if features.rows() != target.len() {
        return Err(OperationError::Fit {
            operation: spec.operation_id.clone(),
            reason: format!("{} feature rows but {} targets", features.rows(), target.len()),
        });
    }
    let builtin =
        Builtin::from_id(&spec.operation_id).ok_or_else(|| OperationError::Unknown(spec.operation_id.clone()))?;
    let mut params = spec.defaults.clone();
    for (k, v) in hyperparams {
        if !spec.hyperparam_space.contains_key(k) {
            return Err(OperationError::InvalidHyperparam {
                operation: spec.operation_id.clone(),
                name: k.clone(),
                reason: "not declared by the operation".into(),
            });
        }
        params.insert(k.clone(), v.clone());
    }
    let (shape, _) = builtin.io_shapes();
    let frame = Frame {
        rows: (0..features.rows()).collect(),
        features: features.clone(),
        target: Some(target.to_vec()),
        shape,
    };
    fit_builtin(builtin, &params, &frame, ctx)
}

/// Applies a fitted operation at predict time. Data operations return the
/// transformed features; models return a prediction column followed by the
/// class probability columns for classifiers.
pub fn op_predict(fitted: &FittedOperation, features: &Matrix) -> Result<Matrix, OperationError> {
    let shape = match fitted.state {
        LearnedState::Lagged { .. } | LearnedState::MovingAverage { .. } => DataShape::Series,
        _ => DataShape::Table,
    };
    let frame = Frame { rows: (0..features.rows()).collect(), features: features.clone(), target: None, shape };
    match fitted.apply(&frame, Stage::Predict)? {
        OpOutput::Features(f) => Ok(f.features),
        OpOutput::Predictions(p) => {
            let values = Matrix::column_vector(&p.values);
            Ok(match &p.probabilities {
                Some(probs) => Matrix::hstack(&[&values, probs]),
                None => values,
            })
        }
    }
}

/// Tags a spec must carry for the operation to be chosen by `registry_filter`.
pub fn registry_filter<'a>(
    registry: &'a Registry,
    tags_include: &BTreeSet<String>,
    tags_exclude: &BTreeSet<String>,
    task: TaskType,
) -> Vec<&'a OperationSpec> {
    registry
        .specs()
        .filter(|s| s.tasks.contains(&task))
        .filter(|s| tags_include.iter().all(|t| s.tags.contains(t)))
        .filter(|s| !s.tags.iter().any(|t| tags_exclude.contains(t)))
        .collect()
}
