//! Evolutionary design of composite machine-learning pipelines.
//!
//! Pipelines are DAGs of models and data operations with a single final
//! node. The crate searches over such graphs with a multi-objective
//! evolutionary algorithm, tunes hyperparameters of a fixed structure,
//! measures how much each node contributes, and persists pipelines as JSON
//! documents with binary fitted-state files.
//!
//! ```
//! use pipeforge::composer::{compose, ComposerConfig};
//! use pipeforge::tuner::{tune, TuningConfig};
//! use pipeforge::{fixtures, Registry, TaskType};
//!
//! # fn main() -> Result<(), Box<dyn std::error::Error>> {
//! let reg = Registry::builtin();
//! let data = fixtures::faculty_like();
//! let cfg = ComposerConfig { max_generations: 20, seed: 1, ..ComposerConfig::for_task(TaskType::Regression) };
//! let result = compose(&cfg, &data, &reg)?;
//! let best = &result.best(&cfg).unwrap().pipeline;
//! let (tuned, report) = tune(best, &data, &TuningConfig::new(data.task.default_metric()), &reg)?;
//! assert!(report.score_after >= report.score_before);
//! let fitted = tuned.fit(&data, 1, &reg)?;
//! let predictions = fitted.predict(&data)?;
//! assert_eq!(predictions.len(), data.rows());
//! # Ok(())
//! # }
//! ```

pub mod composer;
pub mod dataio;
pub mod fixtures;
pub mod frame;
pub mod matrix;
pub mod operations;
pub mod persist;
pub mod pipeline;
pub mod seed;
pub mod sensitivity;
pub mod tuner;

pub use composer::{compose, ComposeResult, ComposerConfig, Individual, Objective, ParetoFront};
pub use dataio::{Dataset, Metric, MetricValue, PredictionTable, TaskType};
pub use matrix::Matrix;
pub use operations::{OperationSpec, Registry};
pub use pipeline::{FittedPipeline, MergePolicy, Node, Pipeline, StructureClass};
