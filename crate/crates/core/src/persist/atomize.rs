//! Wrapping pipelines as single reusable operations.

use std::collections::{BTreeMap, BTreeSet};

use crate::dataio::{Dataset, PredictionTable, TaskType};
use crate::frame::DataShape;
use crate::operations::{OperationKind, OperationSpec, Registry};
use crate::pipeline::{FittedPipeline, Pipeline, PipelineError};

/// A pipeline exposed as a model operation. It always consumes raw input,
/// so it may only sit on primary nodes.
#[derive(Debug, Clone)]
pub struct AtomizedOperation {
    pub spec: OperationSpec,
    pub inner: Pipeline,
    /// Operations the inner pipeline refers to.
    pub registry: Registry,
    pub fitted: Option<FittedPipeline>,
    pub task: TaskType,
}

impl AtomizedOperation {
    pub fn new(inner: Pipeline, registry: Registry, task: TaskType, fitted: Option<FittedPipeline>) -> Self {
        let id = format!("atomized_{}", &inner.canonical_signature()[..12]);
        let spec = OperationSpec {
            operation_id: id,
            display_name: format!("Atomized({} nodes)", inner.len()),
            kind: OperationKind::Model,
            tags: BTreeSet::from(["atomized".to_string()]),
            tasks: BTreeSet::from([task]),
            hyperparam_space: BTreeMap::new(),
            defaults: BTreeMap::new(),
        };
        Self { spec, inner, registry, fitted, task }
    }

    pub fn id(&self) -> &str {
        &self.spec.operation_id
    }

    pub fn input_shape(&self) -> DataShape {
        if self.task == TaskType::TsForecasting {
            DataShape::Series
        } else {
            DataShape::Table
        }
    }

    /// Node count of the wrapped graph, expanding nested wrappers.
    pub fn inner_node_count(&self) -> usize {
        crate::composer::weighted_nodes(&self.inner, &self.registry)
    }

    /// Depth of the wrapped graph, expanding nested wrappers.
    pub fn inner_depth(&self) -> usize {
        crate::composer::weighted_depth(&self.inner, &self.registry)
    }

    /// Predictions of the wrapped fitted pipeline.
    pub fn predict(&self, data: &Dataset) -> Result<PredictionTable, PipelineError> {
        match &self.fitted {
            Some(f) => f.predict(data),
            None => Err(PipelineError::DataShape(format!("{} has not been fitted", self.id()))),
        }
    }
}

/// Wraps a fitted pipeline as an operation.
pub fn atomize(fitted: &FittedPipeline, registry: &Registry) -> AtomizedOperation {
    AtomizedOperation::new(fitted.pipeline().clone(), registry.clone(), fitted.task(), Some(fitted.clone()))
}
