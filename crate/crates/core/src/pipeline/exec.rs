//! Fitting and prediction. Nodes run in topological order; each node's
//! input is assembled from its parents' outputs (and the raw input,
//! depending on its merge policy) aligned by row id.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::validate::{check_graph, validate, ValidationRules};
use super::{Node, Pipeline, PipelineError};
use crate::dataio::{Dataset, PredictionTable, TaskType};
use crate::frame::{intersect_rows, DataShape, Frame};
use crate::matrix::Matrix;
use crate::operations::{
    fit_builtin, prediction_width, Builtin, FitContext, FittedOperation, LearnedState, OpOutput, OperationError,
    Registry, Stage, PROBABILITY_CLIP,
};
use crate::seed;

/// What a fitted pipeline was trained on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitMeta {
    pub task: TaskType,
    /// Number of classes for classification, 0 otherwise.
    pub n_classes: usize,
    pub input_width: usize,
}

/// A pipeline together with the fitted state of every node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedPipeline {
    pipeline: Pipeline,
    states: BTreeMap<usize, FittedOperation>,
    meta: FitMeta,
}

impl Pipeline {
    /// Fits every node in topological order.
    pub fn fit(&self, data: &Dataset, seed: u64, registry: &Registry) -> Result<FittedPipeline, PipelineError> {
        let order = self.checked_order(data, registry)?;
        self.fit_in_order(data, seed, registry, &order)
    }

    /// Like [`Pipeline::fit`] with a caller-chosen topological order.
    pub fn fit_in_order(
        &self,
        data: &Dataset,
        seed: u64,
        registry: &Registry,
        order: &[usize],
    ) -> Result<FittedPipeline, PipelineError> {
        self.checked_order(data, registry)?;
        if !self.is_topological(order) {
            return Err(PipelineError::DataShape("fitting order is not a topological order".into()));
        }
        let meta = FitMeta {
            task: data.task,
            n_classes: if data.task == TaskType::Classification { data.n_classes() } else { 0 },
            input_width: raw_width(data),
        };
        self.fit_frame(registry, &Frame::from_dataset(data, true), meta, seed, order)
    }

    fn checked_order(&self, data: &Dataset, registry: &Registry) -> Result<Vec<usize>, PipelineError> {
        if data.features.rows() != data.target.len() {
            return Err(PipelineError::DataShape(format!(
                "{} feature rows but {} targets",
                data.features.rows(),
                data.target.len()
            )));
        }
        if data.rows() == 0 {
            return Err(PipelineError::DataShape("no rows to fit on".into()));
        }
        validate(self, registry, data.task, &ValidationRules::unbounded()).map_err(PipelineError::Invalid)?;
        Ok(self.topological_order().expect("validated"))
    }

    fn is_topological(&self, order: &[usize]) -> bool {
        let mut pos = BTreeMap::new();
        for (i, id) in order.iter().enumerate() {
            pos.insert(*id, i);
        }
        pos.len() == self.len()
            && self.nodes().iter().all(|n| {
                pos.get(&n.id).is_some_and(|&i| n.parent_ids.iter().all(|p| pos.get(p).is_some_and(|&j| j < i)))
            })
    }

    /// Fits on an already assembled raw frame. Node seeds derive from the
    /// run seed and the node's canonical index, so they do not depend on `order`.
    pub(crate) fn fit_frame(
        &self,
        registry: &Registry,
        raw: &Frame,
        meta: FitMeta,
        seed: u64,
        order: &[usize],
    ) -> Result<FittedPipeline, PipelineError> {
        let index = self.canonical_index();
        let ts = meta.task == TaskType::TsForecasting;
        let mut outputs: BTreeMap<usize, Frame> = BTreeMap::new();
        let mut states = BTreeMap::new();
        for &id in order {
            let node = self.node(id).expect("ordered ids exist");
            let input = assemble(node, &outputs, raw, ts);
            let fail = |source| PipelineError::OperationFit { node_id: id, source };
            if input.is_empty() {
                return Err(fail(OperationError::Fit {
                    operation: node.operation_id.clone(),
                    reason: "no rows reach this node".into(),
                }));
            }
            let ctx =
                FitContext { task: meta.task, n_classes: meta.n_classes, seed: seed::mix(seed, index[&id] as u64) };
            let fitted = fit_node(registry, node, &input, &ctx, meta, seed).map_err(fail)?;
            let out = fitted.apply(&input, Stage::Fit).map_err(fail)?;
            outputs.insert(id, to_frame(out, &input, Stage::Fit));
            states.insert(id, fitted);
        }
        Ok(FittedPipeline { pipeline: self.clone(), states, meta })
    }
}

fn raw_width(data: &Dataset) -> usize {
    match data.task {
        TaskType::TsForecasting => 1,
        _ => data.n_features(),
    }
}

fn fit_node(
    registry: &Registry,
    node: &Node,
    input: &Frame,
    ctx: &FitContext,
    meta: FitMeta,
    run_seed: u64,
) -> Result<FittedOperation, OperationError> {
    if let Some(atom) = registry.atomized(&node.operation_id) {
        // The wrapped pipeline is refit on this node's data with the outer run seed.
        let order = atom.inner.topological_order().ok_or_else(|| OperationError::Fit {
            operation: node.operation_id.clone(),
            reason: "inner pipeline is cyclic".into(),
        })?;
        let inner = atom
            .inner
            .fit_frame(&atom.registry, input, meta, run_seed, &order)
            .map_err(|e| OperationError::Fit { operation: node.operation_id.clone(), reason: e.to_string() })?;
        return Ok(FittedOperation {
            operation_id: node.operation_id.clone(),
            state: LearnedState::Atomized(Box::new(inner)),
            input_width: input.width(),
            output_width: prediction_width(meta.n_classes),
        });
    }
    let spec = registry.spec(&node.operation_id).ok_or_else(|| OperationError::Unknown(node.operation_id.clone()))?;
    let builtin =
        Builtin::from_id(&node.operation_id).ok_or_else(|| OperationError::Unknown(node.operation_id.clone()))?;
    fit_builtin(builtin, &spec.merged_params(&node.hyperparams), input, ctx)
}

/// Builds a node's input: parents in list order, then the raw features if
/// the merge policy asks for them, restricted to the rows all parts share.
fn assemble(node: &Node, outputs: &BTreeMap<usize, Frame>, raw: &Frame, ts: bool) -> Frame {
    if node.is_primary() {
        return raw.clone();
    }
    let mut parts: Vec<&Frame> = node.parent_ids.iter().map(|p| &outputs[p]).collect();
    if node.takes_raw() && !ts {
        parts.push(raw);
    }
    if parts.len() == 1 {
        return parts[0].clone();
    }
    let rows: Vec<&[usize]> = parts.iter().map(|f| f.rows.as_slice()).collect();
    let positions = intersect_rows(&rows);
    let selected: Vec<Frame> = parts.iter().zip(&positions).map(|(f, pos)| f.select(pos)).collect();
    let blocks: Vec<&Matrix> = selected.iter().map(|f| &f.features).collect();
    Frame {
        rows: selected[0].rows.clone(),
        features: Matrix::hstack(&blocks),
        target: selected[0].target.clone(),
        shape: DataShape::Table,
    }
}

/// Downstream representation of an operation's output. Model outputs
/// become predicted values, or clipped class probabilities (only the
/// positive class for binary problems).
fn to_frame(out: OpOutput, input: &Frame, stage: Stage) -> Frame {
    let table = match out {
        OpOutput::Features(f) => return f,
        OpOutput::Predictions(t) => t,
    };
    let features = match &table.probabilities {
        None => Matrix::column_vector(&table.values),
        Some(p) => {
            let clipped = p.map_columns(|_, v| v.clamp(PROBABILITY_CLIP, 1.0 - PROBABILITY_CLIP));
            if p.cols() == 2 {
                clipped.select_columns(&[1])
            } else {
                clipped
            }
        }
    };
    let mut frame = Frame { rows: table.rows, features, target: None, shape: DataShape::Table };
    if frame.rows == input.rows {
        frame.target = input.target.clone();
        return frame;
    }
    // Row sets differ (e.g. a wrapped forecasting pipeline): align targets by id.
    let mut keep = Vec::new();
    let mut target = Vec::new();
    for (pos, r) in frame.rows.iter().enumerate() {
        match input.rows.binary_search(r) {
            Ok(i) => {
                keep.push(pos);
                if let Some(t) = &input.target {
                    target.push(t[i]);
                }
            }
            Err(_) if stage == Stage::Predict => keep.push(pos),
            Err(_) => {}
        }
    }
    let mut frame = frame.select(&keep);
    if input.target.is_some() && stage == Stage::Fit {
        frame.target = Some(target);
    }
    frame
}

impl FittedPipeline {
    pub fn pipeline(&self) -> &Pipeline {
        &self.pipeline
    }

    pub fn meta(&self) -> FitMeta {
        self.meta
    }

    pub fn task(&self) -> TaskType {
        self.meta.task
    }

    pub fn n_classes(&self) -> usize {
        self.meta.n_classes
    }

    pub fn state(&self, node_id: usize) -> Option<&FittedOperation> {
        self.states.get(&node_id)
    }

    pub fn states(&self) -> &BTreeMap<usize, FittedOperation> {
        &self.states
    }

    /// Reassembles a fitted pipeline from parts, checking that every node has a state.
    pub fn from_parts(
        pipeline: Pipeline,
        states: BTreeMap<usize, FittedOperation>,
        meta: FitMeta,
    ) -> Result<Self, PipelineError> {
        check_graph(&pipeline).map_err(PipelineError::Invalid)?;
        for n in pipeline.nodes() {
            match states.get(&n.id) {
                Some(s) if s.operation_id == n.operation_id => {}
                _ => {
                    return Err(PipelineError::DataShape(format!(
                        "no fitted state for node {} ({})",
                        n.id, n.operation_id
                    )))
                }
            }
        }
        if states.len() != pipeline.len() {
            return Err(PipelineError::DataShape("fitted states reference unknown nodes".into()));
        }
        Ok(Self { pipeline, states, meta })
    }

    /// Predictions for a dataset. Tabular tasks yield one row per input row;
    /// forecasting yields `forecast_horizon` (default 1) steps after the series.
    pub fn predict(&self, data: &Dataset) -> Result<PredictionTable, PipelineError> {
        if data.task == TaskType::TsForecasting {
            let horizon = data.forecast_horizon.unwrap_or(1);
            let values = self.forecast(&data.target, horizon)?;
            let n = data.rows();
            return Ok(PredictionTable { rows: (n..n + horizon).collect(), values, probabilities: None });
        }
        if data.n_features() != self.meta.input_width {
            return Err(PipelineError::SchemaMismatch { expected: self.meta.input_width, found: data.n_features() });
        }
        self.predict_frame(&Frame::from_dataset(data, false))
    }

    /// Runs the fitted graph on a raw frame.
    pub fn predict_frame(&self, raw: &Frame) -> Result<PredictionTable, PipelineError> {
        if raw.width() != self.meta.input_width {
            return Err(PipelineError::SchemaMismatch { expected: self.meta.input_width, found: raw.width() });
        }
        let ts = self.meta.task == TaskType::TsForecasting;
        let sink = self.pipeline.final_node_id().expect("fitted pipelines are valid");
        let order = self.pipeline.topological_order().expect("fitted pipelines are valid");
        let mut outputs: BTreeMap<usize, Frame> = BTreeMap::new();
        for id in order {
            let node = self.pipeline.node(id).expect("ordered ids exist");
            let input = assemble(node, &outputs, raw, ts);
            let out = self.states[&id]
                .apply(&input, Stage::Predict)
                .map_err(|source| PipelineError::OperationPredict { node_id: id, source })?;
            if id == sink {
                return match out {
                    OpOutput::Predictions(t) => Ok(t),
                    OpOutput::Features(_) => Err(PipelineError::OperationPredict {
                        node_id: id,
                        source: OperationError::Fit {
                            operation: node.operation_id.clone(),
                            reason: "sink emitted features".into(),
                        },
                    }),
                };
            }
            outputs.insert(id, to_frame(out, &input, Stage::Predict));
        }
        unreachable!("the sink is part of the topological order")
    }

    /// Number of trailing observations needed to produce the next forecast.
    pub fn lookback(&self) -> usize {
        let order = self.pipeline.topological_order().expect("fitted pipelines are valid");
        let mut need: BTreeMap<usize, usize> = BTreeMap::new();
        for id in order {
            let node = self.pipeline.node(id).expect("ordered ids exist");
            let before = node.parent_ids.iter().map(|p| need[p]).max().unwrap_or(0);
            let own = match &self.states[&id].state {
                LearnedState::Lagged { window } => *window,
                LearnedState::MovingAverage { window } => window.saturating_sub(1),
                LearnedState::Atomized(inner) => inner.lookback(),
                _ => 0,
            };
            need.insert(id, before + own);
        }
        need.values().copied().max().unwrap_or(0).max(1)
    }

    /// Recursive multi-step forecast: each predicted value is appended to the
    /// history before predicting the next step.
    pub fn forecast(&self, history: &[f64], horizon: usize) -> Result<Vec<f64>, PipelineError> {
        if self.meta.task != TaskType::TsForecasting {
            return Err(PipelineError::DataShape("forecasting requires a time-series pipeline".into()));
        }
        let lookback = self.lookback();
        if history.len() < lookback {
            return Err(PipelineError::DataShape(format!(
                "history of {} points is shorter than the required {lookback}",
                history.len()
            )));
        }
        let mut context: Vec<f64> = history[history.len() - lookback..].to_vec();
        let mut out = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let window = &context[context.len() - lookback..];
            let table = self.predict_frame(&Frame::series(window))?;
            let next = match table.rows.binary_search(&lookback) {
                Ok(pos) => table.values[pos],
                Err(_) => return Err(PipelineError::DataShape("pipeline produced no forecast row".into())),
            };
            out.push(next);
            context.push(next);
        }
        Ok(out)
    }
}
