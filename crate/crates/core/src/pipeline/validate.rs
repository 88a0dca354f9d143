//! Structural and semantic checks. Violations are data, not errors.

use std::collections::{BTreeMap, BTreeSet};

use super::{Pipeline, StructureClass};
use crate::dataio::TaskType;
use crate::frame::DataShape;
use crate::operations::Registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValidationRules {
    pub structure: StructureClass,
    pub max_depth: usize,
    pub max_nodes: usize,
}

impl Default for ValidationRules {
    fn default() -> Self {
        Self { structure: StructureClass::Composite, max_depth: 5, max_nodes: 15 }
    }
}

impl ValidationRules {
    /// Composite graphs without size limits.
    pub fn unbounded() -> Self {
        Self { structure: StructureClass::Composite, max_depth: usize::MAX, max_nodes: usize::MAX }
    }
}

/// First rule a candidate graph breaks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    EmptyPipeline,
    DuplicateNodeId(usize),
    DanglingParent { node: usize, parent: usize },
    DuplicateParent { node: usize, parent: usize },
    CycleDetected,
    IsolatedNode(usize),
    MultipleSinks(Vec<usize>),
    MaxNodesExceeded { nodes: usize, limit: usize },
    MaxDepthExceeded { depth: usize, limit: usize },
    NotPathGraph(usize),
    UnequalPathLengths,
    UnknownOperation { node: usize, operation: String },
    TaskIncompatibleOperation { node: usize, operation: String },
    InvalidHyperparameter { node: usize, name: String },
    SinkNotModel(usize),
    RawInputOnly(usize),
    InputShapeMismatch(usize),
}

impl Violation {
    /// Stable rule identifier.
    pub fn rule_id(&self) -> &'static str {
        match self {
            Violation::EmptyPipeline => "empty_pipeline",
            Violation::DuplicateNodeId(_) => "duplicate_node_id",
            Violation::DanglingParent { .. } => "dangling_parent",
            Violation::DuplicateParent { .. } => "duplicate_parent",
            Violation::CycleDetected => "cycle_detected",
            Violation::IsolatedNode(_) => "isolated_node",
            Violation::MultipleSinks(_) => "multiple_sinks",
            Violation::MaxNodesExceeded { .. } => "max_nodes_exceeded",
            Violation::MaxDepthExceeded { .. } => "max_depth_exceeded",
            Violation::NotPathGraph(_) => "not_path_graph",
            Violation::UnequalPathLengths => "unequal_path_lengths",
            Violation::UnknownOperation { .. } => "unknown_operation",
            Violation::TaskIncompatibleOperation { .. } => "task_incompatible_operation",
            Violation::InvalidHyperparameter { .. } => "invalid_hyperparameter",
            Violation::SinkNotModel(_) => "sink_not_model",
            Violation::RawInputOnly(_) => "raw_input_only",
            Violation::InputShapeMismatch(_) => "input_shape_mismatch",
        }
    }
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let id = self.rule_id();
        match self {
            Violation::EmptyPipeline | Violation::CycleDetected | Violation::UnequalPathLengths => f.write_str(id),
            Violation::DuplicateNodeId(n)
            | Violation::IsolatedNode(n)
            | Violation::NotPathGraph(n)
            | Violation::SinkNotModel(n)
            | Violation::RawInputOnly(n)
            | Violation::InputShapeMismatch(n) => write!(f, "{id} (node {n})"),
            Violation::DanglingParent { node, parent } | Violation::DuplicateParent { node, parent } => {
                write!(f, "{id} (node {node}, parent {parent})")
            }
            Violation::MultipleSinks(s) => write!(f, "{id} ({s:?})"),
            Violation::MaxNodesExceeded { nodes, limit } => write!(f, "{id} ({nodes} > {limit})"),
            Violation::MaxDepthExceeded { depth, limit } => write!(f, "{id} ({depth} > {limit})"),
            Violation::UnknownOperation { node, operation }
            | Violation::TaskIncompatibleOperation { node, operation } => {
                write!(f, "{id} (node {node}: {operation})")
            }
            Violation::InvalidHyperparameter { node, name } => write!(f, "{id} (node {node}: {name})"),
        }
    }
}

impl std::error::Error for Violation {}

pub type ValidationResult = Result<(), Violation>;

/// Checks graph invariants, size limits, structure class and operation
/// compatibility, in that order. Pure: the pipeline is not modified.
pub fn validate(pipeline: &Pipeline, registry: &Registry, task: TaskType, rules: &ValidationRules) -> ValidationResult {
    check_graph(pipeline)?;
    let nodes = pipeline.len();
    if nodes > rules.max_nodes {
        return Err(Violation::MaxNodesExceeded { nodes, limit: rules.max_nodes });
    }
    let depth = pipeline.depth();
    if depth > rules.max_depth {
        return Err(Violation::MaxDepthExceeded { depth, limit: rules.max_depth });
    }
    check_structure(pipeline, rules.structure)?;
    check_operations(pipeline, registry, task)
}

/// Graph-level invariants only: non-empty, unique ids, acyclic, single sink, no isolated nodes.
pub(crate) fn check_graph(pipeline: &Pipeline) -> ValidationResult {
    if pipeline.is_empty() {
        return Err(Violation::EmptyPipeline);
    }
    let mut ids = BTreeSet::new();
    for n in pipeline.nodes() {
        if !ids.insert(n.id) {
            return Err(Violation::DuplicateNodeId(n.id));
        }
    }
    for n in pipeline.nodes() {
        let mut seen = BTreeSet::new();
        for &p in &n.parent_ids {
            if !ids.contains(&p) {
                return Err(Violation::DanglingParent { node: n.id, parent: p });
            }
            if !seen.insert(p) {
                return Err(Violation::DuplicateParent { node: n.id, parent: p });
            }
        }
    }
    if pipeline.topological_order().is_none() {
        return Err(Violation::CycleDetected);
    }
    if pipeline.len() > 1 {
        for n in pipeline.nodes() {
            if n.is_primary() && pipeline.children(n.id).is_empty() {
                return Err(Violation::IsolatedNode(n.id));
            }
        }
    }
    let sinks = pipeline.sinks();
    if sinks.len() != 1 {
        return Err(Violation::MultipleSinks(sinks));
    }
    Ok(())
}

fn check_structure(pipeline: &Pipeline, class: StructureClass) -> ValidationResult {
    match class {
        StructureClass::Composite => Ok(()),
        StructureClass::Linear => {
            for n in pipeline.nodes() {
                if n.parent_ids.len() > 1 || pipeline.children(n.id).len() > 1 {
                    return Err(Violation::NotPathGraph(n.id));
                }
            }
            Ok(())
        }
        StructureClass::Ensemble => {
            // Every path is equally long iff each node's shortest and longest
            // distance to the sink agree and all roots sit at one distance.
            let order = pipeline.topological_order().expect("acyclic");
            let mut span: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
            for &id in order.iter().rev() {
                let kids = pipeline.children(id);
                let s = if kids.is_empty() {
                    (0, 0)
                } else {
                    let lo = kids.iter().map(|k| span[k].0).min().expect("non-empty") + 1;
                    let hi = kids.iter().map(|k| span[k].1).max().expect("non-empty") + 1;
                    (lo, hi)
                };
                span.insert(id, s);
            }
            let mut root_len = None;
            for n in pipeline.nodes() {
                let (lo, hi) = span[&n.id];
                if lo != hi {
                    return Err(Violation::UnequalPathLengths);
                }
                if n.is_primary() && *root_len.get_or_insert(lo) != lo {
                    return Err(Violation::UnequalPathLengths);
                }
            }
            Ok(())
        }
    }
}

fn check_operations(pipeline: &Pipeline, registry: &Registry, task: TaskType) -> ValidationResult {
    for n in pipeline.nodes() {
        let Some(spec) = registry.spec(&n.operation_id) else {
            return Err(Violation::UnknownOperation { node: n.id, operation: n.operation_id.clone() });
        };
        if !spec.tasks.contains(&task) {
            return Err(Violation::TaskIncompatibleOperation { node: n.id, operation: n.operation_id.clone() });
        }
        for (name, value) in &n.hyperparams {
            if !spec.hyperparam_space.get(name).is_some_and(|d| d.contains(value)) {
                return Err(Violation::InvalidHyperparameter { node: n.id, name: name.clone() });
            }
        }
    }
    let sink = pipeline.final_node_id().expect("checked");
    let sink_op = &pipeline.node(sink).expect("exists").operation_id;
    if !registry.spec(sink_op).expect("checked").kind.produces_predictions() {
        return Err(Violation::SinkNotModel(sink));
    }
    for n in pipeline.nodes() {
        if !n.is_primary() && registry.requires_raw_input(&n.operation_id) {
            return Err(Violation::RawInputOnly(n.id));
        }
    }
    check_shapes(pipeline, registry, task)
}

fn check_shapes(pipeline: &Pipeline, registry: &Registry, task: TaskType) -> ValidationResult {
    let raw = if task == TaskType::TsForecasting { DataShape::Series } else { DataShape::Table };
    let shapes = |id: &str| registry.io_shapes(id).expect("known operation");
    for n in pipeline.nodes() {
        let (input, _) = shapes(&n.operation_id);
        let ok = if n.is_primary() {
            input == raw
        } else {
            let parents_ok =
                n.parent_ids.iter().all(|p| shapes(&pipeline.node(*p).expect("checked").operation_id).1 == input);
            // Series cannot be concatenated, and raw enrichment is only applied to tables.
            let merge_ok = input == DataShape::Table || n.parent_ids.len() == 1;
            parents_ok && merge_ok
        };
        if !ok {
            return Err(Violation::InputShapeMismatch(n.id));
        }
    }
    Ok(())
}
