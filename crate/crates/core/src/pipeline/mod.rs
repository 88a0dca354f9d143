//! Pipeline graphs: nodes, canonical forms, validation and execution.

mod edit;
mod exec;
mod validate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::operations::{HyperParams, HyperValue, OperationError};

pub use edit::EditError;
pub use exec::{FitMeta, FittedPipeline};
pub(crate) use validate::check_graph;
pub use validate::{validate, ValidationResult, ValidationRules, Violation};

/// How a secondary node combines its parents' outputs with the raw input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum MergePolicy {
    /// Parents' outputs only.
    Sequential,
    /// Parents' outputs followed by the raw features, always.
    Direct,
    /// Raw features appended only when the node's `enrich_raw` flag is set.
    #[default]
    Adaptive,
}

impl MergePolicy {
    pub const ALL: [MergePolicy; 3] = [MergePolicy::Sequential, MergePolicy::Direct, MergePolicy::Adaptive];

    pub fn as_str(self) -> &'static str {
        match self {
            MergePolicy::Sequential => "sequential",
            MergePolicy::Direct => "direct",
            MergePolicy::Adaptive => "adaptive",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum StructureClass {
    /// Path graph.
    Linear,
    /// Every root-to-sink path has the same length.
    Ensemble,
    /// Any valid single-sink DAG.
    #[default]
    Composite,
}

impl StructureClass {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(Self::Linear),
            "ensemble" => Some(Self::Ensemble),
            "composite" => Some(Self::Composite),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Linear => "linear",
            Self::Ensemble => "ensemble",
            Self::Composite => "composite",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub operation_id: String,
    /// Explicitly set values only; defaults come from the registry.
    #[serde(default)]
    pub hyperparams: HyperParams,
    #[serde(default)]
    pub parent_ids: Vec<usize>,
    #[serde(default)]
    pub merge_policy: MergePolicy,
    #[serde(default)]
    pub enrich_raw: bool,
}

impl Node {
    pub fn new(id: usize, operation_id: impl Into<String>) -> Self {
        Self {
            id,
            operation_id: operation_id.into(),
            hyperparams: BTreeMap::new(),
            parent_ids: Vec::new(),
            merge_policy: MergePolicy::Adaptive,
            enrich_raw: false,
        }
    }

    pub fn with_parents(mut self, parents: impl Into<Vec<usize>>) -> Self {
        self.parent_ids = parents.into();
        self
    }

    pub fn with_param(mut self, name: impl Into<String>, value: HyperValue) -> Self {
        self.hyperparams.insert(name.into(), value);
        self
    }

    pub fn with_policy(mut self, policy: MergePolicy) -> Self {
        self.merge_policy = policy;
        self
    }

    pub fn with_enrichment(mut self, enrich: bool) -> Self {
        self.enrich_raw = enrich;
        self
    }

    pub fn is_primary(&self) -> bool {
        self.parent_ids.is_empty()
    }

    /// Whether raw features are appended to this node's input.
    pub fn takes_raw(&self) -> bool {
        !self.is_primary()
            && match self.merge_policy {
                MergePolicy::Sequential => false,
                MergePolicy::Direct => true,
                MergePolicy::Adaptive => self.enrich_raw,
            }
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("invalid pipeline: {0}")]
    Invalid(Violation),
    #[error("node {node_id} failed to fit")]
    OperationFit {
        node_id: usize,
        #[source]
        source: OperationError,
    },
    #[error("node {node_id} failed to predict")]
    OperationPredict {
        node_id: usize,
        #[source]
        source: OperationError,
    },
    #[error("data shape error: {0}")]
    DataShape(String),
    #[error("schema mismatch: expected {expected} feature columns, found {found}")]
    SchemaMismatch { expected: usize, found: usize },
}

/// A DAG of operations with a single sink. Node ids are arbitrary; the
/// canonical (post-order) numbering is derived on demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pipeline {
    nodes: Vec<Node>,
}

impl Pipeline {
    pub fn new(nodes: Vec<Node>) -> Self {
        Self { nodes }
    }

    pub fn single(operation_id: &str) -> Self {
        Self::new(vec![Node::new(0, operation_id)])
    }

    /// A path graph `ops[0] -> ops[1] -> ...` with ids 0, 1, ...
    pub fn chain(ops: &[&str]) -> Self {
        Self::new(
            ops.iter()
                .enumerate()
                .map(|(i, op)| {
                    let n = Node::new(i, *op);
                    if i == 0 {
                        n
                    } else {
                        n.with_parents(vec![i - 1])
                    }
                })
                .collect(),
        )
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub(crate) fn nodes_mut(&mut self) -> &mut Vec<Node> {
        &mut self.nodes
    }

    pub fn into_nodes(self) -> Vec<Node> {
        self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node(&self, id: usize) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub(crate) fn node_mut(&mut self, id: usize) -> Option<&mut Node> {
        self.nodes.iter_mut().find(|n| n.id == id)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.nodes.iter().map(|n| n.id).collect()
    }

    pub fn next_id(&self) -> usize {
        self.nodes.iter().map(|n| n.id + 1).max().unwrap_or(0)
    }

    /// Ids of nodes listing `id` as a parent, ascending.
    pub fn children(&self, id: usize) -> Vec<usize> {
        let mut c: Vec<usize> = self.nodes.iter().filter(|n| n.parent_ids.contains(&id)).map(|n| n.id).collect();
        c.sort_unstable();
        c
    }

    /// Nodes without children.
    pub fn sinks(&self) -> Vec<usize> {
        let with_children: BTreeSet<usize> = self.nodes.iter().flat_map(|n| n.parent_ids.iter().copied()).collect();
        let mut s: Vec<usize> = self.nodes.iter().map(|n| n.id).filter(|id| !with_children.contains(id)).collect();
        s.sort_unstable();
        s
    }

    /// The unique sink, if there is exactly one.
    pub fn final_node_id(&self) -> Option<usize> {
        match self.sinks().as_slice() {
            [only] => Some(*only),
            _ => None,
        }
    }

    /// Kahn's algorithm, smallest ready id first; `None` on cycles or dangling parents.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let ids: BTreeSet<usize> = self.nodes.iter().map(|n| n.id).collect();
        let mut indegree: BTreeMap<usize, usize> = BTreeMap::new();
        for n in &self.nodes {
            if n.parent_ids.iter().any(|p| !ids.contains(p)) {
                return None;
            }
            *indegree.entry(n.id).or_default() += n.parent_ids.len();
        }
        let mut ready: BTreeSet<usize> = indegree.iter().filter(|(_, d)| **d == 0).map(|(id, _)| *id).collect();
        let mut order = Vec::with_capacity(self.nodes.len());
        while let Some(id) = ready.pop_first() {
            order.push(id);
            for n in &self.nodes {
                let hits = n.parent_ids.iter().filter(|p| **p == id).count();
                if hits > 0 {
                    let d = indegree.get_mut(&n.id).expect("known node");
                    *d -= hits;
                    if *d == 0 {
                        ready.insert(n.id);
                    }
                }
            }
        }
        (order.len() == indegree.len()).then_some(order)
    }

    /// Longest root-to-sink path counted in nodes. Assumes an acyclic graph;
    /// returns 0 for an empty or cyclic one.
    pub fn depth(&self) -> usize {
        let Some(order) = self.topological_order() else { return 0 };
        let mut level: BTreeMap<usize, usize> = BTreeMap::new();
        for id in order {
            let node = self.node(id).expect("ordered ids exist");
            let d = node.parent_ids.iter().map(|p| level[p]).max().unwrap_or(0) + 1;
            level.insert(id, d);
        }
        level.values().copied().max().unwrap_or(0)
    }

    /// Post-order DFS from the sink over ordered parent lists. This is the
    /// dense numbering used by signatures and serialization. Nodes that do
    /// not reach the sink are appended in id order.
    pub fn canonical_order(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.nodes.len());
        let mut seen = BTreeSet::new();
        let roots: Vec<usize> = match self.final_node_id() {
            Some(s) => vec![s],
            None => self.sinks(),
        };
        for r in roots {
            self.post_order(r, &mut seen, &mut BTreeSet::new(), &mut out);
        }
        let mut rest: Vec<usize> = self.ids().into_iter().filter(|id| !seen.contains(id)).collect();
        rest.sort_unstable();
        out.extend(rest);
        out
    }

    fn post_order(&self, id: usize, seen: &mut BTreeSet<usize>, stack: &mut BTreeSet<usize>, out: &mut Vec<usize>) {
        if seen.contains(&id) || !stack.insert(id) {
            return;
        }
        if let Some(node) = self.node(id) {
            for p in &node.parent_ids {
                self.post_order(*p, seen, stack, out);
            }
            seen.insert(id);
            out.push(id);
        }
        stack.remove(&id);
    }

    /// Map from node id to its canonical dense index.
    pub fn canonical_index(&self) -> BTreeMap<usize, usize> {
        self.canonical_order().into_iter().enumerate().map(|(i, id)| (id, i)).collect()
    }

    /// Copy with ids replaced by canonical indices and nodes stored in that order.
    pub fn relabeled(&self) -> Pipeline {
        let index = self.canonical_index();
        let nodes = self
            .canonical_order()
            .into_iter()
            .map(|id| {
                let n = self.node(id).expect("ordered ids exist");
                Node {
                    id: index[&id],
                    parent_ids: n.parent_ids.iter().map(|p| index.get(p).copied().unwrap_or(usize::MAX)).collect(),
                    ..n.clone()
                }
            })
            .collect();
        Pipeline { nodes }
    }

    /// Post-order text form used for signatures.
    pub fn canonical_text(&self, with_params: bool) -> String {
        let index = self.canonical_index();
        let mut text = String::new();
        for id in self.canonical_order() {
            let n = self.node(id).expect("ordered ids exist");
            text.push_str(&n.operation_id);
            if with_params {
                text.push('{');
                for (k, v) in &n.hyperparams {
                    text.push_str(k);
                    text.push('=');
                    text.push_str(&v.canonical());
                    text.push(';');
                }
                text.push('}');
            }
            if !n.is_primary() {
                text.push('<');
                let parents: Vec<String> =
                    n.parent_ids.iter().map(|p| index.get(p).map_or("?".into(), |i| i.to_string())).collect();
                text.push_str(&parents.join(","));
                text.push('|');
                text.push_str(n.merge_policy.as_str());
                if n.merge_policy == MergePolicy::Adaptive && n.enrich_raw {
                    text.push_str("+raw");
                }
                text.push('>');
            }
            text.push('\n');
        }
        text
    }

    /// Relabeling-invariant hash of structure, operations and explicit hyperparameters.
    pub fn canonical_signature(&self) -> String {
        hex_digest(&self.canonical_text(true))
    }

    /// Like [`Pipeline::canonical_signature`] but ignoring hyperparameters.
    pub fn topology_signature(&self) -> String {
        hex_digest(&self.canonical_text(false))
    }

    /// Operation id -> number of nodes using it.
    pub fn operation_counts(&self) -> BTreeMap<String, usize> {
        let mut counts = BTreeMap::new();
        for n in &self.nodes {
            *counts.entry(n.operation_id.clone()).or_default() += 1;
        }
        counts
    }
}

fn hex_digest(text: &str) -> String {
    Sha256::digest(text.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Pipeline {
        Pipeline::new(vec![
            Node::new(0, "standard_scaling"),
            Node::new(1, "ridge").with_parents(vec![0]),
            Node::new(2, "knn").with_parents(vec![0]),
            Node::new(3, "ridge").with_parents(vec![1, 2]),
        ])
    }

    #[test]
    fn depth_examples() {
        assert_eq!(Pipeline::single("ols").depth(), 1);
        assert_eq!(Pipeline::chain(&["standard_scaling", "pca_topk", "ridge"]).depth(), 3);
        assert_eq!(diamond().depth(), 3);
    }

    #[test]
    fn signature_ignores_relabeling() {
        let a = diamond();
        let b = Pipeline::new(vec![
            Node::new(10, "ridge").with_parents(vec![7, 5]),
            Node::new(7, "ridge").with_parents(vec![42]),
            Node::new(42, "standard_scaling"),
            Node::new(5, "knn").with_parents(vec![42]),
        ]);
        assert_eq!(a.canonical_signature(), b.canonical_signature());
        assert_eq!(a.relabeled(), b.relabeled());
    }

    #[test]
    fn signature_sees_params_and_parent_order() {
        let a = diamond();
        let mut b = diamond();
        b.node_mut(1).unwrap().hyperparams.insert("alpha".into(), HyperValue::Float(2.0));
        assert_ne!(a.canonical_signature(), b.canonical_signature());
        assert_eq!(a.topology_signature(), b.topology_signature());
        let mut c = diamond();
        c.node_mut(3).unwrap().parent_ids = vec![2, 1];
        assert_ne!(a.canonical_signature(), c.canonical_signature());
    }

    #[test]
    fn sinks_and_topology() {
        let p = diamond();
        assert_eq!(p.final_node_id(), Some(3));
        assert_eq!(p.topological_order(), Some(vec![0, 1, 2, 3]));
        assert_eq!(p.children(0), vec![1, 2]);
        let cyclic = Pipeline::new(vec![
            Node::new(0, "ridge").with_parents(vec![1]),
            Node::new(1, "ridge").with_parents(vec![0]),
        ]);
        assert_eq!(cyclic.topological_order(), None);
        assert_eq!(cyclic.depth(), 0);
    }
}
