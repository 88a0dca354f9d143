//! Structural edits. Each returns a new pipeline; callers revalidate.

use std::collections::{BTreeMap, BTreeSet};

use thiserror::Error;

use super::{Node, Pipeline};
use crate::operations::HyperParams;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EditError {
    #[error("no node with id {0}")]
    UnknownNode(usize),
    #[error("the final node cannot be removed")]
    SinkNotRemovable,
}

impl Pipeline {
    fn require(&self, id: usize) -> Result<&Node, EditError> {
        self.node(id).ok_or(EditError::UnknownNode(id))
    }

    /// Removes a node, wiring its parents directly into each of its children
    /// (in the position the node occupied). Children left without parents
    /// become primary nodes.
    pub fn without_node(&self, id: usize) -> Result<Pipeline, EditError> {
        let removed = self.require(id)?.clone();
        if self.final_node_id() == Some(id) {
            return Err(EditError::SinkNotRemovable);
        }
        let nodes = self
            .nodes()
            .iter()
            .filter(|n| n.id != id)
            .map(|n| {
                let mut n = n.clone();
                if n.parent_ids.contains(&id) {
                    let mut parents = Vec::with_capacity(n.parent_ids.len() + removed.parent_ids.len());
                    for &p in &n.parent_ids {
                        let expanded: &[usize] = if p == id { &removed.parent_ids } else { std::slice::from_ref(&p) };
                        for &q in expanded {
                            if !parents.contains(&q) {
                                parents.push(q);
                            }
                        }
                    }
                    n.parent_ids = parents;
                }
                n
            })
            .collect();
        Ok(Pipeline::new(nodes))
    }

    /// Swaps a node's operation, dropping its explicit hyperparameters.
    pub fn with_operation(&self, id: usize, operation_id: &str) -> Result<Pipeline, EditError> {
        self.require(id)?;
        let mut out = self.clone();
        let node = out.node_mut(id).expect("checked");
        node.operation_id = operation_id.to_string();
        node.hyperparams.clear();
        Ok(out)
    }

    pub fn with_hyperparams(&self, id: usize, params: HyperParams) -> Result<Pipeline, EditError> {
        self.require(id)?;
        let mut out = self.clone();
        out.node_mut(id).expect("checked").hyperparams = params;
        Ok(out)
    }

    /// `id` and every node with a path to it.
    pub fn ancestors(&self, id: usize) -> BTreeSet<usize> {
        let mut seen = BTreeSet::new();
        let mut stack = vec![id];
        while let Some(x) = stack.pop() {
            if seen.insert(x) {
                if let Some(n) = self.node(x) {
                    stack.extend(n.parent_ids.iter().copied());
                }
            }
        }
        seen
    }

    /// The sub-pipeline feeding `id`, with `id` as its sink.
    pub fn subtree(&self, id: usize) -> Result<Pipeline, EditError> {
        self.require(id)?;
        let keep = self.ancestors(id);
        Ok(Pipeline::new(self.nodes().iter().filter(|n| keep.contains(&n.id)).cloned().collect()))
    }

    /// Nodes that disappear when the subtree rooted at `id` is cut out:
    /// `id` plus those ancestors that feed nothing outside the cut.
    pub fn exclusive_subtree(&self, id: usize) -> BTreeSet<usize> {
        let candidates = self.ancestors(id);
        let mut cut: BTreeSet<usize> = BTreeSet::from([id]);
        let order = self.topological_order().unwrap_or_default();
        for &x in order.iter().rev() {
            if x == id || !candidates.contains(&x) {
                continue;
            }
            if self.children(x).iter().all(|c| cut.contains(c)) {
                cut.insert(x);
            }
        }
        cut
    }

    /// Replaces the subtree rooted at `id` by `replacement` (whose nodes get
    /// fresh ids). The replacement's sink takes over `id`'s place in its
    /// children's parent lists.
    pub fn replace_subtree(&self, id: usize, replacement: &Pipeline) -> Result<Pipeline, EditError> {
        self.require(id)?;
        let cut = self.exclusive_subtree(id);
        let repl_sink = replacement.final_node_id().ok_or(EditError::UnknownNode(id))?;
        let base = self.next_id().max(id + 1);
        let fresh: BTreeMap<usize, usize> =
            replacement.ids().into_iter().enumerate().map(|(i, old)| (old, base + i)).collect();
        let new_sink = fresh[&repl_sink];
        let mut nodes: Vec<Node> = self
            .nodes()
            .iter()
            .filter(|n| !cut.contains(&n.id))
            .map(|n| {
                let mut n = n.clone();
                for p in n.parent_ids.iter_mut() {
                    if *p == id {
                        *p = new_sink;
                    }
                }
                n
            })
            .collect();
        nodes.extend(replacement.nodes().iter().map(|n| Node {
            id: fresh[&n.id],
            parent_ids: n.parent_ids.iter().map(|p| fresh.get(p).copied().unwrap_or(usize::MAX)).collect(),
            ..n.clone()
        }));
        Ok(Pipeline::new(nodes))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn removal_rewires_parents() {
        let p = Pipeline::chain(&["minmax_scaling", "standard_scaling", "ridge"]);
        let q = p.without_node(1).unwrap();
        assert_eq!(q.node(2).unwrap().parent_ids, vec![0]);
        assert_eq!(p.without_node(2), Err(EditError::SinkNotRemovable));
        let r = p.without_node(0).unwrap();
        assert!(r.node(1).unwrap().is_primary());
    }

    #[test]
    fn subtree_replacement_keeps_single_sink() {
        let p = Pipeline::new(vec![
            Node::new(0, "standard_scaling"),
            Node::new(1, "ridge").with_parents(vec![0]),
            Node::new(2, "knn").with_parents(vec![0]),
            Node::new(3, "ridge").with_parents(vec![1, 2]),
        ]);
        assert_eq!(p.exclusive_subtree(1), BTreeSet::from([1]));
        let q = p.replace_subtree(1, &Pipeline::chain(&["pca_topk", "decision_tree"])).unwrap();
        assert_eq!(q.len(), 5);
        assert_eq!(q.sinks(), vec![3]);
        assert_eq!(q.node(3).unwrap().parent_ids.len(), 2);
        let whole = p.replace_subtree(3, &Pipeline::single("ols")).unwrap();
        assert_eq!(whole.len(), 1);
    }
}
