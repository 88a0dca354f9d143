//! Random pipeline growth, backward from a sink model.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataio::TaskType;
use crate::frame::DataShape;
use crate::operations::Registry;
use crate::pipeline::{Node, Pipeline, StructureClass};

#[derive(Debug, Clone)]
pub(crate) struct OpInfo {
    pub id: String,
    pub model: bool,
    pub input: DataShape,
    pub output: DataShape,
    pub raw_only: bool,
}

/// Operations usable for one task, with the shape facts growth needs.
#[derive(Debug, Clone)]
pub(crate) struct Catalog {
    pub ops: Vec<OpInfo>,
    pub raw: DataShape,
    pub structure: StructureClass,
}

impl Catalog {
    pub fn new(registry: &Registry, task: TaskType, structure: StructureClass) -> Self {
        let ops = registry
            .task_ops(task)
            .into_iter()
            .filter_map(|s| {
                let (input, output) = registry.io_shapes(&s.operation_id)?;
                Some(OpInfo {
                    id: s.operation_id.clone(),
                    model: s.kind.produces_predictions(),
                    input,
                    output,
                    raw_only: registry.requires_raw_input(&s.operation_id),
                })
            })
            .collect();
        let raw = if task == TaskType::TsForecasting { DataShape::Series } else { DataShape::Table };
        Self { ops, raw, structure }
    }

    pub fn info(&self, id: &str) -> Option<&OpInfo> {
        self.ops.iter().find(|o| o.id == id)
    }

    pub fn has_sink_candidate(&self) -> bool {
        self.ops.iter().any(|o| o.model)
    }

    /// Grows a subtree of the given depth whose root emits `need_out` (if
    /// set) and is a model if `model_root`. Nodes are appended to `nodes`
    /// with ids from `next_id`; returns the root id.
    pub fn grow<R: Rng>(
        &self,
        rng: &mut R,
        depth: usize,
        model_root: bool,
        need_out: Option<DataShape>,
        next_id: &mut usize,
        nodes: &mut Vec<Node>,
    ) -> Option<usize> {
        let leaf = depth <= 1;
        let candidates: Vec<&OpInfo> = self
            .ops
            .iter()
            .filter(|o| !model_root || o.model)
            .filter(|o| need_out.map_or(true, |s| o.output == s))
            .filter(|o| !leaf || o.input == self.raw)
            .collect();
        let op = *candidates.choose(rng)?;
        let id = *next_id;
        *next_id += 1;
        let mut node = Node::new(id, op.id.clone());
        if !leaf && !op.raw_only {
            let parents = if self.structure == StructureClass::Linear || op.input == DataShape::Series {
                1
            } else if rng.gen_bool(0.35) {
                2
            } else {
                1
            };
            for k in 0..parents {
                let d = if k == 0 || self.structure == StructureClass::Ensemble {
                    depth - 1
                } else {
                    rng.gen_range(1..depth)
                };
                let p = self.grow(rng, d, false, Some(op.input), next_id, nodes)?;
                node.parent_ids.push(p);
            }
        }
        nodes.push(node);
        Some(id)
    }

    /// A random pipeline of depth drawn uniformly from `1..=max_depth`.
    pub fn random_pipeline<R: Rng>(&self, rng: &mut R, max_depth: usize) -> Option<Pipeline> {
        let depth = rng.gen_range(1..=max_depth.max(1));
        let mut nodes = Vec::new();
        self.grow(rng, depth, true, None, &mut 0, &mut nodes)?;
        Some(Pipeline::new(nodes))
    }
}
