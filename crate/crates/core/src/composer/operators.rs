//! Crossover and mutation operators and the validated reproduction loop.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::growth::Catalog;
use super::Individual;
use crate::dataio::TaskType;
use crate::operations::{HyperValue, Registry};
use crate::pipeline::{validate, Node, Pipeline, ValidationRules};

/// Validation attempts per offspring before falling back.
pub const MAX_RETRIES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CrossoverType {
    SubtreeExchange,
    OnePoint,
}

impl CrossoverType {
    pub const ALL: [CrossoverType; 2] = [CrossoverType::SubtreeExchange, CrossoverType::OnePoint];
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MutationType {
    AddNode,
    AddSubtree,
    ReplaceSubtree,
    ChangeOperation,
    ChangeHyperparams,
    RemoveNode,
}

impl MutationType {
    pub const EXPLORATION: [MutationType; 3] =
        [MutationType::AddNode, MutationType::AddSubtree, MutationType::ReplaceSubtree];
    pub const EXPLOITATION: [MutationType; 3] =
        [MutationType::ChangeOperation, MutationType::ChangeHyperparams, MutationType::RemoveNode];

    pub fn is_exploration(self) -> bool {
        Self::EXPLORATION.contains(&self)
    }
}

/// Everything the operators need besides the parents.
pub struct OperatorContext<'a> {
    pub(crate) catalog: Catalog,
    pub registry: &'a Registry,
    pub rules: ValidationRules,
    pub task: TaskType,
}

impl<'a> OperatorContext<'a> {
    pub fn new(registry: &'a Registry, task: TaskType, rules: ValidationRules) -> Self {
        Self { catalog: Catalog::new(registry, task, rules.structure), registry, rules, task }
    }

    pub fn is_valid(&self, p: &Pipeline) -> bool {
        validate(p, self.registry, self.task, &self.rules).is_ok()
    }

    /// A random valid pipeline, or `None` after `attempts` failures.
    pub fn random_valid<R: Rng>(&self, rng: &mut R, attempts: usize) -> Option<Pipeline> {
        (0..attempts).find_map(|_| self.catalog.random_pipeline(rng, self.rules.max_depth).filter(|p| self.is_valid(p)))
    }
}

fn pick_node<R: Rng>(p: &Pipeline, rng: &mut R) -> Option<usize> {
    p.ids().choose(rng).copied()
}

/// Nodes reachable from `id` along child edges (excluding `id`).
fn descendants(p: &Pipeline, id: usize) -> BTreeSet<usize> {
    let mut seen = BTreeSet::new();
    let mut stack = p.children(id);
    while let Some(x) = stack.pop() {
        if seen.insert(x) {
            stack.extend(p.children(x));
        }
    }
    seen
}

pub fn crossover<R: Rng>(kind: CrossoverType, a: &Pipeline, b: &Pipeline, rng: &mut R) -> Option<(Pipeline, Pipeline)> {
    match kind {
        CrossoverType::SubtreeExchange => {
            let x = pick_node(a, rng)?;
            let y = pick_node(b, rng)?;
            let c1 = a.replace_subtree(x, &b.subtree(y).ok()?).ok()?;
            let c2 = b.replace_subtree(y, &a.subtree(x).ok()?).ok()?;
            Some((c1, c2))
        }
        CrossoverType::OnePoint => {
            let ea = encode(a);
            let eb = encode(b);
            if ea.is_empty() || eb.is_empty() {
                return None;
            }
            let i = rng.gen_range(1..=ea.len());
            let j = rng.gen_range(0..eb.len());
            let k = rng.gen_range(1..=eb.len());
            let l = rng.gen_range(0..ea.len());
            Some((decode(&ea[..i], &eb[j..]), decode(&eb[..k], &ea[l..])))
        }
    }
}

/// Canonical-order encoding: each node with its parents as backward offsets.
fn encode(p: &Pipeline) -> Vec<(Node, Vec<usize>)> {
    let index = p.canonical_index();
    p.canonical_order()
        .into_iter()
        .enumerate()
        .map(|(pos, id)| {
            let n = p.node(id).expect("ordered ids exist").clone();
            let offsets = n.parent_ids.iter().map(|q| pos - index[q]).collect();
            (n, offsets)
        })
        .collect()
}

/// Concatenates two encoding slices, resolves offsets against the new
/// positions (dropping ones that point before the start), and keeps only
/// nodes that feed the last one.
fn decode(head: &[(Node, Vec<usize>)], tail: &[(Node, Vec<usize>)]) -> Pipeline {
    let all: Vec<&(Node, Vec<usize>)> = head.iter().chain(tail).collect();
    let mut nodes: Vec<Node> = Vec::with_capacity(all.len());
    for (pos, (n, offsets)) in all.iter().enumerate() {
        let mut parents = Vec::new();
        for &off in offsets {
            if off <= pos && !parents.contains(&(pos - off)) {
                parents.push(pos - off);
            }
        }
        let mut node = n.clone();
        node.id = pos;
        node.parent_ids = parents;
        nodes.push(node);
    }
    let sink = nodes.len() - 1;
    let full = Pipeline::new(nodes);
    let keep = full.ancestors(sink);
    Pipeline::new(full.into_nodes().into_iter().filter(|n| keep.contains(&n.id)).collect())
}

pub fn mutate<R: Rng>(kind: MutationType, p: &Pipeline, ctx: &OperatorContext<'_>, rng: &mut R) -> Option<Pipeline> {
    let cat = &ctx.catalog;
    match kind {
        MutationType::AddNode => {
            let n = p.node(pick_node(p, rng)?)?.clone();
            let n_in = cat.info(&n.operation_id)?.input;
            let mut out = p.clone();
            let new_id = p.next_id();
            match rng.gen_range(0..3) {
                0 => {
                    // Insert a node between `n` and its inputs.
                    let raw_needed = n.is_primary();
                    let op = cat
                        .ops
                        .iter()
                        .filter(|o| {
                            o.output == n_in && (!raw_needed || o.input == cat.raw) && (raw_needed || !o.raw_only)
                        })
                        .collect::<Vec<_>>()
                        .choose(rng)
                        .copied()?;
                    let m = Node::new(new_id, op.id.clone()).with_parents(n.parent_ids.clone());
                    out.node_mut(n.id)?.parent_ids = vec![new_id];
                    out.nodes_mut().push(m);
                }
                1 => {
                    let op = cat
                        .ops
                        .iter()
                        .filter(|o| o.output == n_in && o.input == cat.raw)
                        .collect::<Vec<_>>()
                        .choose(rng)
                        .copied()?;
                    out.node_mut(n.id)?.parent_ids.push(new_id);
                    out.nodes_mut().push(Node::new(new_id, op.id.clone()));
                }
                _ => {
                    // Reuse an existing node as an extra input.
                    let below = descendants(p, n.id);
                    let options: Vec<usize> = p
                        .ids()
                        .into_iter()
                        .filter(|x| *x != n.id && !below.contains(x) && !n.parent_ids.contains(x))
                        .collect();
                    let x = *options.choose(rng)?;
                    out.node_mut(n.id)?.parent_ids.push(x);
                }
            }
            Some(out)
        }
        MutationType::AddSubtree => {
            let n = p.node(pick_node(p, rng)?)?.clone();
            let n_in = cat.info(&n.operation_id)?.input;
            let mut next = p.next_id();
            let mut fresh = Vec::new();
            let depth = rng.gen_range(1..=2);
            let root = cat.grow(rng, depth, false, Some(n_in), &mut next, &mut fresh)?;
            let mut out = p.clone();
            out.node_mut(n.id)?.parent_ids.push(root);
            out.nodes_mut().extend(fresh);
            Some(out)
        }
        MutationType::ReplaceSubtree => {
            let id = pick_node(p, rng)?;
            let is_sink = p.final_node_id() == Some(id);
            let out_shape = cat.info(&p.node(id)?.operation_id)?.output;
            let mut nodes = Vec::new();
            let depth = rng.gen_range(1..=ctx.rules.max_depth.clamp(1, 3));
            cat.grow(rng, depth, is_sink, (!is_sink).then_some(out_shape), &mut 0, &mut nodes)?;
            p.replace_subtree(id, &Pipeline::new(nodes)).ok()
        }
        MutationType::ChangeOperation => {
            let n = p.node(pick_node(p, rng)?)?;
            let cur = cat.info(&n.operation_id)?;
            let is_sink = p.final_node_id() == Some(n.id);
            let op = cat
                .ops
                .iter()
                .filter(|o| o.id != cur.id && o.input == cur.input && o.output == cur.output)
                .filter(|o| !is_sink || o.model)
                .filter(|o| n.is_primary() || !o.raw_only)
                .collect::<Vec<_>>()
                .choose(rng)
                .copied()?;
            p.with_operation(n.id, &op.id).ok()
        }
        MutationType::ChangeHyperparams => {
            let n = p.node(pick_node(p, rng)?)?.clone();
            let spec = ctx.registry.spec(&n.operation_id)?;
            let mut out = p.clone();
            if !n.is_primary() && (spec.hyperparam_space.is_empty() || rng.gen_bool(0.25)) {
                let node = out.node_mut(n.id)?;
                node.enrich_raw = !node.enrich_raw;
                return Some(out);
            }
            let names: Vec<&String> = spec.hyperparam_space.keys().collect();
            let name = *names.choose(rng)?;
            let domain = &spec.hyperparam_space[name];
            let current: HyperValue = n
                .hyperparams
                .get(name)
                .or_else(|| spec.defaults.get(name))
                .cloned()
                .unwrap_or_else(|| domain.sample(rng));
            let value = if rng.gen_bool(0.5) { domain.perturb(&current, rng) } else { domain.sample(rng) };
            out.node_mut(n.id)?.hyperparams.insert(name.clone(), value);
            Some(out)
        }
        MutationType::RemoveNode => {
            let sink = p.final_node_id();
            let options: Vec<usize> = p.ids().into_iter().filter(|id| Some(*id) != sink).collect();
            p.without_node(*options.choose(rng)?).ok()
        }
    }
}

/// A child together with how it was produced.
#[derive(Debug, Clone)]
pub struct Offspring {
    pub individual: Individual,
    pub crossed: bool,
    pub mutated: bool,
    /// Best primary-quality fitness among the parents it came from.
    pub parent_quality: f64,
    /// Produced by the fallback after the retry bound was hit.
    pub stalled: bool,
}

fn random_mutation<R: Rng>(rng: &mut R) -> MutationType {
    let group = if rng.gen_bool(0.5) { &MutationType::EXPLORATION } else { &MutationType::EXPLOITATION };
    *group.choose(rng).expect("non-empty")
}

/// Creates `count` validated children from consecutive parent pairs.
pub fn reproduce<R: Rng>(
    parents: &[&Individual],
    count: usize,
    crossover_rate: f64,
    mutation_rate: f64,
    primary: usize,
    ctx: &OperatorContext<'_>,
    rng: &mut R,
) -> Vec<Offspring> {
    let mut out = Vec::with_capacity(count);
    if parents.is_empty() {
        return out;
    }
    let quality = |i: &Individual| i.fitness.as_ref().map_or(0.0, |f| f[primary]);
    for k in 0..count {
        let pair = k / 2;
        let p1 = parents[(2 * pair) % parents.len()];
        let p2 = parents[(2 * pair + 1) % parents.len()];
        let own = if k % 2 == 0 { p1 } else { p2 };
        let mut accepted = None;
        for _ in 0..MAX_RETRIES {
            let mut child = own.pipeline.clone();
            let mut crossed = false;
            if rng.gen_bool(crossover_rate) {
                let kind = *CrossoverType::ALL.choose(rng).expect("non-empty");
                if let Some((a, b)) = crossover(kind, &p1.pipeline, &p2.pipeline, rng) {
                    child = if k % 2 == 0 { a } else { b };
                    crossed = true;
                }
            }
            let mut mutated = false;
            if rng.gen_bool(mutation_rate) {
                if let Some(m) = mutate(random_mutation(rng), &child, ctx, rng) {
                    child = m;
                    mutated = true;
                }
            }
            if ctx.is_valid(&child) {
                accepted = Some((child, crossed, mutated));
                break;
            }
        }
        let parent_quality =
            quality(own).max(if accepted.as_ref().is_some_and(|a| a.1) { quality(p1).max(quality(p2)) } else { 0.0 });
        let offspring = match accepted {
            Some((child, crossed, mutated)) => Offspring {
                individual: Individual::new(child.relabeled()),
                crossed,
                mutated,
                parent_quality,
                stalled: false,
            },
            None => {
                let forced = (0..MAX_RETRIES).find_map(|_| {
                    let kind = *MutationType::EXPLOITATION.choose(rng).expect("non-empty");
                    mutate(kind, &own.pipeline, ctx, rng).filter(|c| ctx.is_valid(c))
                });
                let mutated = forced.is_some();
                let child = forced.unwrap_or_else(|| own.pipeline.clone());
                Offspring {
                    individual: Individual::new(child.relabeled()),
                    crossed: false,
                    mutated,
                    parent_quality,
                    stalled: true,
                }
            }
        };
        out.push(offspring);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed;

    fn ctx(reg: &Registry) -> OperatorContext<'_> {
        OperatorContext::new(reg, TaskType::Regression, ValidationRules::default())
    }

    #[test]
    fn subtree_exchange_keeps_chains_valid() {
        let reg = Registry::builtin();
        let c = ctx(&reg);
        let a = Pipeline::chain(&["standard_scaling", "pca_topk", "ridge"]);
        let b = Pipeline::chain(&["minmax_scaling", "knn", "decision_tree"]);
        let mut rng = seed::rng(3);
        for _ in 0..50 {
            let (x, y) = crossover(CrossoverType::SubtreeExchange, &a, &b, &mut rng).unwrap();
            for child in [x, y] {
                assert_eq!(child.sinks().len(), 1);
                assert!(child.topological_order().is_some());
                // Validity only fails when a data operation lands at the sink.
                if !c.is_valid(&child) {
                    let sink = child.node(child.final_node_id().unwrap()).unwrap();
                    assert!(!reg.spec(&sink.operation_id).unwrap().kind.produces_predictions());
                }
            }
        }
    }

    #[test]
    fn one_point_produces_single_sink_graphs() {
        let a = Pipeline::new(vec![
            Node::new(0, "standard_scaling"),
            Node::new(1, "ridge").with_parents(vec![0]),
            Node::new(2, "knn").with_parents(vec![0]),
            Node::new(3, "ridge").with_parents(vec![1, 2]),
        ]);
        let b = Pipeline::chain(&["minmax_scaling", "decision_tree"]);
        let mut rng = seed::rng(9);
        for _ in 0..100 {
            let (x, y) = crossover(CrossoverType::OnePoint, &a, &b, &mut rng).unwrap();
            for child in [x, y] {
                assert_eq!(child.sinks().len(), 1);
                assert!(child.topological_order().is_some());
            }
        }
    }

    #[test]
    fn zero_rates_copy_parents() {
        let reg = Registry::builtin();
        let c = ctx(&reg);
        let p = Individual { pipeline: Pipeline::chain(&["standard_scaling", "ridge"]), fitness: Some(vec![0.5]) };
        let q = Individual { pipeline: Pipeline::single("knn"), fitness: Some(vec![0.4]) };
        let kids = reproduce(&[&p, &q], 4, 0.0, 0.0, 0, &c, &mut seed::rng(1));
        assert_eq!(kids[0].individual.pipeline.canonical_signature(), p.pipeline.canonical_signature());
        assert_eq!(kids[1].individual.pipeline.canonical_signature(), q.pipeline.canonical_signature());
        assert!(kids.iter().all(|k| !k.crossed && !k.mutated && !k.stalled));
    }

    #[test]
    fn every_mutation_type_can_fire() {
        let reg = Registry::builtin();
        let c = ctx(&reg);
        let p = Pipeline::chain(&["standard_scaling", "pca_topk", "ridge"]);
        let mut rng = seed::rng(4);
        for kind in MutationType::EXPLORATION.iter().chain(&MutationType::EXPLOITATION) {
            let ok = (0..100).any(|_| mutate(*kind, &p, &c, &mut rng).is_some_and(|m| c.is_valid(&m) && m != p));
            assert!(ok, "{kind:?}");
        }
    }
}
