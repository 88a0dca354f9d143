//! Structural sensitivity analysis: how much each node contributes.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::{holdout_fitness, holdout_folds, holdout_predictions};
use crate::dataio::{DataError, Dataset, Metric, TaskType};
use crate::operations::Registry;
use crate::pipeline::{validate, Pipeline, ValidationRules};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Approach {
    Delete,
    Replace,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SAConfig {
    pub approaches: Vec<Approach>,
    /// Refits per modification, each with its own seed.
    pub iterations: usize,
    pub metric: Metric,
    pub seed: u64,
    pub validation_split: f64,
}

impl SAConfig {
    pub fn new(metric: Metric) -> Self {
        Self {
            approaches: vec![Approach::Delete, Approach::Replace],
            iterations: 1,
            metric,
            seed: 0,
            validation_split: 0.75,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeReport {
    pub operation_id: String,
    pub delete_importance: Option<f64>,
    pub replace_importance: Option<f64>,
    pub best_replacement: Option<String>,
    pub delete_improves: bool,
    pub replace_improves: bool,
    /// Whether deletion leaves a valid pipeline.
    pub deletable: bool,
}

impl NodeReport {
    /// Smallest importance over the approaches that were measured.
    pub fn min_importance(&self) -> Option<f64> {
        match (self.delete_importance, self.replace_importance) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SAReport {
    pub metric: Metric,
    pub base_score: f64,
    pub per_node: BTreeMap<usize, NodeReport>,
    pub sustainability_index: f64,
    pub n_total: usize,
    pub n_del: usize,
    pub n_repl: usize,
}

#[derive(Debug, Error)]
pub enum SensitivityError {
    #[error("node {0} cannot be modified")]
    NodeNotModifiable(usize),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("the unmodified pipeline scores zero, so ratios are undefined")]
    ZeroBaseline,
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Mean of `1 - modified / base` over paired iterations.
pub fn importance_from_scores(base: &[f64], modified: &[f64]) -> f64 {
    assert_eq!(base.len(), modified.len(), "one modified score per base score");
    let n = base.len() as f64;
    base.iter().zip(modified).map(|(b, m)| 1.0 - m / b).sum::<f64>() / n
}

/// Share of nodes that survive: `1 - n_del / n_total`.
pub fn sustainability(n_del: usize, n_total: usize) -> f64 {
    if n_total == 0 {
        1.0
    } else {
        1.0 - n_del as f64 / n_total as f64
    }
}

struct Bench<'a> {
    fit: Dataset,
    valid: Dataset,
    metric: Metric,
    seeds: Vec<u64>,
    registry: &'a Registry,
    task: TaskType,
}

impl<'a> Bench<'a> {
    fn new(data: &Dataset, config: &SAConfig, registry: &'a Registry) -> Result<Self, SensitivityError> {
        if config.iterations == 0 {
            return Err(SensitivityError::Config("iterations must be at least 1".into()));
        }
        if config.approaches.is_empty() {
            return Err(SensitivityError::Config("at least one approach is required".into()));
        }
        let (fit, valid) = holdout_folds(data, config.validation_split, seed::mix(config.seed, 0x5A))?;
        let seeds = (0..config.iterations as u64).map(|i| seed::mix(config.seed, i)).collect();
        Ok(Self { fit, valid, metric: config.metric, seeds, registry, task: data.task })
    }

    fn scores(&self, p: &Pipeline) -> Vec<f64> {
        self.seeds
            .iter()
            .map(|&s| match holdout_predictions(p, &self.fit, &self.valid, s, self.registry) {
                Ok(t) => holdout_fitness(self.metric, &t, &self.valid),
                Err(_) => 0.0,
            })
            .collect()
    }

    fn is_valid(&self, p: &Pipeline) -> bool {
        validate(p, self.registry, self.task, &ValidationRules::unbounded()).is_ok()
    }

    fn deleted(&self, p: &Pipeline, id: usize) -> Option<Pipeline> {
        if p.final_node_id() == Some(id) {
            return None;
        }
        p.without_node(id).ok().filter(|c| self.is_valid(c))
    }

    /// Valid single-operation substitutes for node `id`, with registry defaults.
    fn substitutes(&self, p: &Pipeline, id: usize) -> Vec<(String, Pipeline)> {
        let Some(node) = p.node(id) else { return Vec::new() };
        let Some(spec) = self.registry.spec(&node.operation_id) else { return Vec::new() };
        let model = spec.kind.produces_predictions();
        self.registry
            .task_ops(self.task)
            .into_iter()
            .filter(|s| s.operation_id != node.operation_id && s.kind.produces_predictions() == model)
            .filter_map(|s| {
                let c = p.with_operation(id, &s.operation_id).ok()?;
                self.is_valid(&c).then(|| (s.operation_id.clone(), c))
            })
            .collect()
    }
}

/// Importance of one node under one approach; for replacement, against the
/// best substitute.
pub fn node_importance(
    pipeline: &Pipeline,
    node_id: usize,
    data: &Dataset,
    config: &SAConfig,
    registry: &Registry,
    approach: Approach,
) -> Result<f64, SensitivityError> {
    if pipeline.node(node_id).is_none() {
        return Err(SensitivityError::UnknownNode(node_id));
    }
    let bench = Bench::new(data, config, registry)?;
    let base = bench.scores(pipeline);
    if base.iter().any(|b| *b <= 0.0) {
        return Err(SensitivityError::ZeroBaseline);
    }
    let (imp, _) = measure(&bench, pipeline, node_id, &base, approach)?;
    Ok(imp)
}

fn measure(
    bench: &Bench<'_>,
    p: &Pipeline,
    id: usize,
    base: &[f64],
    approach: Approach,
) -> Result<(f64, Option<String>), SensitivityError> {
    if p.final_node_id() == Some(id) {
        return Err(SensitivityError::NodeNotModifiable(id));
    }
    match approach {
        Approach::Delete => {
            let c = bench.deleted(p, id).ok_or(SensitivityError::NodeNotModifiable(id))?;
            Ok((importance_from_scores(base, &bench.scores(&c)), None))
        }
        Approach::Replace => bench
            .substitutes(p, id)
            .into_iter()
            .map(|(op, c)| (importance_from_scores(base, &bench.scores(&c)), Some(op)))
            .reduce(|a, b| if b.0 < a.0 { b } else { a })
            .ok_or(SensitivityError::NodeNotModifiable(id)),
    }
}

/// Importance of every non-sink node plus the summary counters.
pub fn analyze(
    pipeline: &Pipeline,
    data: &Dataset,
    config: &SAConfig,
    registry: &Registry,
) -> Result<SAReport, SensitivityError> {
    let bench = Bench::new(data, config, registry)?;
    let base = bench.scores(pipeline);
    if base.iter().any(|b| *b <= 0.0) {
        return Err(SensitivityError::ZeroBaseline);
    }
    let sink = pipeline.final_node_id();
    let mut per_node = BTreeMap::new();
    for id in pipeline.canonical_order() {
        if Some(id) == sink {
            continue;
        }
        let node = pipeline.node(id).expect("ordered ids exist");
        let mut r = NodeReport {
            operation_id: node.operation_id.clone(),
            delete_importance: None,
            replace_importance: None,
            best_replacement: None,
            delete_improves: false,
            replace_improves: false,
            deletable: bench.deleted(pipeline, id).is_some(),
        };
        for approach in &config.approaches {
            let Ok((imp, op)) = measure(&bench, pipeline, id, &base, *approach) else { continue };
            match approach {
                Approach::Delete => {
                    r.delete_importance = Some(imp);
                    r.delete_improves = imp < 0.0;
                }
                Approach::Replace => {
                    r.replace_importance = Some(imp);
                    r.best_replacement = op;
                    r.replace_improves = imp < 0.0;
                }
            }
        }
        per_node.insert(id, r);
    }
    let n_total = pipeline.len();
    let n_del = per_node.values().filter(|r| r.delete_improves).count();
    let n_repl = per_node.values().filter(|r| !r.delete_improves && r.replace_improves).count();
    Ok(SAReport {
        metric: config.metric,
        base_score: base.iter().sum::<f64>() / base.len() as f64,
        per_node,
        sustainability_index: sustainability(n_del, n_total),
        n_total,
        n_del,
        n_repl,
    })
}

/// Applies the single most harmful-node fix named by the report: deletion
/// or replacement with the lowest negative importance, deletion winning
/// ties. Returns the input when nothing has negative importance or the fix
/// would be invalid.
pub fn improve(pipeline: &Pipeline, report: &SAReport, registry: &Registry, task: TaskType) -> Pipeline {
    let mut best: Option<(f64, Approach, usize)> = None;
    for (&id, r) in &report.per_node {
        let options = [(r.delete_importance, Approach::Delete), (r.replace_importance, Approach::Replace)];
        for (imp, approach) in options {
            let Some(imp) = imp.filter(|v| *v < 0.0) else { continue };
            let better = match best {
                None => true,
                Some((b, a, _)) => imp < b || (imp == b && approach < a),
            };
            if better {
                best = Some((imp, approach, id));
            }
        }
    }
    let Some((_, approach, id)) = best else { return pipeline.clone() };
    let changed = match approach {
        Approach::Delete => pipeline.without_node(id).ok(),
        Approach::Replace => {
            report.per_node[&id].best_replacement.as_deref().and_then(|op| pipeline.with_operation(id, op).ok())
        }
    };
    changed
        .filter(|c| validate(c, registry, task, &ValidationRules::unbounded()).is_ok())
        .unwrap_or_else(|| pipeline.clone())
}

/// Repeats analyze and improve until no fix applies or `max_rounds` is hit.
/// Returns the final pipeline and its report.
pub fn improve_until_stable(
    pipeline: &Pipeline,
    data: &Dataset,
    config: &SAConfig,
    registry: &Registry,
    max_rounds: usize,
) -> Result<(Pipeline, SAReport), SensitivityError> {
    let mut current = pipeline.clone();
    let mut report = analyze(&current, data, config, registry)?;
    for _ in 0..max_rounds {
        let next = improve(&current, &report, registry, data.task);
        if next == current {
            break;
        }
        current = next;
        report = analyze(&current, data, config, registry)?;
    }
    Ok((current, report))
}

/// Importance bucket used for colouring.
pub fn bucket(importance: Option<f64>) -> &'static str {
    match importance {
        None => "none",
        Some(v) if v < 0.0 => "harmful",
        Some(v) if v < 0.05 => "minor",
        Some(_) => "important",
    }
}

/// Graphviz rendering with nodes coloured by importance bucket.
pub fn to_dot(pipeline: &Pipeline, report: &SAReport) -> String {
    let mut out = String::from("digraph pipeline {\n  rankdir=LR;\n  node [shape=box, style=filled];\n");
    for id in pipeline.canonical_order() {
        let node = pipeline.node(id).expect("ordered ids exist");
        let imp = report.per_node.get(&id).and_then(NodeReport::min_importance);
        let colour = match bucket(imp) {
            "harmful" => "salmon",
            "minor" => "khaki",
            "important" => "palegreen",
            _ => "lightgray",
        };
        let label = match imp {
            Some(v) => format!("{}\\n{:.3}", node.operation_id, v),
            None => node.operation_id.clone(),
        };
        let _ = writeln!(out, "  n{id} [label=\"{label}\", fillcolor={colour}];");
        for p in &node.parent_ids {
            let _ = writeln!(out, "  n{p} -> n{id};");
        }
    }
    out.push_str("}\n");
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::operations::OperationSpec;
    use crate::pipeline::Node;

    #[test]
    fn closed_form_importance() {
        assert_eq!(importance_from_scores(&[0.8], &[0.8]), 0.0);
        assert!((importance_from_scores(&[0.8], &[0.6]) - 0.25).abs() < 1e-12);
        assert!((importance_from_scores(&[0.5, 0.5], &[0.25, 0.75]) - 0.0).abs() < 1e-12);
    }

    #[test]
    fn scaling_scores_leaves_importance_unchanged() {
        let base = [0.7, 0.9, 0.4];
        let modified = [0.5, 0.95, 0.1];
        let c = 3.5;
        let scaled_b: Vec<f64> = base.iter().map(|v| v * c).collect();
        let scaled_m: Vec<f64> = modified.iter().map(|v| v * c).collect();
        let a = importance_from_scores(&base, &modified);
        let b = importance_from_scores(&scaled_b, &scaled_m);
        assert!((a - b).abs() <= 1e-15 * a.abs().max(1.0));
    }

    #[test]
    fn sustainability_values() {
        assert_eq!(sustainability(1, 5), 0.8);
        assert!((sustainability(2, 6) - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(format!("{:.1}", sustainability(2, 6)), "0.7");
        assert_eq!(sustainability(0, 4), 1.0);
    }

    fn noisy_setup() -> (Registry, Pipeline, Dataset) {
        let mut reg = Registry::builtin();
        reg.insert(OperationSpec::label_shuffle()).unwrap();
        let p = Pipeline::new(vec![
            Node::new(0, "standard_scaling"),
            Node::new(1, "label_shuffle").with_parents(vec![0]),
            Node::new(2, "logistic_regression").with_parents(vec![1]),
        ]);
        (reg, p, fixtures::ionosphere_like())
    }

    #[test]
    fn label_noise_node_has_negative_importance() {
        let (reg, p, data) = noisy_setup();
        let cfg = SAConfig { iterations: 3, ..SAConfig::new(Metric::F1) };
        let imp = node_importance(&p, 1, &data, &cfg, &reg, Approach::Delete).unwrap();
        assert!(imp < 0.0, "{imp}");
        assert!(matches!(
            node_importance(&p, 2, &data, &cfg, &reg, Approach::Delete),
            Err(SensitivityError::NodeNotModifiable(2))
        ));
    }

    #[test]
    fn improve_removes_the_noise_node() {
        let (reg, p, data) = noisy_setup();
        let cfg = SAConfig { iterations: 3, approaches: vec![Approach::Delete], ..SAConfig::new(Metric::F1) };
        let report = analyze(&p, &data, &cfg, &reg).unwrap();
        assert!(report.per_node[&1].delete_improves);
        let better = improve(&p, &report, &reg, TaskType::Classification);
        assert!(better.nodes().iter().all(|n| n.operation_id != "label_shuffle"));
        let again = analyze(&better, &data, &cfg, &reg).unwrap();
        assert!(again.per_node.values().all(|r| r.operation_id != "label_shuffle"));
        assert!(again.base_score > report.base_score);
        for r in report.per_node.values() {
            assert!(r.delete_improves || r.operation_id != "label_shuffle");
        }
        assert!(report.n_del + report.n_repl <= report.n_total);
        assert!((report.sustainability_index - sustainability(report.n_del, report.n_total)).abs() == 0.0);
    }

    #[test]
    fn non_negative_report_is_identity() {
        let reg = Registry::builtin();
        let p = Pipeline::chain(&["standard_scaling", "ridge"]);
        let report = SAReport {
            metric: Metric::Mae,
            base_score: 0.5,
            per_node: [(
                0,
                NodeReport {
                    operation_id: "standard_scaling".into(),
                    delete_importance: Some(0.1),
                    replace_importance: Some(0.0),
                    best_replacement: Some("minmax_scaling".into()),
                    delete_improves: false,
                    replace_improves: false,
                    deletable: true,
                },
            )]
            .into(),
            sustainability_index: 1.0,
            n_total: 2,
            n_del: 0,
            n_repl: 0,
        };
        assert_eq!(improve(&p, &report, &reg, TaskType::Regression), p);
    }

    #[test]
    fn dot_export_lists_every_edge() {
        let (reg, p, data) = noisy_setup();
        let report = analyze(&p, &data, &SAConfig::new(Metric::F1), &reg).unwrap();
        let dot = to_dot(&p, &report);
        assert!(dot.contains("n0 -> n1;") && dot.contains("n1 -> n2;"));
        assert!(dot.contains("salmon"));
    }
}
