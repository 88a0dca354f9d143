//! Hyperparameter tuning of a fixed pipeline structure.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::composer::{holdout_fitness, holdout_folds, holdout_predictions, kfold_folds};
use crate::dataio::{evaluate_metric, DataError, Dataset, Metric, TaskType};
use crate::frame::DataShape;
use crate::operations::{Domain, HyperValue, Registry};
use crate::pipeline::{validate, Node, Pipeline, PipelineError, ValidationRules, Violation};
use crate::seed;

/// Search space keyed by dimension name.
pub type Space = BTreeMap<String, Domain>;
/// One point of a [`Space`].
pub type Assignment = BTreeMap<String, HyperValue>;

/// Every this-many proposals, the incumbent is perturbed instead of sampling.
pub const INCUMBENT_PERIOD: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TuningStrategy {
    /// Each node in turn, scored on its own subtree output.
    SerialIsolated,
    /// Each node in turn, scored on the whole pipeline.
    Sequential,
    /// All nodes jointly, scored on the whole pipeline.
    #[default]
    Simultaneous,
}

impl TuningStrategy {
    pub const ALL: [TuningStrategy; 3] =
        [TuningStrategy::SerialIsolated, TuningStrategy::Sequential, TuningStrategy::Simultaneous];

    pub fn as_str(self) -> &'static str {
        match self {
            TuningStrategy::SerialIsolated => "serial_isolated",
            TuningStrategy::Sequential => "sequential",
            TuningStrategy::Simultaneous => "simultaneous",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|t| t.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningConfig {
    pub strategy: TuningStrategy,
    pub iterations: usize,
    pub metric: Metric,
    pub seed: u64,
    /// Fraction of the data used for fitting; the rest validates.
    pub validation_split: f64,
    /// Cross-validation folds; below 2 means the single split above.
    #[serde(default)]
    pub cv_folds: usize,
}

impl TuningConfig {
    pub fn new(metric: Metric) -> Self {
        Self {
            strategy: TuningStrategy::default(),
            iterations: 100,
            metric,
            seed: 0,
            validation_split: 0.75,
            cv_folds: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub strategy: TuningStrategy,
    pub iterations: usize,
    pub metric: Metric,
    pub metric_before: f64,
    pub metric_after: f64,
    /// Fitness scores (higher is better) before and after.
    pub score_before: f64,
    pub score_after: f64,
    /// Whole-pipeline fits, including the baseline and any final check.
    pub full_evaluations: usize,
    /// Subtree fits made by the isolated strategy.
    pub subtree_evaluations: usize,
    /// No node had a tunable parameter.
    pub untunable: bool,
}

impl TuningReport {
    pub fn improvement(&self) -> f64 {
        self.score_after - self.score_before
    }
}

#[derive(Debug, Error)]
pub enum TuneError {
    #[error("pipeline is invalid: {0}")]
    Invalid(Violation),
    #[error("iterations must be at least 1")]
    NoIterations,
    #[error("baseline pipeline cannot be fitted: {0}")]
    Baseline(#[source] PipelineError),
    #[error("metric is undefined for the baseline on the validation data")]
    MetricUndefined,
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Default sampler: uniform draws honouring each dimension's scale, with
/// the best point so far perturbed on every fifth call. A pure function of
/// its arguments.
pub fn propose_candidate(space: &Space, history: &[(Assignment, f64)], seed_value: u64) -> Assignment {
    let mut rng = seed::rng(seed::mix(seed_value, history.len() as u64));
    let incumbent = history
        .iter()
        .reduce(|a, b| if b.1 > a.1 { b } else { a })
        .filter(|_| (history.len() + 1) % INCUMBENT_PERIOD == 0);
    space
        .iter()
        .map(|(name, domain)| {
            let v = match incumbent.and_then(|(a, _)| a.get(name)) {
                Some(current) => domain.perturb(current, &mut rng),
                None => domain.sample(&mut rng),
            };
            (name.clone(), v)
        })
        .collect()
}

struct Scorer<'a> {
    folds: Vec<(Dataset, Dataset)>,
    metric: Metric,
    seed: u64,
    registry: &'a Registry,
    full: usize,
    subtree: usize,
}

impl Scorer<'_> {
    /// Mean fitness score and mean metric value over the folds; the metric
    /// is `None` when undefined on some fold.
    fn measure(&self, p: &Pipeline) -> (f64, Option<f64>) {
        let k = self.folds.len() as f64;
        let (mut score, mut metric) = (0.0, Some(0.0));
        for (fit, valid) in &self.folds {
            let table = holdout_predictions(p, fit, valid, self.seed, self.registry).ok();
            score += table.as_ref().map_or(0.0, |t| holdout_fitness(self.metric, t, valid));
            let m = table.and_then(|t| evaluate_metric(self.metric, &t, &valid.target).ok()).map(|v| v.value);
            metric = metric.zip(m).map(|(a, b)| a + b);
        }
        (score / k, metric.map(|m| m / k))
    }

    fn raw(&self, p: &Pipeline) -> f64 {
        self.measure(p).0
    }

    fn full(&mut self, p: &Pipeline) -> f64 {
        self.full += 1;
        self.raw(p)
    }

    fn subtree(&mut self, p: &Pipeline) -> f64 {
        self.subtree += 1;
        self.raw(p)
    }
}

fn node_space(p: &Pipeline, id: usize, registry: &Registry) -> Space {
    let node = p.node(id).expect("id from pipeline");
    registry.spec(&node.operation_id).map(|s| s.hyperparam_space.clone()).unwrap_or_default()
}

fn node_params(p: &Pipeline, id: usize, registry: &Registry) -> Assignment {
    let node = p.node(id).expect("id from pipeline");
    registry.spec(&node.operation_id).map(|s| s.merged_params(&node.hyperparams)).unwrap_or_default()
}

fn with_params(p: &Pipeline, id: usize, params: &Assignment) -> Pipeline {
    let mut out = p.clone();
    let node = out.node_mut(id).expect("id from pipeline");
    for (k, v) in params {
        node.hyperparams.insert(k.clone(), v.clone());
    }
    out
}

/// The ancestors of `id` with `id` as sink, extended by a probe model when
/// `id` is a data operation.
fn isolated(p: &Pipeline, id: usize, registry: &Registry, task: TaskType) -> Option<Pipeline> {
    let sub = p.subtree(id).ok()?;
    let op = &p.node(id)?.operation_id;
    if registry.spec(op)?.kind.produces_predictions() {
        return Some(sub);
    }
    let probe = if task == TaskType::Classification { "logistic_regression" } else { "ridge" };
    let mut nodes = sub.into_nodes();
    let mut next = nodes.iter().map(|n| n.id).max()? + 1;
    let mut parent = id;
    if registry.io_shapes(op)?.1 == DataShape::Series {
        nodes.push(Node::new(next, "lagged_transform").with_parents(vec![parent]));
        parent = next;
        next += 1;
    }
    nodes.push(Node::new(next, probe).with_parents(vec![parent]));
    Some(Pipeline::new(nodes))
}

/// Tunes node hyperparameters; the structure is never changed and the
/// result never scores below the input on the validation fold.
pub fn tune(
    pipeline: &Pipeline,
    data: &Dataset,
    config: &TuningConfig,
    registry: &Registry,
) -> Result<(Pipeline, TuningReport), TuneError> {
    validate(pipeline, registry, data.task, &ValidationRules::unbounded()).map_err(TuneError::Invalid)?;
    if config.iterations == 0 {
        return Err(TuneError::NoIterations);
    }
    let split_seed = seed::mix(config.seed, 0x7E57);
    let folds = if config.cv_folds >= 2 {
        kfold_folds(data, config.cv_folds, split_seed)?
    } else {
        vec![holdout_folds(data, config.validation_split, split_seed)?]
    };
    let (fit, valid) = &folds[0];
    let eval_seed = seed::mix(config.seed, 0xF17);
    holdout_predictions(pipeline, fit, valid, eval_seed, registry).map_err(TuneError::Baseline)?;
    let mut scorer = Scorer { folds, metric: config.metric, seed: eval_seed, registry, full: 1, subtree: 0 };
    let (score_before, metric_before) = scorer.measure(pipeline);
    let metric_before = metric_before.ok_or(TuneError::MetricUndefined)?;

    let order = pipeline.topological_order().expect("validated");
    let tunable: Vec<usize> = order.into_iter().filter(|&id| !node_space(pipeline, id, registry).is_empty()).collect();
    let mut best = pipeline.clone();
    let mut best_score = score_before;

    if !tunable.is_empty() {
        match config.strategy {
            TuningStrategy::Simultaneous => {
                let mut space = Space::new();
                let mut current = Assignment::new();
                for &id in &tunable {
                    let params = node_params(pipeline, id, registry);
                    for (name, d) in node_space(pipeline, id, registry) {
                        let key = format!("{id}.{name}");
                        if let Some(v) = params.get(&name) {
                            current.insert(key.clone(), v.clone());
                        }
                        space.insert(key, d);
                    }
                }
                let mut history = vec![(current, best_score)];
                for _ in 0..config.iterations {
                    let cand = propose_candidate(&space, &history, config.seed);
                    let mut p = pipeline.clone();
                    for &id in &tunable {
                        let prefix = format!("{id}.");
                        let part: Assignment = cand
                            .iter()
                            .filter_map(|(k, v)| k.strip_prefix(&prefix).map(|n| (n.to_string(), v.clone())))
                            .collect();
                        p = with_params(&p, id, &part);
                    }
                    let s = scorer.full(&p);
                    if s > best_score {
                        best_score = s;
                        best = p;
                    }
                    history.push((cand, s));
                }
            }
            TuningStrategy::Sequential => {
                for &id in &tunable {
                    let space = node_space(&best, id, registry);
                    let node_seed = seed::mix(config.seed, id as u64);
                    let mut history = vec![(node_params(&best, id, registry), best_score)];
                    for _ in 0..config.iterations {
                        let cand = propose_candidate(&space, &history, node_seed);
                        let p = with_params(&best, id, &cand);
                        let s = scorer.full(&p);
                        if s > best_score {
                            best_score = s;
                            best = p;
                        }
                        history.push((cand, s));
                    }
                }
            }
            TuningStrategy::SerialIsolated => {
                let mut candidate = pipeline.clone();
                for &id in &tunable {
                    let Some(base) = isolated(&candidate, id, registry, data.task) else { continue };
                    let space = node_space(&candidate, id, registry);
                    let node_seed = seed::mix(config.seed, id as u64);
                    let mut local_best = scorer.subtree(&base);
                    let mut history = vec![(node_params(&candidate, id, registry), local_best)];
                    for _ in 0..config.iterations {
                        let cand = propose_candidate(&space, &history, node_seed);
                        let probe = with_params(&base, id, &cand);
                        let s = scorer.subtree(&probe);
                        if s > local_best {
                            local_best = s;
                            candidate = with_params(&candidate, id, &cand);
                        }
                        history.push((cand, s));
                    }
                }
                if candidate != *pipeline {
                    let s = scorer.full(&candidate);
                    if s > best_score {
                        best_score = s;
                        best = candidate;
                    }
                }
            }
        }
    }

    let metric_after = if best == *pipeline { metric_before } else { scorer.measure(&best).1.unwrap_or(f64::NAN) };
    let report = TuningReport {
        strategy: config.strategy,
        iterations: config.iterations,
        metric: config.metric,
        metric_before,
        metric_after,
        score_before,
        score_after: best_score,
        full_evaluations: scorer.full,
        subtree_evaluations: scorer.subtree,
        untunable: tunable.is_empty(),
    };
    Ok((best, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::operations::Scale;

    fn cfg(strategy: TuningStrategy, iterations: usize, seed: u64) -> TuningConfig {
        TuningConfig { strategy, iterations, seed, ..TuningConfig::new(Metric::Mae) }
    }

    #[test]
    fn categorical_proposals_stay_in_choices() {
        let space: Space = [("c".to_string(), Domain::Categorical { choices: vec!["a".into(), "b".into()] })].into();
        let mut history = Vec::new();
        for i in 0..50 {
            let a = propose_candidate(&space, &history, 3);
            assert!(matches!(a["c"], HyperValue::Str(ref s) if s == "a" || s == "b"));
            history.push((a, i as f64 % 7.0));
        }
    }

    #[test]
    fn log_dimension_is_log_uniform() {
        let space: Space = [("l".to_string(), Domain::Float { low: 1e-4, high: 1e2, scale: Scale::Log })].into();
        let n = 10_000;
        let mut buckets = [0usize; 6];
        for s in 0..n {
            let v = propose_candidate(&space, &[], s as u64)["l"].as_f64().unwrap().log10();
            assert!((-4.0..=2.0).contains(&v));
            buckets[((v + 4.0).floor() as usize).min(5)] += 1;
        }
        // Largest gap between the empirical and uniform CDFs at bucket edges.
        let mut cum = 0.0;
        let mut ks: f64 = 0.0;
        for (i, b) in buckets.iter().enumerate() {
            cum += *b as f64 / n as f64;
            ks = ks.max((cum - (i + 1) as f64 / 6.0).abs());
        }
        assert!(ks < 0.05, "{buckets:?}");
    }

    #[test]
    fn proposals_are_pure() {
        let space: Space = [("k".to_string(), Domain::Int { low: 1, high: 15 })].into();
        let h = vec![(propose_candidate(&space, &[], 1), 0.3)];
        assert_eq!(propose_candidate(&space, &h, 9), propose_candidate(&space, &h, 9));
    }

    #[test]
    fn untunable_pipeline_is_returned_as_is() {
        let reg = Registry::builtin();
        let p = Pipeline::chain(&["standard_scaling", "ols"]);
        let (out, rep) = tune(&p, &fixtures::faculty_like(), &cfg(TuningStrategy::Simultaneous, 10, 1), &reg).unwrap();
        assert_eq!(out, p);
        assert!(rep.untunable);
        assert_eq!(rep.improvement(), 0.0);
        assert_eq!(rep.full_evaluations, 1);
    }

    #[test]
    fn ridge_tuning_is_never_worse() {
        let reg = Registry::builtin();
        let p = Pipeline::single("ridge");
        for s in 0..5 {
            let (out, rep) =
                tune(&p, &fixtures::faculty_like(), &cfg(TuningStrategy::Simultaneous, 20, s), &reg).unwrap();
            assert!(rep.metric_after <= rep.metric_before);
            assert!(rep.score_after >= rep.score_before);
            assert_eq!(out.topology_signature(), p.topology_signature());
        }
    }

    #[test]
    fn evaluation_counts_follow_strategy() {
        let reg = Registry::builtin();
        let p = Pipeline::chain(&["pca_topk", "knn", "ridge"]);
        let data = fixtures::esl_like();
        let it = 12;
        let (_, iso) = tune(&p, &data, &cfg(TuningStrategy::SerialIsolated, it, 4), &reg).unwrap();
        let (_, seq) = tune(&p, &data, &cfg(TuningStrategy::Sequential, it, 4), &reg).unwrap();
        let (_, sim) = tune(&p, &data, &cfg(TuningStrategy::Simultaneous, it, 4), &reg).unwrap();
        assert!(iso.full_evaluations <= 2);
        assert_eq!(iso.subtree_evaluations, 3 * (it + 1));
        assert_eq!(seq.full_evaluations, 1 + 3 * it);
        assert_eq!(sim.full_evaluations, 1 + it);
        for r in [iso, seq, sim] {
            assert!(r.score_after >= r.score_before);
        }
    }

    #[test]
    fn strategies_agree_on_single_ridge() {
        let reg = Registry::builtin();
        let p = Pipeline::single("ridge");
        let data = fixtures::esl_like();
        let alpha = |s| {
            let (out, _) = tune(&p, &data, &cfg(s, 300, 2), &reg).unwrap();
            out.nodes()[0].hyperparams.get("alpha").and_then(HyperValue::as_f64).unwrap_or(1.0)
        };
        let (a, b) = (alpha(TuningStrategy::Simultaneous), alpha(TuningStrategy::Sequential));
        // Within one decade, i.e. one step of a log10 grid over the range.
        assert!((a.log10() - b.log10()).abs() <= 1.0, "{a} vs {b}");
    }

    #[test]
    fn forecasting_pipelines_can_be_tuned_in_isolation() {
        let reg = Registry::builtin();
        let p = Pipeline::chain(&["moving_average_smoothing", "lagged_transform", "ridge"]);
        let data = Dataset::time_series(fixtures::synthetic_series(200, 3), 10);
        let (out, rep) = tune(&p, &data, &cfg(TuningStrategy::SerialIsolated, 5, 1), &reg).unwrap();
        assert_eq!(rep.subtree_evaluations, 3 * 6);
        assert!(rep.score_after >= rep.score_before);
        assert_eq!(out.topology_signature(), p.topology_signature());
    }
}
