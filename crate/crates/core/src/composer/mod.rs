//! Evolutionary search over pipeline structures.

mod adaptive;
mod evaluate;
mod growth;
mod operators;
mod regularize;
mod selection;
mod telemetry;

use std::time::{Duration, Instant};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataio::{DataError, Dataset, Metric, TaskType};
use crate::operations::Registry;
use crate::pipeline::{validate, Pipeline, StructureClass, ValidationRules, Violation};
use crate::seed;

pub use adaptive::{update_adaptive_rates, AdaptiveScheme, OperatorOutcome, RATE_CEIL, RATE_FLOOR};
pub use evaluate::{
    fitness_folds, holdout_fitness, holdout_folds, holdout_predictions, kfold_folds, weighted_depth, weighted_nodes,
    Evaluator, FitnessCache, FIT_FRACTION,
};
pub use operators::{
    crossover, mutate, reproduce, CrossoverType, MutationType, Offspring, OperatorContext, MAX_RETRIES,
};
pub use regularize::regularize;
pub use selection::{
    crowding_distance, dominates, non_dominated_sort, nsga2_select, select_parents, spea2_fitness,
    tournament_survivors, ParetoFront, SelectionType,
};
pub use telemetry::{median, resident_set_kb, write_resources_csv, write_telemetry_csv, GenerationStats};

/// One optimization objective. All are maximized: quality as a fitness
/// score, complexity as a negated count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Objective {
    Quality { metric: Metric },
    NodeCount,
    Depth,
}

impl Objective {
    /// Parses `node_count`, `depth`, or a metric name.
    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().as_str() {
            "node_count" | "nodes" => Some(Objective::NodeCount),
            "depth" => Some(Objective::Depth),
            other => Metric::parse(other).map(|metric| Objective::Quality { metric }),
        }
    }
}

/// A pipeline with its fitness vector, once evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    pub pipeline: Pipeline,
    pub fitness: Option<Vec<f64>>,
}

impl Individual {
    pub fn new(pipeline: Pipeline) -> Self {
        Self { pipeline, fitness: None }
    }

    pub fn evaluated(&self) -> bool {
        self.fitness.is_some()
    }

    pub fn fitness_or_empty(&self) -> &[f64] {
        self.fitness.as_deref().unwrap_or(&[])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposerConfig {
    pub pop_size: usize,
    pub offspring_size: usize,
    pub max_generations: usize,
    pub time_limit_seconds: f64,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub selection_type: SelectionType,
    pub structure_class: StructureClass,
    pub max_depth: usize,
    pub max_nodes: usize,
    pub objectives: Vec<Objective>,
    pub seed: u64,
    pub adaptive_scheme: AdaptiveScheme,
    #[serde(default)]
    pub initial_pipelines: Vec<Pipeline>,
    /// Worker threads for population evaluation.
    pub jobs: usize,
    pub use_cache: bool,
    pub regularization: bool,
    /// Cross-validation folds for fitness; below 2 means one 75/25 holdout.
    #[serde(default)]
    pub cv_folds: usize,
}

impl ComposerConfig {
    pub fn for_task(task: TaskType) -> Self {
        Self {
            pop_size: 10,
            offspring_size: 10,
            max_generations: 200,
            time_limit_seconds: 600.0,
            crossover_rate: 0.8,
            mutation_rate: 0.8,
            selection_type: SelectionType::Tournament,
            structure_class: StructureClass::Composite,
            max_depth: 5,
            max_nodes: 15,
            objectives: vec![Objective::Quality { metric: task.default_metric() }],
            seed: 0,
            adaptive_scheme: AdaptiveScheme::None,
            initial_pipelines: Vec::new(),
            jobs: 1,
            use_cache: true,
            regularization: true,
            cv_folds: 0,
        }
    }

    pub fn rules(&self) -> ValidationRules {
        ValidationRules { structure: self.structure_class, max_depth: self.max_depth, max_nodes: self.max_nodes }
    }

    pub fn check(&self) -> Result<(), ComposeError> {
        let bad = |m: &str| Err(ComposeError::Config(m.to_string()));
        if self.pop_size < 2 {
            return bad("pop_size must be at least 2");
        }
        if !self.objectives.iter().any(|o| matches!(o, Objective::Quality { .. })) {
            return bad("at least one quality objective is required");
        }
        if !(0.0..=1.0).contains(&self.crossover_rate) || !(0.0..=1.0).contains(&self.mutation_rate) {
            return bad("operator rates must lie in [0, 1]");
        }
        if self.max_depth == 0 || self.max_nodes == 0 {
            return bad("max_depth and max_nodes must be positive");
        }
        if !(self.time_limit_seconds >= 0.0) {
            return bad("time_limit_seconds must be non-negative");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComposeResult {
    pub front: ParetoFront,
    pub population: Vec<Individual>,
    pub history: Vec<GenerationStats>,
    /// Generations run after the initial population.
    pub generations_completed: usize,
    pub fits: usize,
    pub cache_hits: usize,
    pub cache_misses: usize,
    /// Offspring produced by the stall fallback.
    pub stalls: usize,
    pub budget_exhausted: bool,
    pub final_rates: (f64, f64),
}

impl ComposeResult {
    /// Front member with the best primary quality.
    pub fn best(&self, config: &ComposerConfig) -> Option<&Individual> {
        self.front.best(primary_index(&config.objectives))
    }
}

#[derive(Debug, Error)]
pub enum ComposeError {
    #[error("invalid composer configuration: {0}")]
    Config(String),
    #[error("initial pipeline {index} is invalid: {violation}")]
    InitialAssumptionInvalid { index: usize, violation: Violation },
    #[error("no valid pipeline can be built from the registry for this task")]
    NoValidPipeline,
    #[error("time budget ran out before the initial population was evaluated")]
    BudgetExhaustedBeforeFirstEvaluation { partial: Box<ComposeResult> },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub(crate) fn primary_index(objectives: &[Objective]) -> usize {
    objectives.iter().position(|o| matches!(o, Objective::Quality { .. })).unwrap_or(0)
}

const GROWTH_ATTEMPTS: usize = 200;

/// Initial population: the given pipelines first, then random valid ones.
pub fn init_population<R: Rng>(
    config: &ComposerConfig,
    registry: &Registry,
    task: TaskType,
    rng: &mut R,
) -> Result<Vec<Individual>, ComposeError> {
    let rules = config.rules();
    let mut pop = Vec::with_capacity(config.pop_size);
    for (index, p) in config.initial_pipelines.iter().enumerate() {
        validate(p, registry, task, &rules)
            .map_err(|violation| ComposeError::InitialAssumptionInvalid { index, violation })?;
        pop.push(Individual::new(p.clone()));
    }
    let ctx = OperatorContext::new(registry, task, rules);
    if !ctx.catalog.has_sink_candidate() {
        return Err(ComposeError::NoValidPipeline);
    }
    while pop.len() < config.pop_size {
        match ctx.random_valid(rng, GROWTH_ATTEMPTS) {
            Some(p) => pop.push(Individual::new(p)),
            None if pop.is_empty() => return Err(ComposeError::NoValidPipeline),
            None => {
                let k = pop.len();
                pop.push(pop[rng.gen_range(0..k)].clone());
            }
        }
    }
    Ok(pop)
}

fn record(
    generation: usize,
    pop: &[Individual],
    evaluator: &Evaluator<'_>,
    rates: (f64, f64),
    start: Instant,
) -> GenerationStats {
    let q = evaluator.primary();
    let scores: Vec<f64> = pop.iter().filter_map(|i| i.fitness.as_ref().map(|f| f[q])).collect();
    let diversity =
        pop.iter().map(|i| i.pipeline.canonical_signature()).collect::<std::collections::BTreeSet<_>>().len();
    GenerationStats {
        generation,
        best_fitness: scores.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        median_fitness: median(&scores),
        diversity,
        cache_hit_rate: evaluator.cache().map_or(0.0, |c| c.hit_rate()),
        fits: evaluator.fits(),
        crossover_rate: rates.0,
        mutation_rate: rates.1,
        elapsed_seconds: start.elapsed().as_secs_f64(),
        rss_kb: resident_set_kb(),
    }
}

/// Runs the search and returns the final Pareto front with run history.
pub fn compose(config: &ComposerConfig, train: &Dataset, registry: &Registry) -> Result<ComposeResult, ComposeError> {
    config.check()?;
    if train.rows() == 0 {
        return Err(DataError::TooFewRows { train: 0, test: 0 }.into());
    }
    let start = Instant::now();
    let deadline = start + Duration::from_secs_f64(config.time_limit_seconds.min(1e9));
    let task = train.task;
    let objectives = config.objectives.clone();
    let evaluator = if config.cv_folds >= 2 {
        Evaluator::cross_validated(
            train,
            config.cv_folds,
            registry,
            objectives,
            config.seed,
            config.jobs,
            config.use_cache,
        )?
    } else {
        Evaluator::new(train, registry, objectives, config.seed, config.jobs, config.use_cache)?
    }
    .with_deadline(Some(deadline));
    let ctx = OperatorContext::new(registry, task, config.rules());
    let q = evaluator.primary();
    let mut rng = seed::rng(config.seed);
    let mut rates = (config.crossover_rate, config.mutation_rate);

    let mut pop = init_population(config, registry, task, &mut rng)?;
    evaluator.evaluate_population(&mut pop);
    let mut front = ParetoFront::default();
    front.update(&pop);
    let mut history = vec![record(0, &pop, &evaluator, rates, start)];
    let mut stalls = 0;
    let mut outcomes: Vec<OperatorOutcome> = Vec::new();
    let mut generations_completed = 0;

    let finish =
        |front: ParetoFront, pop: Vec<Individual>, history, generations_completed, stalls, exhausted, rates| {
            ComposeResult {
                front,
                population: pop,
                history,
                generations_completed,
                fits: evaluator.fits(),
                cache_hits: evaluator.cache().map_or(0, |c| c.hits()),
                cache_misses: evaluator.cache().map_or(0, |c| c.misses()),
                stalls,
                budget_exhausted: exhausted,
                final_rates: rates,
            }
        };

    if pop.iter().any(|i| !i.evaluated()) {
        pop.retain(Individual::evaluated);
        let partial = finish(front, pop, history, 0, 0, true, rates);
        return Err(ComposeError::BudgetExhaustedBeforeFirstEvaluation { partial: Box::new(partial) });
    }

    let mut exhausted = false;
    for generation in 1..=config.max_generations {
        if evaluator.expired() {
            exhausted = true;
            break;
        }
        if config.adaptive_scheme == AdaptiveScheme::RateAdaptation {
            rates = update_adaptive_rates(&outcomes, rates);
        }
        if config.regularization {
            pop = regularize(&pop, &evaluator, &ctx);
        }
        front.update(&pop);

        let parent_idx = select_parents(&pop, config.offspring_size, config.selection_type, &mut rng);
        let parents: Vec<&Individual> = parent_idx.iter().map(|&i| &pop[i]).collect();
        let offspring = reproduce(&parents, config.offspring_size, rates.0, rates.1, q, &ctx, &mut rng);
        stalls += offspring.iter().filter(|o| o.stalled).count();
        let mut children: Vec<Individual> = offspring.iter().map(|o| o.individual.clone()).collect();
        evaluator.evaluate_population(&mut children);
        outcomes = offspring
            .iter()
            .zip(&children)
            .filter_map(|(o, c)| {
                let f = c.fitness.as_ref()?;
                Some(OperatorOutcome { crossover: o.crossed, mutation: o.mutated, improved: f[q] > o.parent_quality })
            })
            .collect();
        children.retain(Individual::evaluated);
        front.update(&children);

        let mut pool = pop;
        pool.extend(children);
        let keep = if config.objectives.len() > 1 {
            let points: Vec<&[f64]> = pool.iter().map(|i| i.fitness_or_empty()).collect();
            nsga2_select(&points, config.pop_size)
        } else {
            let scores: Vec<f64> = pool.iter().map(|i| i.fitness_or_empty()[q]).collect();
            tournament_survivors(&scores, config.pop_size, &mut rng)
        };
        pop = keep.into_iter().map(|i| pool[i].clone()).collect();
        generations_completed = generation;
        history.push(record(generation, &pop, &evaluator, rates, start));
    }
    Ok(finish(front, pop, history, generations_completed, stalls, exhausted, rates))
}
