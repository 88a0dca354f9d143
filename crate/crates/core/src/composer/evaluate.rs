//! Fitness evaluation on internal fit/score folds, with memoization.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use super::{ComposeError, Individual, Objective};
use crate::dataio::{self, evaluate_metric, to_fitness_score, DataError, Dataset, Metric, PredictionTable, TaskType};
use crate::operations::Registry;
use crate::pipeline::{Pipeline, PipelineError};
use crate::seed;

/// Fraction of the training data used to fit candidates; the rest scores them.
pub const FIT_FRACTION: f64 = 0.75;

/// Signature-keyed fitness memo. Safe for concurrent use.
#[derive(Debug, Default)]
pub struct FitnessCache {
    entries: Mutex<BTreeMap<String, Vec<f64>>>,
    hits: AtomicUsize,
    misses: AtomicUsize,
}

impl FitnessCache {
    pub fn get(&self, signature: &str) -> Option<Vec<f64>> {
        self.entries.lock().expect("cache lock").get(signature).cloned()
    }

    pub fn insert(&self, signature: String, fitness: Vec<f64>) {
        self.entries.lock().expect("cache lock").insert(signature, fitness);
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hit_rate(&self) -> f64 {
        let total = self.hits() + self.misses();
        if total == 0 {
            0.0
        } else {
            self.hits() as f64 / total as f64
        }
    }
}

/// Splits training data into fit and score folds. Tabular data is split
/// 75/25 by seed; a series keeps its last `horizon` points for scoring.
pub fn fitness_folds(train: &Dataset, seed: u64) -> Result<(Dataset, Dataset), ComposeError> {
    Ok(holdout_folds(train, FIT_FRACTION, seed::mix(seed, 0x5EED_F01D))?)
}

/// Seeded `ratio` split for tabular data. A series is cut in time: the last
/// `horizon` points (or the `1 - ratio` tail when no horizon is set) are
/// held out.
pub fn holdout_folds(data: &Dataset, ratio: f64, seed: u64) -> Result<(Dataset, Dataset), DataError> {
    if data.task != TaskType::TsForecasting {
        return dataio::split(data, ratio, seed);
    }
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(DataError::InvalidRatio(ratio));
    }
    let n = data.rows();
    let h = data.forecast_horizon.unwrap_or(((1.0 - ratio) * n as f64).round() as usize).max(1);
    if h >= n {
        return Err(DataError::TooFewRows { train: n.saturating_sub(h), test: h });
    }
    let fit = Dataset::time_series(data.target[..n - h].to_vec(), h);
    let score = Dataset::time_series(data.target[n - h..].to_vec(), h);
    Ok((fit, score))
}

/// Seeded `k`-fold partition: each pair is (all other folds, one fold).
/// Classification rows are dealt per class so folds stay stratified. A
/// series falls back to the single time-ordered holdout.
pub fn kfold_folds(data: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>, DataError> {
    if data.task == TaskType::TsForecasting {
        return Ok(vec![holdout_folds(data, FIT_FRACTION, seed)?]);
    }
    let n = data.rows();
    if k < 2 || n < k {
        return Err(DataError::TooFewRows { train: n, test: 0 });
    }
    let mut rng = seed::rng(seed);
    let groups: Vec<Vec<usize>> = if data.task == TaskType::Classification {
        (0..data.n_classes()).map(|c| (0..n).filter(|&i| data.target[i] as usize == c).collect()).collect()
    } else {
        vec![(0..n).collect()]
    };
    let mut bucket = vec![0usize; n];
    let mut next = 0;
    for mut g in groups {
        g.shuffle(&mut rng);
        for i in g {
            bucket[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let fit: Vec<usize> = (0..n).filter(|&i| bucket[i] != f).collect();
            let score: Vec<usize> = (0..n).filter(|&i| bucket[i] == f).collect();
            (data.subset(&fit), data.subset(&score))
        })
        .collect())
}

/// Scores pipelines on fixed folds. Each candidate is fitted with a seed
/// derived from the run seed and its canonical signature, so results do
/// not depend on evaluation order or worker count.
pub struct Evaluator<'a> {
    registry: &'a Registry,
    folds: Vec<(Dataset, Dataset)>,
    objectives: Vec<Objective>,
    run_seed: u64,
    cache: Option<FitnessCache>,
    fits: AtomicUsize,
    deadline: Option<Instant>,
    pool: rayon::ThreadPool,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        train: &Dataset,
        registry: &'a Registry,
        objectives: Vec<Objective>,
        run_seed: u64,
        jobs: usize,
        use_cache: bool,
    ) -> Result<Self, ComposeError> {
        Self::with_folds(vec![fitness_folds(train, run_seed)?], registry, objectives, run_seed, jobs, use_cache)
    }

    /// Evaluator whose quality is the mean over `k` cross-validation folds.
    pub fn cross_validated(
        train: &Dataset,
        k: usize,
        registry: &'a Registry,
        objectives: Vec<Objective>,
        run_seed: u64,
        jobs: usize,
        use_cache: bool,
    ) -> Result<Self, ComposeError> {
        let folds = kfold_folds(train, k, seed::mix(run_seed, 0x5EED_F01D))?;
        Self::with_folds(folds, registry, objectives, run_seed, jobs, use_cache)
    }

    fn with_folds(
        folds: Vec<(Dataset, Dataset)>,
        registry: &'a Registry,
        objectives: Vec<Objective>,
        run_seed: u64,
        jobs: usize,
        use_cache: bool,
    ) -> Result<Self, ComposeError> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| ComposeError::Config(e.to_string()))?;
        Ok(Self {
            registry,
            folds,
            objectives,
            run_seed,
            cache: use_cache.then(FitnessCache::default),
            fits: AtomicUsize::new(0),
            deadline: None,
            pool,
        })
    }

    pub fn with_deadline(mut self, deadline: Option<Instant>) -> Self {
        self.deadline = deadline;
        self
    }

    /// (fit, score) pairs; quality is averaged over them.
    pub fn folds(&self) -> &[(Dataset, Dataset)] {
        &self.folds
    }

    pub fn registry(&self) -> &Registry {
        self.registry
    }

    pub fn objectives(&self) -> &[Objective] {
        &self.objectives
    }

    pub fn cache(&self) -> Option<&FitnessCache> {
        self.cache.as_ref()
    }

    /// Number of pipeline fits performed so far.
    pub fn fits(&self) -> usize {
        self.fits.load(Ordering::Relaxed)
    }

    pub fn expired(&self) -> bool {
        self.deadline.is_some_and(|d| Instant::now() >= d)
    }

    /// Index of the first quality objective.
    pub fn primary(&self) -> usize {
        self.objectives.iter().position(|o| matches!(o, Objective::Quality { .. })).unwrap_or(0)
    }

    /// Fitness computed from scratch (never consults the cache).
    pub fn compute(&self, pipeline: &Pipeline) -> Vec<f64> {
        let signature = pipeline.canonical_signature();
        let metrics: Vec<Metric> = self
            .objectives
            .iter()
            .filter_map(|o| match o {
                Objective::Quality { metric } => Some(*metric),
                _ => None,
            })
            .collect();
        let scores = self.quality_scores(pipeline, &signature, &metrics);
        let mut q = scores.into_iter();
        self.objectives
            .iter()
            .map(|o| match o {
                Objective::Quality { .. } => q.next().expect("one score per quality objective"),
                Objective::NodeCount => -(weighted_nodes(pipeline, self.registry) as f64),
                Objective::Depth => -(weighted_depth(pipeline, self.registry) as f64),
            })
            .collect()
    }

    /// Fitness-score per metric averaged over folds; a fold where fitting,
    /// predicting or scoring fails contributes 0.
    fn quality_scores(&self, pipeline: &Pipeline, signature: &str, metrics: &[Metric]) -> Vec<f64> {
        self.fits.fetch_add(1, Ordering::Relaxed);
        let seed = seed::mix(self.run_seed, seed::hash_str(signature));
        let mut sums = vec![0.0; metrics.len()];
        for (fit, score) in &self.folds {
            if let Ok(table) = holdout_predictions(pipeline, fit, score, seed, self.registry) {
                for (acc, &m) in sums.iter_mut().zip(metrics) {
                    *acc += holdout_fitness(m, &table, score);
                }
            }
        }
        let k = self.folds.len() as f64;
        sums.into_iter().map(|v| v / k).collect()
    }

    /// Cached fitness of one pipeline; `None` once the deadline has passed.
    pub fn evaluate(&self, pipeline: &Pipeline) -> Option<Vec<f64>> {
        let signature = pipeline.canonical_signature();
        if let Some(cache) = &self.cache {
            if let Some(f) = cache.get(&signature) {
                cache.hits.fetch_add(1, Ordering::Relaxed);
                return Some(f);
            }
            cache.misses.fetch_add(1, Ordering::Relaxed);
        }
        if self.expired() {
            return None;
        }
        let f = self.compute(pipeline);
        if let Some(cache) = &self.cache {
            cache.insert(signature, f.clone());
        }
        Some(f)
    }

    /// Evaluates every unevaluated individual. Cache bookkeeping happens in
    /// population order before any fitting, so hit/miss counts are the same
    /// for any worker count. Individuals not reached before the deadline
    /// stay unevaluated.
    pub fn evaluate_population(&self, pop: &mut [Individual]) {
        let mut pending: Vec<(usize, String)> = Vec::new();
        let mut scheduled: BTreeSet<String> = BTreeSet::new();
        for (i, ind) in pop.iter_mut().enumerate() {
            if ind.fitness.is_some() {
                continue;
            }
            let signature = ind.pipeline.canonical_signature();
            if let Some(cache) = &self.cache {
                if let Some(f) = cache.get(&signature) {
                    cache.hits.fetch_add(1, Ordering::Relaxed);
                    ind.fitness = Some(f);
                    continue;
                }
                if scheduled.contains(&signature) {
                    cache.hits.fetch_add(1, Ordering::Relaxed);
                    pending.push((i, signature));
                    continue;
                }
                cache.misses.fetch_add(1, Ordering::Relaxed);
            }
            scheduled.insert(signature.clone());
            pending.push((i, signature));
        }
        // With the cache on, each distinct signature is fitted once.
        let mut seen = BTreeSet::new();
        let jobs: Vec<usize> =
            pending.iter().filter(|(_, s)| self.cache.is_none() || seen.insert(s.as_str())).map(|(i, _)| *i).collect();
        let results: Vec<(usize, Option<Vec<f64>>)> = self.pool.install(|| {
            jobs.par_iter().map(|&i| (i, (!self.expired()).then(|| self.compute(&pop[i].pipeline)))).collect()
        });
        let mut by_signature: BTreeMap<&str, Vec<f64>> = BTreeMap::new();
        for (i, f) in results {
            if let Some(f) = f {
                let sig = pending.iter().find(|(j, _)| *j == i).map(|(_, s)| s.as_str()).expect("pending");
                if let Some(cache) = &self.cache {
                    cache.insert(sig.to_string(), f.clone());
                }
                by_signature.insert(sig, f.clone());
                pop[i].fitness = Some(f);
            }
        }
        if self.cache.is_some() {
            for (i, s) in &pending {
                if pop[*i].fitness.is_none() {
                    pop[*i].fitness = by_signature.get(s.as_str()).cloned();
                }
            }
        }
    }
}

/// Fits on `fit` and predicts the rows of `score`. A series forecasts the
/// held-out tail from the end of the fit fold.
pub fn holdout_predictions(
    pipeline: &Pipeline,
    fit: &Dataset,
    score: &Dataset,
    seed: u64,
    registry: &Registry,
) -> Result<PredictionTable, PipelineError> {
    let fitted = pipeline.fit(fit, seed, registry)?;
    match fit.task {
        TaskType::TsForecasting => fitted.predict(fit),
        _ => fitted.predict(score),
    }
}

/// Non-negative fitness score of predictions against the score fold; 0 when
/// the metric is undefined.
pub fn holdout_fitness(metric: Metric, table: &PredictionTable, score: &Dataset) -> f64 {
    match evaluate_metric(metric, table, &score.target) {
        Ok(v) if v.value.is_finite() => {
            let s = to_fitness_score(&v);
            if s.is_finite() {
                s.max(0.0)
            } else {
                0.0
            }
        }
        _ => 0.0,
    }
}

/// Node count with wrapped pipelines expanded.
pub fn weighted_nodes(pipeline: &Pipeline, registry: &Registry) -> usize {
    pipeline.nodes().iter().map(|n| registry.node_weight(&n.operation_id)).sum()
}

/// Depth with each wrapped pipeline counted at its own inner depth.
pub fn weighted_depth(pipeline: &Pipeline, registry: &Registry) -> usize {
    let Some(order) = pipeline.topological_order() else { return 0 };
    let mut level: BTreeMap<usize, usize> = BTreeMap::new();
    for id in order {
        let node = pipeline.node(id).expect("ordered ids exist");
        let own = registry.atomized(&node.operation_id).map_or(1, |a| a.inner_depth());
        let d = node.parent_ids.iter().map(|p| level[p]).max().unwrap_or(0) + own;
        level.insert(id, d);
    }
    level.values().copied().max().unwrap_or(0)
}
