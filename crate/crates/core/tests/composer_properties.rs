use std::time::Instant;

use proptest::prelude::*;

use pipeforge::composer::{compose, ComposeResult, ComposerConfig, Individual, Objective, ParetoFront};
use pipeforge::dataio::{Metric, TaskType};
use pipeforge::pipeline::Pipeline;
use pipeforge::{fixtures, Registry};

/// a is at least as good everywhere and strictly better somewhere.
fn beats(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| x >= y) && a.iter().zip(b).any(|(x, y)| x > y)
}

fn assert_front_is_valid(front: &ParetoFront) {
    for (i, a) in front.members.iter().enumerate() {
        for (j, b) in front.members.iter().enumerate() {
            if i != j {
                assert!(!beats(a.fitness_or_empty(), b.fitness_or_empty()), "{:?} beats {:?}", a.fitness, b.fitness);
            }
        }
    }
}

fn individual(fitness: Vec<f64>) -> Individual {
    Individual { fitness: Some(fitness), ..Individual::new(Pipeline::single("ridge")) }
}

proptest! {
    #[test]
    fn archive_is_non_dominated_and_covers_every_offer(
        points in prop::collection::vec(prop::collection::vec(0u8..6, 2..4), 1..40),
    ) {
        let dims = points[0].len();
        let points: Vec<Vec<f64>> = points.into_iter().filter(|p| p.len() == dims).map(|p| p.into_iter().map(f64::from).collect()).collect();
        let mut front = ParetoFront::default();
        for p in &points {
            front.offer(&individual(p.clone()));
        }
        assert_front_is_valid(&front);
        for p in &points {
            let covered = front.members.iter().any(|m| {
                let g = m.fitness_or_empty();
                g == p.as_slice() || beats(g, p)
            });
            prop_assert!(covered, "{p:?} is neither kept nor dominated");
        }
    }
}

fn quick(task: TaskType, seed: u64) -> ComposerConfig {
    ComposerConfig {
        max_generations: 6,
        pop_size: 8,
        offspring_size: 8,
        seed,
        jobs: 1,
        ..ComposerConfig::for_task(task)
    }
}

fn front_key(r: &ComposeResult) -> Vec<(String, Vec<f64>)> {
    r.front.members.iter().map(|m| (m.pipeline.canonical_signature(), m.fitness_or_empty().to_vec())).collect()
}

#[test]
fn multi_objective_front_is_valid_at_every_generation_count() {
    let reg = Registry::builtin();
    let data = fixtures::spect_like();
    for generations in [0, 1, 4, 8] {
        let cfg = ComposerConfig {
            max_generations: generations,
            objectives: vec![Objective::Quality { metric: Metric::RocAuc }, Objective::NodeCount, Objective::Depth],
            ..quick(TaskType::Classification, 21)
        };
        let res = compose(&cfg, &data, &reg).unwrap();
        assert!(!res.front.is_empty());
        assert_front_is_valid(&res.front);
    }
}

#[test]
fn identical_inputs_give_identical_fronts() {
    let reg = Registry::builtin();
    for (data, seed) in [(fixtures::elusage_like(), 1), (fixtures::ionosphere_like(), 2)] {
        let cfg = ComposerConfig {
            objectives: vec![Objective::Quality { metric: data.task.default_metric() }, Objective::NodeCount],
            ..quick(data.task, seed)
        };
        let a = compose(&cfg, &data, &reg).unwrap();
        let b = compose(&cfg, &data, &reg).unwrap();
        assert_eq!(front_key(&a), front_key(&b));
        assert_eq!(a.fits, b.fits);
    }
}

#[test]
fn search_stops_near_the_time_limit() {
    let reg = Registry::builtin();
    let cfg =
        ComposerConfig { max_generations: 100_000, time_limit_seconds: 1.0, ..quick(TaskType::Classification, 5) };
    let start = Instant::now();
    let res = compose(&cfg, &fixtures::ionosphere_like(), &reg).unwrap();
    let elapsed = start.elapsed().as_secs_f64();
    assert!(res.budget_exhausted);
    assert!(elapsed < 1.0 + 2.0, "took {elapsed:.2}s");
}
