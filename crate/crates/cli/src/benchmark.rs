//! `benchmark`: composed vs. tuned vs. single-model baselines on the bundled fixtures.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use anyhow::{Context, Result};

use pipeforge::dataio::{evaluate_metric, split};
use pipeforge::tuner::{tune, TuningConfig};
use pipeforge::{compose, fixtures, ComposerConfig, Dataset, Metric, Pipeline, Registry, TaskType};

use crate::commands::{load_registry, write_stdout};
use crate::run::Run;
use crate::{usage, BenchmarkArgs};

/// Metric values for one variant across repeats; `None` marks a failed run.
type Cell = Vec<Option<f64>>;

struct DatasetResult {
    name: String,
    task: TaskType,
    horizon: Option<usize>,
    /// variant -> metric -> per-repeat values
    cells: BTreeMap<String, BTreeMap<Metric, Cell>>,
}

fn metrics_for(task: TaskType) -> Vec<Metric> {
    match task {
        TaskType::Regression => vec![Metric::Mae, Metric::Rmse],
        TaskType::Classification => vec![Metric::RocAuc, Metric::F1],
        TaskType::TsForecasting => vec![Metric::Mape],
    }
}

fn suite(name: &str) -> Result<Vec<&'static str>> {
    Ok(match name {
        "regression" => fixtures::REGRESSION.to_vec(),
        "classification" => fixtures::CLASSIFICATION.to_vec(),
        "timeseries" => fixtures::SERIES.to_vec(),
        "all" => fixtures::names(),
        other => {
            return Err(usage(format!(
                "unknown suite `{other}`; expected regression, classification, timeseries or all"
            )))
        }
    })
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

fn model_ids(registry: &Registry, task: TaskType) -> Vec<String> {
    registry
        .task_ops(task)
        .into_iter()
        .filter(|s| s.kind.produces_predictions() && !registry.is_series_op(&s.operation_id))
        .map(|s| s.operation_id.clone())
        .collect()
}

fn score_table(
    p: &Pipeline,
    train: &Dataset,
    test: &Dataset,
    seed: u64,
    reg: &Registry,
    metrics: &[Metric],
) -> Vec<Option<f64>> {
    let table = p.fit(train, seed, reg).ok().and_then(|f| f.predict(test).ok());
    metrics
        .iter()
        .map(|m| table.as_ref().and_then(|t| evaluate_metric(*m, t, &test.target).ok()).map(|v| v.value))
        .collect()
}

fn mape(pred: &[f64], truth: &[f64]) -> Option<f64> {
    pipeforge::dataio::mape(pred, truth).ok()
}

fn push(
    cells: &mut BTreeMap<String, BTreeMap<Metric, Cell>>,
    variant: &str,
    metrics: &[Metric],
    values: Vec<Option<f64>>,
) {
    let row = cells.entry(variant.to_string()).or_default();
    for (m, v) in metrics.iter().zip(values) {
        row.entry(*m).or_default().push(v);
    }
}

fn run_dataset(name: &str, a: &BenchmarkArgs, reg: &Registry) -> DatasetResult {
    let data = fixtures::by_name(name).expect("suite lists bundled fixtures");
    let task = data.task;
    let metrics = metrics_for(task);
    let primary = task.default_metric();
    let models = if task == TaskType::TsForecasting { Vec::new() } else { model_ids(reg, task) };
    let mut cells = BTreeMap::new();
    let mut horizon = None;
    for r in 0..a.repeats as u64 {
        let seed = a.seed + r;
        let mut cfg = ComposerConfig {
            max_generations: a.generations,
            pop_size: a.pop_size,
            offspring_size: a.pop_size,
            time_limit_seconds: a.timeout,
            seed,
            jobs: a.jobs,
            cv_folds: a.cv_folds,
            ..ComposerConfig::for_task(task)
        };
        if !a.no_baseline_seeding {
            cfg.initial_pipelines = models.iter().map(|m| Pipeline::single(m)).collect();
        }
        let tcfg =
            TuningConfig { iterations: a.tune_iterations, seed, cv_folds: a.cv_folds, ..TuningConfig::new(primary) };
        if task == TaskType::TsForecasting {
            let h = data.forecast_horizon.unwrap_or(1);
            horizon = Some(h);
            let n = data.rows();
            let train = Dataset::time_series(data.target[..n - h].to_vec(), h);
            let truth = &data.target[n - h..];
            let forecast = |p: &Pipeline| p.fit(&train, seed, reg).ok().and_then(|f| f.forecast(&train.target, h).ok());
            let best = compose(&cfg, &train, reg).ok().and_then(|res| res.best(&cfg).map(|b| b.pipeline.clone()));
            let untuned = best.as_ref().and_then(forecast).and_then(|f| mape(&f, truth));
            let tuned = best
                .as_ref()
                .and_then(|b| tune(b, &train, &tcfg, reg).ok())
                .and_then(|(t, _)| forecast(&t))
                .and_then(|f| mape(&f, truth));
            let naive = vec![*train.target.last().expect("non-empty series"); h];
            push(&mut cells, "composed", &metrics, vec![untuned]);
            push(&mut cells, "composed_tuned", &metrics, vec![tuned]);
            push(&mut cells, "naive_last_value", &metrics, vec![mape(&naive, truth)]);
            continue;
        }
        let Ok((train, test)) = split(&data, 0.75, 100 + seed) else {
            for v in ["composed", "composed_tuned"] {
                push(&mut cells, v, &metrics, vec![None; metrics.len()]);
            }
            continue;
        };
        let best = compose(&cfg, &train, reg).ok().and_then(|res| res.best(&cfg).map(|b| b.pipeline.clone()));
        let untuned =
            best.as_ref().map_or(vec![None; metrics.len()], |b| score_table(b, &train, &test, seed, reg, &metrics));
        let tuned = best
            .as_ref()
            .and_then(|b| tune(b, &train, &tcfg, reg).ok())
            .map_or(vec![None; metrics.len()], |(t, _)| score_table(&t, &train, &test, seed, reg, &metrics));
        push(&mut cells, "composed", &metrics, untuned);
        push(&mut cells, "composed_tuned", &metrics, tuned);
        for m in &models {
            push(
                &mut cells,
                &format!("single:{m}"),
                &metrics,
                score_table(&Pipeline::single(m), &train, &test, seed, reg, &metrics),
            );
        }
    }
    // Keep only the best single model (by mean primary metric over successful runs).
    let singles: Vec<String> = cells.keys().filter(|k| k.starts_with("single:")).cloned().collect();
    let mean_primary = |c: &BTreeMap<Metric, Cell>| {
        let ok: Vec<f64> = c[&primary].iter().flatten().copied().collect();
        if ok.is_empty() {
            None
        } else {
            let m = mean_std(&ok).0;
            Some(if primary.higher_is_better() { m } else { -m })
        }
    };
    let best_single = singles.iter().filter_map(|k| mean_primary(&cells[k]).map(|v| (v, k.clone()))).fold(
        None,
        |acc: Option<(f64, String)>, (v, k)| match acc {
            Some((b, _)) if b >= v => acc,
            _ => Some((v, k)),
        },
    );
    for k in singles {
        let row = cells.remove(&k).expect("listed key");
        if best_single.as_ref().is_some_and(|(_, b)| *b == k) {
            cells.insert(format!("best_single({})", &k["single:".len()..]), row);
        }
    }
    let label =
        if task == TaskType::TsForecasting { format!("{name} (synthetic substitute)") } else { name.to_string() };
    DatasetResult { name: label, task, horizon, cells }
}

pub fn cmd_benchmark(a: &BenchmarkArgs, args: &[String]) -> Result<()> {
    let names = suite(&a.suite)?;
    if a.repeats == 0 {
        return Err(usage("--repeats must be at least 1"));
    }
    let reg = load_registry()?;
    let mut run = Run::start("benchmark", args, &a.out.out)?;
    run.config(
        &serde_json::json!({
            "suite": a.suite, "repeats": a.repeats, "generations": a.generations, "pop_size": a.pop_size,
            "tune_iterations": a.tune_iterations, "cv_folds": a.cv_folds, "timeout": a.timeout,
            "jobs": a.jobs, "baseline_seeding": !a.no_baseline_seeding,
        }),
        Some(a.seed),
    )?;
    let results: Vec<DatasetResult> = names.iter().map(|n| run_dataset(n, a, &reg)).collect();

    let mut csv = String::from("dataset,task,horizon,variant,metric,mean,std,runs,failures\n");
    let mut table = String::new();
    for d in &results {
        let metrics = metrics_for(d.task);
        let horizon = d.horizon.map(|h| h.to_string()).unwrap_or_default();
        let _ = writeln!(
            table,
            "{} ({}{})",
            d.name,
            d.task.as_str(),
            d.horizon.map(|h| format!(", h={h}")).unwrap_or_default()
        );
        let _ = write!(table, "  {:<34}", "variant");
        for m in &metrics {
            let _ = write!(table, "{:>24}", m.as_str());
        }
        table.push('\n');
        for (variant, row) in &d.cells {
            let _ = write!(table, "  {variant:<34}");
            for m in &metrics {
                let cell = &row[m];
                let ok: Vec<f64> = cell.iter().flatten().copied().collect();
                let failures = cell.len() - ok.len();
                let (mean, std) = if ok.is_empty() { (f64::NAN, f64::NAN) } else { mean_std(&ok) };
                let _ = writeln!(
                    csv,
                    "{},{},{horizon},{variant},{},{mean:?},{std:?},{},{failures}",
                    d.name,
                    d.task.as_str(),
                    m.as_str(),
                    cell.len()
                );
                let shown = if ok.is_empty() { "failed".to_string() } else { format!("{mean:.4} ± {std:.4}") };
                let _ = write!(table, "{shown:>24}");
            }
            table.push('\n');
        }
        table.push('\n');
    }
    run.write_text("benchmark.csv", &csv)?;
    run.write_text("benchmark.txt", &table)?;
    write_stdout(&table)?;
    run.finish().context("writing the manifest")?;
    Ok(())
}
