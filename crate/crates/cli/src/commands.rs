//! One function per subcommand.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::json;

use pipeforge::composer::{compose, write_resources_csv, write_telemetry_csv, ComposeError, ComposeResult};
use pipeforge::dataio::{evaluate_metric, load_csv, load_csv_matching, write_csv, CsvSchema};
use pipeforge::persist::{adapt, export, import, Imported};
use pipeforge::sensitivity::{analyze, improve_until_stable, to_dot, Approach, SAConfig};
use pipeforge::tuner::{tune, TuningConfig, TuningStrategy};
use pipeforge::{
    fixtures, ComposerConfig, Dataset, FittedPipeline, Metric, Objective, Pipeline, Registry, StructureClass, TaskType,
};

use crate::run::{hash_path, Run, RunManifest, MANIFEST_FILE};
use crate::{usage, AdaptArgs, AnalyzeArgs, Cli, Command, ComposeArgs, DataArgs, FitArgs, InspectArgs, OutArgs};
use crate::{PredictArgs, ReplayArgs, SearchArgs, TuneArgs};

/// Sidecar written next to fitted exports so `predict` can read new CSVs
/// with the training-time column layout.
pub const DATA_SCHEMA_FILE: &str = "data_schema.json";

#[derive(Debug, Serialize, Deserialize)]
struct DataSchema {
    task: TaskType,
    horizon: Option<usize>,
    schema: CsvSchema,
}

pub fn dispatch(command: Command, args: &[String]) -> Result<()> {
    match command {
        Command::Compose(a) => cmd_compose(&a, args),
        Command::Adapt(a) => cmd_adapt(&a, args),
        Command::Tune(a) => cmd_tune(&a, args),
        Command::Analyze(a) => cmd_analyze(&a, args),
        Command::Fit(a) => cmd_fit(&a, args),
        Command::Predict(a) => cmd_predict(&a, args),
        Command::Inspect(a) => cmd_inspect(&a),
        Command::Benchmark(a) => crate::benchmark::cmd_benchmark(&a, args),
        Command::Fixtures(a) => cmd_fixtures(&a, args),
        Command::Replay(a) => cmd_replay(&a),
    }
}

/// The bundled registry, or the file named by `PIPEFORGE_REGISTRY`.
pub fn load_registry() -> Result<Registry> {
    match std::env::var_os("PIPEFORGE_REGISTRY") {
        Some(path) => {
            Registry::from_path(&path).with_context(|| format!("loading registry {}", path.to_string_lossy()))
        }
        None => Ok(Registry::builtin()),
    }
}

pub fn parse_task(s: &str) -> Result<TaskType> {
    TaskType::parse(s).ok_or_else(|| usage(format!("unknown task `{s}`; expected classification, regression or ts")))
}

fn parse_metric(s: &str) -> Result<Metric> {
    Metric::parse(s).ok_or_else(|| usage(format!("unknown metric `{s}`")))
}

/// Flag checks on the data arguments, done before anything is written.
fn data_task(a: &DataArgs) -> Result<TaskType> {
    let task = parse_task(&a.task)?;
    if task == TaskType::TsForecasting && a.horizon.is_none() {
        return Err(usage("--horizon is required for ts"));
    }
    Ok(task)
}

fn load_data(a: &DataArgs, run: &mut Run) -> Result<Dataset> {
    let task = data_task(a)?;
    run.input(&a.data)?;
    load_csv(&a.data, task, &a.target, a.horizon).with_context(|| format!("loading {}", a.data.display()))
}

fn composer_config(s: &SearchArgs, task: TaskType) -> Result<ComposerConfig> {
    let mut cfg = ComposerConfig::for_task(task);
    cfg.max_generations = s.generations;
    cfg.pop_size = s.pop_size;
    cfg.offspring_size = s.pop_size;
    cfg.time_limit_seconds = s.timeout;
    cfg.seed = s.seed;
    cfg.structure_class = StructureClass::parse(&s.structure)
        .ok_or_else(|| usage(format!("unknown structure `{}`; expected linear, ensemble or composite", s.structure)))?;
    cfg.max_depth = s.max_depth;
    cfg.max_nodes = s.max_nodes;
    cfg.cv_folds = s.cv_folds;
    cfg.jobs = s.jobs;
    cfg.use_cache = !s.no_cache;
    cfg.regularization = !s.no_regularization;
    if !s.objectives.is_empty() {
        cfg.objectives = s
            .objectives
            .iter()
            .map(|o| Objective::parse(o).ok_or_else(|| usage(format!("unknown objective `{o}`"))))
            .collect::<Result<_>>()?;
    }
    cfg.check().map_err(|e| usage(e.to_string()))?;
    Ok(cfg)
}

fn import_pipeline(path: &Path, registry: &Registry, run: &mut Run) -> Result<Imported> {
    let dir = export_dir(path);
    run.input(&dir)?;
    import(path, registry).with_context(|| format!("importing {}", path.display()))
}

/// Directory holding `pipeline.json` for either form of path.
fn export_dir(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.to_path_buf()
    } else {
        path.parent().map(Path::to_path_buf).unwrap_or_default()
    }
}

/// Fits on the full data and exports with the schema sidecar.
fn export_fitted_with_schema(
    pipeline: &Pipeline,
    data: &Dataset,
    seed: u64,
    registry: &Registry,
    dir: &Path,
    run: &Run,
) -> Result<FittedPipeline> {
    let fitted = pipeline.fit(data, seed, registry).context("fitting the exported pipeline")?;
    export(pipeline, Some(&fitted), registry, dir)?;
    let sidecar = DataSchema { task: data.task, horizon: data.forecast_horizon, schema: data.schema() };
    let rel = dir.strip_prefix(&run.out).unwrap_or(dir).join(DATA_SCHEMA_FILE);
    run.write_json(&rel.to_string_lossy(), &sidecar)?;
    Ok(fitted)
}

fn write_compose_outputs(
    res: &ComposeResult,
    cfg: &ComposerConfig,
    data: &Dataset,
    registry: &Registry,
    run: &Run,
    resources: bool,
) -> Result<()> {
    let best = res.best(cfg).context("the search produced no evaluated pipeline")?;
    export_fitted_with_schema(&best.pipeline, data, cfg.seed, registry, &run.path("best"), run)?;
    if res.front.members.len() > 1 {
        for (k, m) in res.front.members.iter().enumerate() {
            export(&m.pipeline, None, registry, run.path(&format!("front/{k}")))?;
        }
    }
    // Generation 0 is the initial population; the log holds one row per completed generation.
    write_telemetry_csv(&res.history[1..], run.path("telemetry.csv"))?;
    if resources {
        write_resources_csv(&res.history, run.path("resources.csv"))?;
    }
    let front: Vec<_> = res
        .front
        .members
        .iter()
        .map(|m| {
            json!({
                "signature": m.pipeline.canonical_signature(),
                "fitness": m.fitness_or_empty(),
                "nodes": m.pipeline.len(),
                "depth": m.pipeline.depth(),
            })
        })
        .collect();
    let initial = &res.history[0];
    run.write_json(
        "compose_summary.json",
        &json!({
            "objectives": cfg.objectives,
            "generations_completed": res.generations_completed,
            "budget_exhausted": res.budget_exhausted,
            "fits": res.fits,
            "cache_hits": res.cache_hits,
            "cache_misses": res.cache_misses,
            "stalls": res.stalls,
            "final_rates": [res.final_rates.0, res.final_rates.1],
            "initial_population": {
                "best_fitness": initial.best_fitness,
                "median_fitness": initial.median_fitness,
                "diversity": initial.diversity,
            },
            "best": { "signature": best.pipeline.canonical_signature(), "fitness": best.fitness_or_empty() },
            "front": front,
        }),
    )
}

fn compose_failure(e: ComposeError) -> anyhow::Error {
    match e {
        ComposeError::Config(m) => usage(m),
        other => anyhow::Error::new(other).context("composition failed"),
    }
}

fn cmd_compose(a: &ComposeArgs, args: &[String]) -> Result<()> {
    let task = data_task(&a.data)?;
    let cfg = composer_config(&a.search, task)?;
    let registry = load_registry()?;
    let mut run = Run::start("compose", args, &a.out.out)?;
    let data = load_data(&a.data, &mut run)?;
    run.config(&cfg, Some(cfg.seed))?;
    let res = compose(&cfg, &data, &registry).map_err(compose_failure)?;
    write_compose_outputs(&res, &cfg, &data, &registry, &run, a.search.resources)?;
    report(run.finish()?);
    Ok(())
}

fn cmd_adapt(a: &AdaptArgs, args: &[String]) -> Result<()> {
    let task = data_task(&a.data)?;
    let cfg = composer_config(&a.search, task)?;
    let registry = load_registry()?;
    let mut run = Run::start("adapt", args, &a.out.out)?;
    let imported = import_pipeline(&a.pipeline, &registry, &mut run)?;
    let fitted = imported.fitted.context("adapt needs a fitted export")?;
    let data = load_data(&a.data, &mut run)?;
    run.config(&cfg, Some(cfg.seed))?;
    let res = adapt(&fitted, &data, &cfg, &imported.registry).map_err(compose_failure)?;
    // The wrapped operation is registered inside adapt; rebuild that registry for export.
    let mut reg = imported.registry.clone();
    reg.register_atomized(std::sync::Arc::new(pipeforge::persist::atomize(&fitted, &imported.registry)));
    write_compose_outputs(&res, &cfg, &data, &reg, &run, a.search.resources)?;
    report(run.finish()?);
    Ok(())
}

fn cmd_tune(a: &TuneArgs, args: &[String]) -> Result<()> {
    let task = data_task(&a.data)?;
    let strategy = TuningStrategy::parse(&a.strategy).ok_or_else(|| {
        usage(format!("unknown strategy `{}`; expected serial_isolated, sequential or simultaneous", a.strategy))
    })?;
    let metric = a.metric.as_deref().map(parse_metric).transpose()?.unwrap_or(task.default_metric());
    let cfg = TuningConfig {
        strategy,
        iterations: a.iterations,
        metric,
        seed: a.seed,
        cv_folds: a.cv_folds,
        ..TuningConfig::new(metric)
    };
    let base = load_registry()?;
    let mut run = Run::start("tune", args, &a.out.out)?;
    let imported = import_pipeline(&a.pipeline, &base, &mut run)?;
    let data = load_data(&a.data, &mut run)?;
    run.config(&cfg, Some(cfg.seed))?;
    let (tuned, tuning) = tune(&imported.pipeline, &data, &cfg, &imported.registry).context("tuning failed")?;
    export_fitted_with_schema(&tuned, &data, a.seed, &imported.registry, &run.path("pipeline"), &run)?;
    run.write_json("tuning_report.json", &tuning)?;
    report(run.finish()?);
    Ok(())
}

fn parse_approach(s: &str) -> Result<Approach> {
    match s {
        "delete" => Ok(Approach::Delete),
        "replace" => Ok(Approach::Replace),
        other => Err(usage(format!("unknown approach `{other}`; expected delete or replace"))),
    }
}

fn cmd_analyze(a: &AnalyzeArgs, args: &[String]) -> Result<()> {
    let task = data_task(&a.data)?;
    let metric = a.metric.as_deref().map(parse_metric).transpose()?.unwrap_or(task.default_metric());
    let approaches = a.approaches.iter().map(|s| parse_approach(s)).collect::<Result<Vec<_>>>()?;
    let cfg = SAConfig { approaches, iterations: a.iterations, seed: a.seed, ..SAConfig::new(metric) };
    let base = load_registry()?;
    let mut run = Run::start("analyze", args, &a.out.out)?;
    let imported = import_pipeline(&a.pipeline, &base, &mut run)?;
    let data = load_data(&a.data, &mut run)?;
    run.config(&json!({ "analysis": cfg, "improve_rounds": a.improve_rounds }), Some(a.seed))?;
    let reg = &imported.registry;
    let sa = analyze(&imported.pipeline, &data, &cfg, reg).context("sensitivity analysis failed")?;
    run.write_json("sa_report.json", &sa)?;
    run.write_text("importance.dot", &to_dot(&imported.pipeline, &sa))?;
    if a.improve_rounds > 0 {
        let (better, after) = improve_until_stable(&imported.pipeline, &data, &cfg, reg, a.improve_rounds)
            .context("self-improvement failed")?;
        export(&better, None, reg, run.path("improved"))?;
        run.write_json("improved_report.json", &after)?;
        run.write_text("improved.dot", &to_dot(&better, &after))?;
    }
    report(run.finish()?);
    Ok(())
}

fn cmd_fit(a: &FitArgs, args: &[String]) -> Result<()> {
    data_task(&a.data)?;
    let base = load_registry()?;
    let mut run = Run::start("fit", args, &a.out.out)?;
    let imported = import_pipeline(&a.pipeline, &base, &mut run)?;
    let data = load_data(&a.data, &mut run)?;
    run.config(&json!({ "seed": a.seed }), Some(a.seed))?;
    export_fitted_with_schema(&imported.pipeline, &data, a.seed, &imported.registry, &run.path("pipeline"), &run)?;
    report(run.finish()?);
    Ok(())
}

fn cmd_predict(a: &PredictArgs, args: &[String]) -> Result<()> {
    let base = load_registry()?;
    let mut run = Run::start("predict", args, &a.out.out)?;
    let imported = import_pipeline(&a.pipeline, &base, &mut run)?;
    let fitted = imported.fitted.context("predict needs a fitted export (see `pipeforge fit`)")?;
    let sidecar = export_dir(&a.pipeline).join(DATA_SCHEMA_FILE);
    let text = std::fs::read_to_string(&sidecar).with_context(|| format!("reading {}", sidecar.display()))?;
    let schema: DataSchema = serde_json::from_str(&text).with_context(|| format!("parsing {}", sidecar.display()))?;
    run.input(&a.data)?;
    let data = load_csv_matching(&a.data, schema.task, &schema.schema, schema.horizon)
        .with_context(|| format!("loading {}", a.data.display()))?;
    run.config(&json!({ "task": schema.task, "horizon": schema.horizon }), None)?;
    if schema.task == TaskType::TsForecasting {
        let h = schema.horizon.unwrap_or(1);
        let values = fitted.forecast(&data.target, h).context("forecasting failed")?;
        let mut csv = String::from("step,forecast\n");
        for (i, v) in values.iter().enumerate() {
            csv.push_str(&format!("{},{v:?}\n", i + 1));
        }
        run.write_text("predictions.csv", &csv)?;
    } else {
        let table = fitted.predict(&data).context("prediction failed")?;
        run.write_text("predictions.csv", &table.to_csv())?;
        if data.target.iter().all(|t| t.is_finite()) {
            let metric = schema.task.default_metric();
            let value = evaluate_metric(metric, &table, &data.target)?;
            run.write_json("metrics.json", &json!({ metric.as_str(): value.value }))?;
        }
    }
    report(run.finish()?);
    Ok(())
}

fn cmd_inspect(a: &InspectArgs) -> Result<()> {
    let imported =
        import(&a.pipeline, &load_registry()?).with_context(|| format!("importing {}", a.pipeline.display()))?;
    let p = &imported.pipeline;
    let summary = json!({
        "nodes": p.len(),
        "depth": p.depth(),
        "signature": p.canonical_signature(),
        "operations": p.operation_counts(),
        "fitted": imported.fitted.is_some(),
        "wrapped_pipelines": imported.document.atomized.len(),
    });
    write_stdout(&(serde_json::to_string_pretty(&summary)? + "\n"))?;
    Ok(())
}

fn cmd_fixtures(a: &OutArgs, args: &[String]) -> Result<()> {
    let run = Run::start("fixtures", args, &a.out)?;
    for name in fixtures::names() {
        let data = fixtures::by_name(name).expect("listed fixture exists");
        write_csv(&data, run.path(&format!("{name}.csv")))?;
    }
    report(run.finish()?);
    Ok(())
}

fn replace_out(args: &[String], out: &Path) -> Result<Vec<String>> {
    let mut replaced = Vec::with_capacity(args.len());
    let mut found = false;
    let mut iter = args.iter();
    while let Some(a) = iter.next() {
        if a == "--out" {
            iter.next();
            replaced.push(a.clone());
            replaced.push(out.display().to_string());
            found = true;
        } else if a.starts_with("--out=") {
            replaced.push(format!("--out={}", out.display()));
            found = true;
        } else {
            replaced.push(a.clone());
        }
    }
    if !found {
        bail!("manifest arguments have no --out");
    }
    Ok(replaced)
}

fn cmd_replay(a: &ReplayArgs) -> Result<()> {
    let path = if a.manifest.is_dir() { a.manifest.join(MANIFEST_FILE) } else { a.manifest.clone() };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let manifest: RunManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    for (input, digest) in &manifest.inputs {
        let now = hash_path(Path::new(input)).with_context(|| format!("hashing recorded input {input}"))?;
        if &now != digest {
            bail!("input {input} changed since the recorded run");
        }
    }
    let args = replace_out(&manifest.args, &a.out.out)?;
    let argv = std::iter::once("pipeforge".to_string()).chain(args.iter().cloned());
    let cli = <Cli as clap::Parser>::try_parse_from(argv).context("recorded arguments no longer parse")?;
    dispatch(cli.command, &args)
}

/// Prints to stdout; a reader that closed the pipe early is not an error.
pub fn write_stdout(text: &str) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(e).context("writing to stdout"),
        _ => Ok(()),
    }
}

fn report(manifest: RunManifest) {
    eprintln!("{}: wrote {} files", manifest.command, manifest.outputs.len() + 1);
}
