//! Per-generation statistics and their CSV logs.

use std::path::Path;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    pub best_fitness: f64,
    pub median_fitness: f64,
    /// Distinct canonical signatures in the population.
    pub diversity: usize,
    pub cache_hit_rate: f64,
    pub fits: usize,
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub elapsed_seconds: f64,
    pub rss_kb: Option<u64>,
}

#[derive(Serialize)]
struct TelemetryRow {
    generation: usize,
    best_fitness: f64,
    median_fitness: f64,
    diversity: usize,
    cache_hit_rate: f64,
}

#[derive(Serialize)]
struct ResourceRow {
    generation: usize,
    elapsed_seconds: f64,
    rss_kb: Option<u64>,
}

/// Convergence log. Contains only run-deterministic columns.
pub fn write_telemetry_csv(stats: &[GenerationStats], path: impl AsRef<Path>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    if stats.is_empty() {
        w.write_record(["generation", "best_fitness", "median_fitness", "diversity", "cache_hit_rate"])?;
    }
    for s in stats {
        w.serialize(TelemetryRow {
            generation: s.generation,
            best_fitness: s.best_fitness,
            median_fitness: s.median_fitness,
            diversity: s.diversity,
            cache_hit_rate: s.cache_hit_rate,
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Wall-clock and memory log.
pub fn write_resources_csv(stats: &[GenerationStats], path: impl AsRef<Path>) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_path(path)?;
    for s in stats {
        w.serialize(ResourceRow { generation: s.generation, elapsed_seconds: s.elapsed_seconds, rss_kb: s.rss_kb })?;
    }
    w.flush()?;
    Ok(())
}

/// Resident set size of this process in KiB, where the platform exposes it.
pub fn resident_set_kb() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    status
        .lines()
        .find_map(|l| l.strip_prefix("VmRSS:"))
        .and_then(|v| v.split_whitespace().next())
        .and_then(|v| v.parse().ok())
}

pub fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        (v[m - 1] + v[m]) / 2.0
    }
}
