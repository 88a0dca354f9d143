//! Small deterministic synthetic datasets shaped like common benchmarks.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::dataio::{Dataset, TaskType};
use crate::matrix::Matrix;
use crate::seed;

pub const REGRESSION: [&str; 3] = ["elusage_like", "faculty_like", "esl_like"];
pub const CLASSIFICATION: [&str; 2] = ["spect_like", "ionosphere_like"];
pub const SERIES: [&str; 2] = ["series_short", "series_long"];

/// All bundled fixture names.
pub fn names() -> Vec<&'static str> {
    REGRESSION.iter().chain(&CLASSIFICATION).chain(&SERIES).copied().collect()
}

pub fn by_name(name: &str) -> Option<Dataset> {
    Some(match name {
        "elusage_like" => elusage_like(),
        "faculty_like" => faculty_like(),
        "esl_like" => esl_like(),
        "spect_like" => spect_like(),
        "ionosphere_like" => ionosphere_like(),
        "series_short" => series_short(),
        "series_long" => series_long(),
        _ => return None,
    })
}

fn named(mut d: Dataset, names: &[&str], target: &str) -> Dataset {
    d.feature_names = names.iter().map(|s| s.to_string()).collect();
    d.target_name = target.into();
    d
}

fn table(rows: Vec<Vec<f64>>, target: Vec<f64>, task: TaskType) -> Dataset {
    Dataset::new(Matrix::from_rows(&rows), target, task).expect("generated shapes agree")
}

/// 55 rows, 2 features: usage against temperature and month.
pub fn elusage_like() -> Dataset {
    let mut rng = seed::rng(55);
    let noise = Normal::new(0.0, 4.0).expect("valid sd");
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    for i in 0..55 {
        let month = (i % 12 + 1) as f64;
        let temp = 50.0 + 25.0 * ((month - 7.0) * std::f64::consts::PI / 6.0).cos() + rng.gen_range(-5.0..5.0);
        y.push(120.0 - 2.2 * temp + 0.018 * temp * temp + noise.sample(&mut rng));
        rows.push(vec![month, temp]);
    }
    named(table(rows, y, TaskType::Regression), &["month", "temperature"], "usage")
}

/// 50 rows, 4 features with an interaction term.
pub fn faculty_like() -> Dataset {
    let mut rng = seed::rng(50);
    let n01 = Normal::new(0.0, 1.0).expect("valid sd");
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    for _ in 0..50 {
        let x: Vec<f64> = (0..4).map(|_| n01.sample(&mut rng)).collect();
        y.push(3.0 + 1.5 * x[0] - 2.0 * x[1] + 0.8 * x[2] * x[3] + x[3].abs() + 0.3 * n01.sample(&mut rng));
        rows.push(x);
    }
    named(table(rows, y, TaskType::Regression), &["teaching", "research", "service", "seniority"], "rating")
}

/// 240 rows, 4 ordinal ratings with a saturating response.
pub fn esl_like() -> Dataset {
    let mut rng = seed::rng(240);
    let noise = Normal::new(0.0, 0.4).expect("valid sd");
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    for _ in 0..240 {
        let x: Vec<f64> = (0..4).map(|_| f64::from(rng.gen_range(1..=9))).collect();
        let s = 0.5 * x[0] + 0.3 * x[1] + 0.2 * x[2];
        y.push((9.0 / (1.0 + (-(s - 4.0)).exp())) + 0.1 * x[3] + noise.sample(&mut rng));
        rows.push(x);
    }
    named(table(rows, y, TaskType::Regression), &["r1", "r2", "r3", "r4"], "score")
}

/// 267 rows, 22 binary indicators; roughly one case in five is negative.
pub fn spect_like() -> Dataset {
    let mut rng = seed::rng(267);
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    for _ in 0..267 {
        let latent: f64 = rng.gen_range(0.0..1.0);
        let x: Vec<f64> = (0..22)
            .map(|j| {
                let p = if j < 8 { 0.15 + 0.7 * latent } else { 0.4 };
                f64::from(u8::from(rng.gen_bool(p)))
            })
            .collect();
        let signal: f64 = x[..8].iter().sum::<f64>() + 1.5 * x[0] * x[1] - 2.0;
        let p = 1.0 / (1.0 + (-(signal - 1.0)).exp());
        y.push(f64::from(u8::from(rng.gen_bool(p.clamp(0.01, 0.99)))));
        rows.push(x);
    }
    let names: Vec<String> = (1..=22).map(|i| format!("f{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    named(table(rows, y, TaskType::Classification), &refs, "diagnosis")
}

/// 200 rows, 12 features in [-1, 1] with a curved class boundary.
pub fn ionosphere_like() -> Dataset {
    let mut rng = seed::rng(351);
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    for _ in 0..200 {
        let x: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = x[0] * x[0] + x[1] * x[1] + 0.5 * x[2];
        let flip = rng.gen_bool(0.05);
        y.push(f64::from(u8::from((r < 0.6) != flip)));
        rows.push(x);
    }
    let names: Vec<String> = (1..=12).map(|i| format!("a{i}")).collect();
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    named(table(rows, y, TaskType::Classification), &refs, "class")
}

/// Two Gaussian clusters per class on two informative and two noise features.
pub fn synthetic_classification(rows: usize, seed_value: u64) -> Dataset {
    let mut rng = seed::rng(seed_value);
    let n01 = Normal::new(0.0, 1.0).expect("valid sd");
    let centres = [[1.5, 1.5], [-1.5, -1.5], [1.5, -1.5], [-1.5, 1.5]];
    let (mut xs, mut y) = (Vec::new(), Vec::new());
    for i in 0..rows {
        let c = i % 4;
        let mut x = vec![centres[c][0] + n01.sample(&mut rng), centres[c][1] + n01.sample(&mut rng)];
        x.push(n01.sample(&mut rng));
        x.push(n01.sample(&mut rng));
        xs.push(x);
        y.push(if c < 2 { 0.0 } else { 1.0 });
    }
    table(xs, y, TaskType::Classification)
}

/// Positive series with trend, two seasonal cycles and AR(1) noise.
pub fn synthetic_series(n: usize, seed_value: u64) -> Vec<f64> {
    let mut rng = seed::rng(seed_value);
    let noise = Normal::new(0.0, 0.6).expect("valid sd");
    let mut ar = 0.0;
    (0..n)
        .map(|t| {
            let t = t as f64;
            ar = 0.6 * ar + noise.sample(&mut rng);
            let season = 6.0 * (2.0 * std::f64::consts::PI * t / 12.0).sin()
                + 2.5 * (2.0 * std::f64::consts::PI * t / 5.0).cos();
            100.0 + 0.02 * t + season + ar
        })
        .collect()
}

pub fn series_short() -> Dataset {
    Dataset::time_series(synthetic_series(500, 500), 10)
}

pub fn series_long() -> Dataset {
    Dataset::time_series(synthetic_series(2000, 2000), 50)
}
