//! Operator-rate adaptation from recent offspring success.

use serde::{Deserialize, Serialize};

pub const RATE_FLOOR: f64 = 0.05;
pub const RATE_CEIL: f64 = 0.95;
/// Success ratio above which a rate grows and below which it shrinks.
pub const TARGET_SUCCESS: f64 = 0.2;
const STEP_UP: f64 = 1.1;
const STEP_DOWN: f64 = 0.9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdaptiveScheme {
    #[default]
    None,
    RateAdaptation,
}

/// How one offspring was made and whether it beat its parents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OperatorOutcome {
    pub crossover: bool,
    pub mutation: bool,
    pub improved: bool,
}

fn adjust(rate: f64, outcomes: impl Iterator<Item = bool>) -> f64 {
    let (mut n, mut wins) = (0usize, 0usize);
    for w in outcomes {
        n += 1;
        wins += usize::from(w);
    }
    let next = if n == 0 {
        rate
    } else {
        let ratio = wins as f64 / n as f64;
        if ratio > TARGET_SUCCESS {
            rate * STEP_UP
        } else if ratio < TARGET_SUCCESS {
            rate * STEP_DOWN
        } else {
            rate
        }
    };
    next.clamp(RATE_FLOOR, RATE_CEIL)
}

/// New `(crossover_rate, mutation_rate)` given the outcomes of the last
/// generation. An operator with no recorded uses keeps its rate.
pub fn update_adaptive_rates(history: &[OperatorOutcome], rates: (f64, f64)) -> (f64, f64) {
    if history.is_empty() {
        return rates;
    }
    let cx = adjust(rates.0, history.iter().filter(|o| o.crossover).map(|o| o.improved));
    let mx = adjust(rates.1, history.iter().filter(|o| o.mutation).map(|o| o.improved));
    (cx, mx)
}
