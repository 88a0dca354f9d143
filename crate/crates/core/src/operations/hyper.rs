//! Hyperparameter values and search domains.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum HyperValue {
    Int(i64),
    Float(f64),
    Str(String),
}

impl HyperValue {
    pub fn as_f64(&self) -> Option<f64> {
        match self {
            HyperValue::Int(v) => Some(*v as f64),
            HyperValue::Float(v) => Some(*v),
            HyperValue::Str(_) => None,
        }
    }

    pub fn as_i64(&self) -> Option<i64> {
        match self {
            HyperValue::Int(v) => Some(*v),
            HyperValue::Float(v) if v.fract() == 0.0 => Some(*v as i64),
            _ => None,
        }
    }

    /// Stable textual form used in signatures.
    pub fn canonical(&self) -> String {
        match self {
            HyperValue::Int(v) => format!("i{v}"),
            HyperValue::Float(v) => format!("f{v:?}"),
            HyperValue::Str(s) => format!("s{s:?}"),
        }
    }
}

impl std::fmt::Display for HyperValue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HyperValue::Int(v) => write!(f, "{v}"),
            HyperValue::Float(v) => write!(f, "{v}"),
            HyperValue::Str(s) => f.write_str(s),
        }
    }
}

pub type HyperParams = BTreeMap<String, HyperValue>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    #[default]
    Linear,
    Log,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Domain {
    Int {
        low: i64,
        high: i64,
    },
    Float {
        low: f64,
        high: f64,
        #[serde(default)]
        scale: Scale,
    },
    Categorical {
        choices: Vec<String>,
    },
}

impl Domain {
    pub fn contains(&self, value: &HyperValue) -> bool {
        match (self, value) {
            (Domain::Int { low, high }, v) => v.as_i64().is_some_and(|x| x >= *low && x <= *high),
            (Domain::Float { low, high, .. }, v) => {
                v.as_f64().is_some_and(|x| x.is_finite() && x >= *low && x <= *high)
            }
            (Domain::Categorical { choices }, HyperValue::Str(s)) => choices.contains(s),
            _ => false,
        }
    }

    /// Converts a value into the domain's native representation
    /// (e.g. an integer literal given for a float dimension).
    pub fn coerce(&self, value: HyperValue) -> HyperValue {
        match (self, value) {
            (Domain::Float { .. }, HyperValue::Int(v)) => HyperValue::Float(v as f64),
            (Domain::Int { .. }, HyperValue::Float(v)) if v.fract() == 0.0 => HyperValue::Int(v as i64),
            (_, v) => v,
        }
    }

    pub fn is_well_formed(&self) -> bool {
        match self {
            Domain::Int { low, high } => low <= high,
            Domain::Float { low, high, scale } => {
                low.is_finite() && high.is_finite() && low <= high && (*scale == Scale::Linear || *low > 0.0)
            }
            Domain::Categorical { choices } => !choices.is_empty(),
        }
    }

    /// Uniform draw; log-scaled float dimensions are sampled log-uniformly.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> HyperValue {
        match self {
            Domain::Int { low, high } => HyperValue::Int(rng.gen_range(*low..=*high)),
            Domain::Float { low, high, scale: Scale::Linear } => {
                HyperValue::Float(if low == high { *low } else { rng.gen_range(*low..=*high) })
            }
            Domain::Float { low, high, scale: Scale::Log } => {
                let (a, b) = (low.ln(), high.ln());
                let v = if a == b { a } else { rng.gen_range(a..=b) };
                HyperValue::Float(v.exp().clamp(*low, *high))
            }
            Domain::Categorical { choices } => HyperValue::Str(choices[rng.gen_range(0..choices.len())].clone()),
        }
    }

    /// Local move around `value`: Gaussian step of 10% of the (log-)range for
    /// numeric dimensions, occasional resample for categorical ones.
    pub fn perturb<R: Rng + ?Sized>(&self, value: &HyperValue, rng: &mut R) -> HyperValue {
        match self {
            Domain::Int { low, high } => {
                let x = value.as_i64().unwrap_or(*low) as f64;
                let sd = ((high - low) as f64 * 0.1).max(0.5);
                let step = Normal::new(0.0, sd).expect("finite sd").sample(rng);
                HyperValue::Int(((x + step).round() as i64).clamp(*low, *high))
            }
            Domain::Float { low, high, scale } => {
                let x = value.as_f64().unwrap_or(*low);
                let (a, b, x) = match scale {
                    Scale::Linear => (*low, *high, x),
                    Scale::Log => (low.ln(), high.ln(), x.max(*low).ln()),
                };
                let sd = ((b - a) * 0.1).max(f64::MIN_POSITIVE);
                let y = (x + Normal::new(0.0, sd).expect("finite sd").sample(rng)).clamp(a, b);
                let y = match scale {
                    Scale::Linear => y,
                    Scale::Log => y.exp().clamp(*low, *high),
                };
                HyperValue::Float(y)
            }
            Domain::Categorical { .. } => {
                if rng.gen_bool(0.2) {
                    self.sample(rng)
                } else {
                    value.clone()
                }
            }
        }
    }
}
