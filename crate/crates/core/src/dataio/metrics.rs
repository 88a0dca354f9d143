use serde::{Deserialize, Serialize};

use super::DataError;
use crate::matrix::Matrix;

/// Final output of a fitted pipeline.
///
/// `values` holds class labels for classification and predicted values
/// otherwise; `rows` are the row identifiers the predictions belong to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionTable {
    pub rows: Vec<usize>,
    pub values: Vec<f64>,
    pub probabilities: Option<Matrix>,
}

impl PredictionTable {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// CSV dump: `row,prediction` plus one `p_<k>` column per class when
    /// probabilities are present. Floats use shortest round-trip formatting.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("row,prediction");
        if let Some(p) = &self.probabilities {
            for k in 0..p.cols() {
                out.push_str(&format!(",p_{k}"));
            }
        }
        out.push('\n');
        for (i, (r, v)) in self.rows.iter().zip(&self.values).enumerate() {
            out.push_str(&format!("{r},{v:?}"));
            if let Some(p) = &self.probabilities {
                for k in 0..p.cols() {
                    out.push_str(&format!(",{:?}", p.get(i, k)));
                }
            }
            out.push('\n');
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "MAE")]
    Mae,
    #[serde(rename = "RMSE")]
    Rmse,
    #[serde(rename = "F1")]
    F1,
    #[serde(rename = "ROC_AUC")]
    RocAuc,
    #[serde(rename = "MAPE")]
    Mape,
}

impl Metric {
    pub fn higher_is_better(self) -> bool {
        matches!(self, Metric::F1 | Metric::RocAuc)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Mae => "MAE",
            Metric::Rmse => "RMSE",
            Metric::F1 => "F1",
            Metric::RocAuc => "ROC_AUC",
            Metric::Mape => "MAPE",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "mae" => Some(Metric::Mae),
            "rmse" => Some(Metric::Rmse),
            "f1" => Some(Metric::F1),
            "roc_auc" | "rocauc" | "auc" => Some(Metric::RocAuc),
            "mape" => Some(Metric::Mape),
            _ => None,
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub metric: Metric,
    pub value: f64,
    pub higher_is_better: bool,
}

impl MetricValue {
    pub fn new(metric: Metric, value: f64) -> Self {
        Self { metric, value, higher_is_better: metric.higher_is_better() }
    }
}

fn check_len(p: usize, t: usize) -> Result<(), DataError> {
    if p != t {
        return Err(DataError::LengthMismatch { predictions: p, truth: t });
    }
    Ok(())
}

pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64, DataError> {
    check_len(pred.len(), truth.len())?;
    let n = truth.len().max(1) as f64;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / n)
}

pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64, DataError> {
    check_len(pred.len(), truth.len())?;
    let n = truth.len().max(1) as f64;
    Ok((pred.iter().zip(truth).map(|(p, t)| (p - t) * (p - t)).sum::<f64>() / n).sqrt())
}

/// Mean absolute percentage error, in percent.
pub fn mape(pred: &[f64], truth: &[f64]) -> Result<f64, DataError> {
    check_len(pred.len(), truth.len())?;
    if let Some(i) = truth.iter().position(|&t| t == 0.0) {
        return Err(DataError::ZeroDenominator(i));
    }
    let n = truth.len().max(1) as f64;
    Ok(100.0 * pred.iter().zip(truth).map(|(p, t)| ((t - p) / t).abs()).sum::<f64>() / n)
}

/// F1 of the positive class for binary labels, macro-averaged otherwise.
pub fn f1_score(pred: &[f64], truth: &[f64]) -> Result<f64, DataError> {
    check_len(pred.len(), truth.len())?;
    let k = pred.iter().chain(truth).fold(0.0_f64, |m, &v| m.max(v)).round() as usize + 1;
    let class_f1 = |c: usize| {
        let (mut tp, mut fp, mut fneg) = (0usize, 0usize, 0usize);
        for (p, t) in pred.iter().zip(truth) {
            let (p, t) = (p.round() as usize, t.round() as usize);
            match (p == c, t == c) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fneg += 1,
                _ => {}
            }
        }
        let denom = 2 * tp + fp + fneg;
        if denom == 0 {
            0.0
        } else {
            2.0 * tp as f64 / denom as f64
        }
    };
    if k <= 2 {
        Ok(class_f1(1))
    } else {
        Ok((0..k).map(class_f1).sum::<f64>() / k as f64)
    }
}

/// Binary ROC AUC via the rank statistic with mid-ranks for tied scores.
fn binary_auc(scores: &[f64], positive: &[bool]) -> Result<f64, DataError> {
    let n_pos = positive.iter().filter(|&&p| p).count();
    let n_neg = positive.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(DataError::DegenerateClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut ranks = vec![0.0; scores.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            ranks[o] = mid;
        }
        i = j + 1;
    }
    let rank_sum: f64 = ranks.iter().zip(positive).filter(|(_, &p)| p).map(|(r, _)| r).sum();
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// ROC AUC from a probability matrix (one column per class). Binary problems
/// use the class-1 column; multi-class problems average one-vs-rest AUCs over
/// classes present in `truth`.
pub fn roc_auc(probabilities: &Matrix, truth: &[f64]) -> Result<f64, DataError> {
    check_len(probabilities.rows(), truth.len())?;
    let k = probabilities.cols();
    if k <= 2 {
        let col = if k == 2 { 1 } else { 0 };
        let positive: Vec<bool> = truth.iter().map(|&t| t.round() as usize == 1).collect();
        return binary_auc(&probabilities.column(col), &positive);
    }
    let mut total = 0.0;
    let mut counted = 0;
    for c in 0..k {
        let positive: Vec<bool> = truth.iter().map(|&t| t.round() as usize == c).collect();
        match binary_auc(&probabilities.column(c), &positive) {
            Ok(v) => {
                total += v;
                counted += 1;
            }
            Err(DataError::DegenerateClass) => continue,
            Err(e) => return Err(e),
        }
    }
    if counted == 0 {
        return Err(DataError::DegenerateClass);
    }
    Ok(total / counted as f64)
}

pub fn evaluate_metric(metric: Metric, predictions: &PredictionTable, truth: &[f64]) -> Result<MetricValue, DataError> {
    let value = match metric {
        Metric::Mae => mae(&predictions.values, truth)?,
        Metric::Rmse => rmse(&predictions.values, truth)?,
        Metric::Mape => mape(&predictions.values, truth)?,
        Metric::F1 => f1_score(&predictions.values, truth)?,
        Metric::RocAuc => {
            let probs = predictions
                .probabilities
                .as_ref()
                .ok_or(DataError::MissingScores { metric: "ROC_AUC", what: "probability scores" })?;
            roc_auc(probs, truth)?
        }
    };
    Ok(MetricValue::new(metric, value))
}

/// Converts a metric to a positive higher-is-better score: identity for F1 and
/// ROC AUC, `1 / (1 + value)` for error metrics.
pub fn to_fitness_score(metric_value: &MetricValue) -> f64 {
    if metric_value.higher_is_better {
        metric_value.value
    } else {
        1.0 / (1.0 + metric_value.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(values: Vec<f64>, probs: Option<Matrix>) -> PredictionTable {
        PredictionTable { rows: (0..values.len()).collect(), values, probabilities: probs }
    }

    #[test]
    fn mae_of_perfect_prediction_is_zero() {
        let v = evaluate_metric(Metric::Mae, &table(vec![1.0, 2.0, 3.0], None), &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(!v.higher_is_better);
    }

    #[test]
    fn auc_of_separating_scores_is_one() {
        let probs = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.8, 0.2], vec![0.3, 0.7], vec![0.1, 0.9]]);
        let v = evaluate_metric(Metric::RocAuc, &table(vec![0.0, 0.0, 1.0, 1.0], Some(probs)), &[0.0, 0.0, 1.0, 1.0])
            .unwrap();
        assert_eq!(v.value, 1.0);
        assert!(v.higher_is_better);
    }

    #[test]
    fn mape_is_in_percent() {
        assert!((mape(&[90.0], &[100.0]).unwrap() - 10.0).abs() < 1e-12);
        assert!(matches!(mape(&[1.0], &[0.0]), Err(DataError::ZeroDenominator(0))));
    }

    #[test]
    fn auc_needs_two_classes_and_scores() {
        let probs = Matrix::column_vector(&[0.1, 0.2]);
        assert!(matches!(roc_auc(&probs, &[1.0, 1.0]), Err(DataError::DegenerateClass)));
        assert!(matches!(
            evaluate_metric(Metric::RocAuc, &table(vec![1.0, 0.0], None), &[1.0, 0.0]),
            Err(DataError::MissingScores { .. })
        ));
    }

    #[test]
    fn auc_handles_ties_with_midranks() {
        let probs = Matrix::column_vector(&[0.5, 0.5, 0.5, 0.5]);
        assert_eq!(roc_auc(&probs, &[0.0, 1.0, 0.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn f1_binary_and_macro() {
        // tp=1 fp=1 fn=1
        assert!((f1_score(&[1.0, 1.0, 0.0], &[1.0, 0.0, 1.0]).unwrap() - 0.5).abs() < 1e-12);
        let f = f1_score(&[0.0, 1.0, 2.0], &[0.0, 1.0, 2.0]).unwrap();
        assert_eq!(f, 1.0);
    }

    #[test]
    fn fitness_scores() {
        assert_eq!(to_fitness_score(&MetricValue::new(Metric::RocAuc, 0.9)), 0.9);
        assert_eq!(to_fitness_score(&MetricValue::new(Metric::Mae, 0.0)), 1.0);
        assert_eq!(to_fitness_score(&MetricValue::new(Metric::Mae, 1.0)), 0.5);
    }

    proptest! {
        #[test]
        fn rmse_dominates_mae(pairs in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 1..40)) {
            let (p, t): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
            prop_assert!(rmse(&p, &t).unwrap() + 1e-9 >= mae(&p, &t).unwrap());
        }

        #[test]
        fn metrics_are_permutation_invariant(
            pairs in prop::collection::vec((0.01f64..1.0, 1.0f64..10.0, 0usize..2), 2..30),
            rot in 0usize..30,
        ) {
            let n = pairs.len();
            let perm: Vec<usize> = (0..n).map(|i| (i * 7 + rot) % n).collect();
            let mut seen = perm.clone();
            seen.sort_unstable();
            seen.dedup();
            prop_assume!(seen.len() == n);
            let score: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let val: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            let lab: Vec<f64> = pairs.iter().map(|p| p.2 as f64).collect();
            let ps: Vec<f64> = perm.iter().map(|&i| score[i]).collect();
            let pv: Vec<f64> = perm.iter().map(|&i| val[i]).collect();
            let pl: Vec<f64> = perm.iter().map(|&i| lab[i]).collect();
            let close = |a: f64, b: f64| (a - b).abs() <= 1e-9 * (1.0 + a.abs());
            prop_assert!(close(mae(&score, &val).unwrap(), mae(&ps, &pv).unwrap()));
            prop_assert!(close(rmse(&score, &val).unwrap(), rmse(&ps, &pv).unwrap()));
            prop_assert!(close(mape(&score, &val).unwrap(), mape(&ps, &pv).unwrap()));
            let rounded: Vec<f64> = score.iter().map(|s| s.round()).collect();
            let prounded: Vec<f64> = ps.iter().map(|s| s.round()).collect();
            prop_assert_eq!(f1_score(&rounded, &lab).unwrap(), f1_score(&prounded, &pl).unwrap());
            let a = roc_auc(&Matrix::column_vector(&score), &lab);
            let b = roc_auc(&Matrix::column_vector(&ps), &pl);
            match (a, b) {
                (Ok(a), Ok(b)) => prop_assert!(close(a, b)),
                (Err(_), Err(_)) => {}
                _ => prop_assert!(false, "auc disagreed on degeneracy"),
            }
        }

        #[test]
        fn flipped_labels_complement_auc(
            pairs in prop::collection::vec((0.0f64..1.0, 0usize..2), 2..40),
        ) {
            let score: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let lab: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
            let flipped: Vec<f64> = lab.iter().map(|l| 1.0 - l).collect();
            let m = Matrix::column_vector(&score);
            if let (Ok(a), Ok(b)) = (roc_auc(&m, &lab), roc_auc(&m, &flipped)) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn fitness_score_is_monotone(a in 0.0f64..1e3, b in 0.0f64..1e3) {
            prop_assume!(a < b);
            let fa = to_fitness_score(&MetricValue::new(Metric::Rmse, a));
            let fb = to_fitness_score(&MetricValue::new(Metric::Rmse, b));
            prop_assert!(fa > fb);
        }
    }
}
