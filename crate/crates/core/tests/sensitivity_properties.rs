use proptest::prelude::*;

use pipeforge::composer::{holdout_fitness, holdout_folds, holdout_predictions};
use pipeforge::dataio::{Dataset, Metric};
use pipeforge::operations::OperationSpec;
use pipeforge::pipeline::{Node, Pipeline};
use pipeforge::sensitivity::{analyze, importance_from_scores, sustainability, SAConfig};
use pipeforge::{fixtures, seed, Registry};

fn scores_strategy() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1usize..10).prop_flat_map(|n| (prop::collection::vec(1e-3f64..1e3, n), prop::collection::vec(0.0f64..1e3, n)))
}

proptest! {
    #[test]
    fn power_of_two_rescaling_leaves_importance_exact((base, modified) in scores_strategy(), k in -20i32..20) {
        let c = 2f64.powi(k);
        let scaled_base: Vec<f64> = base.iter().map(|b| b * c).collect();
        let scaled_modified: Vec<f64> = modified.iter().map(|m| m * c).collect();
        prop_assert_eq!(
            importance_from_scores(&base, &modified).to_bits(),
            importance_from_scores(&scaled_base, &scaled_modified).to_bits()
        );
    }

    #[test]
    fn positive_rescaling_keeps_the_sign(base in 1e-3f64..1e3, modified in 0.0f64..1e3, c in 1e-3f64..1e3) {
        let a = importance_from_scores(&[base], &[modified]);
        let b = importance_from_scores(&[base * c], &[modified * c]);
        prop_assert!((a - b).abs() <= 1e-12 * (1.0 + a.abs()));
        if a.abs() > 1e-9 {
            prop_assert_eq!(a < 0.0, b < 0.0);
        }
    }

    #[test]
    fn sustainability_is_a_share(n_total in 1usize..100, frac in 0.0f64..=1.0) {
        let n_del = (frac * n_total as f64).floor() as usize;
        let s = sustainability(n_del, n_total);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s == 1.0, n_del == 0);
    }
}

/// Mean fitness of `p` on the split and seeds an analysis with `cfg` uses.
fn rescore(p: &Pipeline, data: &Dataset, cfg: &SAConfig, reg: &Registry) -> f64 {
    let (fit, valid) = holdout_folds(data, cfg.validation_split, seed::mix(cfg.seed, 0x5A)).unwrap();
    let scores: Vec<f64> = (0..cfg.iterations as u64)
        .map(|i| match holdout_predictions(p, &fit, &valid, seed::mix(cfg.seed, i), reg) {
            Ok(t) => holdout_fitness(cfg.metric, &t, &valid),
            Err(_) => 0.0,
        })
        .collect();
    scores.iter().sum::<f64>() / scores.len() as f64
}

#[test]
fn deleting_a_reported_candidate_does_not_lower_the_score() {
    let mut reg = Registry::builtin();
    reg.insert(OperationSpec::label_shuffle()).unwrap();
    let data = fixtures::ionosphere_like();
    let pipelines = [
        Pipeline::chain(&["label_shuffle", "standard_scaling", "decision_tree"]),
        Pipeline::new(vec![
            Node::new(0, "label_shuffle"),
            Node::new(1, "minmax_scaling"),
            Node::new(2, "merge_concat").with_parents(vec![0, 1]),
            Node::new(3, "logistic_regression").with_parents(vec![2]),
        ]),
        Pipeline::chain(&["pca_topk", "knn"]),
    ];
    let mut candidates = 0;
    for p in &pipelines {
        for s in 0..3 {
            let cfg = SAConfig { iterations: 2, seed: s, ..SAConfig::new(Metric::RocAuc) };
            let report = analyze(p, &data, &cfg, &reg).unwrap();
            let base = rescore(p, &data, &cfg, &reg);
            assert!((base - report.base_score).abs() < 1e-12);
            for (id, node) in &report.per_node {
                if node.delete_improves {
                    candidates += 1;
                    let after = rescore(&p.without_node(*id).unwrap(), &data, &cfg, &reg);
                    assert!(after >= base, "deleting node {id} of {p:?}: {after} < {base}");
                }
            }
        }
    }
    assert!(candidates > 0, "no fixture produced a delete candidate");
}
