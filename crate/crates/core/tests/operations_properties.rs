use proptest::prelude::*;
use rand::Rng;

use pipeforge::dataio::{split, Dataset, TaskType};
use pipeforge::operations::{op_fit, op_predict, FitContext, HyperParams, HyperValue, OperationKind};
use pipeforge::pipeline::{Node, Pipeline};
use pipeforge::{fixtures, seed, Matrix, Registry};

fn random_table(task: TaskType, rows: usize, cols: usize, s: u64) -> Dataset {
    let mut rng = seed::rng(s);
    let x: Vec<f64> = (0..rows * cols).map(|_| rng.gen_range(-3.0..3.0)).collect();
    let y: Vec<f64> = match task {
        TaskType::Classification => (0..rows).map(|i| (i % 2) as f64).collect(),
        _ => (0..rows).map(|_| rng.gen_range(-10.0..10.0)).collect(),
    };
    Dataset::new(Matrix::from_vec(rows, cols, x), y, task).unwrap()
}

fn model_for(task: TaskType) -> &'static str {
    match task {
        TaskType::Classification => "logistic_regression",
        _ => "ridge",
    }
}

/// Smallest pipeline that exercises `op` for `task`.
fn harness(reg: &Registry, op: &str, task: TaskType) -> Pipeline {
    let spec = reg.spec(op).unwrap();
    let model = model_for(task);
    if task == TaskType::TsForecasting {
        let lag = |id: usize| Node::new(id, "lagged_transform").with_param("window", HyperValue::Int(3));
        let nodes = match op {
            "lagged_transform" => vec![lag(0), Node::new(1, model).with_parents(vec![0])],
            "moving_average_smoothing" => {
                vec![Node::new(0, op), lag(1).with_parents(vec![0]), Node::new(2, model).with_parents(vec![1])]
            }
            _ if spec.kind.produces_predictions() => vec![lag(0), Node::new(1, op).with_parents(vec![0])],
            _ => vec![lag(0), Node::new(1, op).with_parents(vec![0]), Node::new(2, model).with_parents(vec![1])],
        };
        return Pipeline::new(nodes);
    }
    match spec.kind {
        OperationKind::Model | OperationKind::TaskSpecificModel => Pipeline::single(op),
        OperationKind::DataFlow => Pipeline::new(vec![
            Node::new(0, "standard_scaling"),
            Node::new(1, "minmax_scaling"),
            Node::new(2, op).with_parents(vec![0, 1]),
            Node::new(3, model).with_parents(vec![2]),
        ]),
        OperationKind::DataProcessing => Pipeline::chain(&[op, model]),
    }
}

#[test]
fn every_registry_entry_fits_and_predicts_on_twenty_rows() {
    let reg = Registry::builtin();
    let mut checked = 0;
    for spec in reg.specs() {
        for &task in &spec.tasks {
            let p = harness(&reg, &spec.operation_id, task);
            if task == TaskType::TsForecasting {
                let series = fixtures::synthetic_series(20, 3);
                let data = Dataset::time_series(series.clone(), 2);
                let fitted = p.fit(&data, 1, &reg).unwrap_or_else(|e| panic!("{} on ts: {e:?}", spec.operation_id));
                let f = fitted.forecast(&series, 2).unwrap();
                assert_eq!(f.len(), 2);
                assert!(f.iter().all(|v| v.is_finite()), "{}: {f:?}", spec.operation_id);
            } else {
                let data = random_table(task, 20, 3, 9);
                let fitted =
                    p.fit(&data, 1, &reg).unwrap_or_else(|e| panic!("{} on {task:?}: {e:?}", spec.operation_id));
                let table = fitted.predict(&data).unwrap();
                assert_eq!(table.len(), 20, "{}", spec.operation_id);
                assert!(table.values.iter().all(|v| v.is_finite()), "{}", spec.operation_id);
            }
            checked += 1;
        }
    }
    assert!(checked >= reg.len());
}

#[test]
fn data_operations_ignore_the_target_at_predict_time() {
    let reg = Registry::builtin();
    for data in [fixtures::esl_like(), fixtures::ionosphere_like()] {
        let (train, test) = split(&data, 0.75, 4).unwrap();
        let mut corrupted = test.clone();
        for (i, t) in corrupted.target.iter_mut().enumerate() {
            *t = if data.task == TaskType::Classification { ((i * 7) % 2) as f64 } else { f64::NAN };
        }
        for spec in reg.task_ops(data.task) {
            if spec.kind != OperationKind::DataProcessing {
                continue;
            }
            let p = Pipeline::chain(&[spec.operation_id.as_str(), model_for(data.task)]);
            let fitted = p.fit(&train, 2, &reg).unwrap();
            assert_eq!(
                fitted.predict(&test).unwrap().to_csv(),
                fitted.predict(&corrupted).unwrap().to_csv(),
                "{} read the target",
                spec.operation_id
            );
        }
    }
}

fn matrix_strategy() -> impl Strategy<Value = Matrix> {
    (2usize..30, 1usize..6)
        .prop_flat_map(|(r, c)| prop::collection::vec(-1e3f64..1e3, r * c).prop_map(move |v| Matrix::from_vec(r, c, v)))
}

proptest! {
    #[test]
    fn scalers_invert_within_tolerance(x in matrix_strategy()) {
        let reg = Registry::builtin();
        let ctx = FitContext { task: TaskType::Regression, n_classes: 0, seed: 0 };
        let target = vec![0.0; x.rows()];
        for op in ["standard_scaling", "minmax_scaling"] {
            let fitted = op_fit(reg.spec(op).unwrap(), &HyperParams::new(), &x, &target, &ctx).unwrap();
            let scaled = op_predict(&fitted, &x).unwrap();
            let back = fitted.inverse_transform(&scaled).unwrap();
            for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
                prop_assert!((a - b).abs() <= 1e-9, "{op}: {a} vs {b}");
            }
        }
    }
}
