use proptest::prelude::*;

use pipeforge::composer::{ComposerConfig, OperatorContext};
use pipeforge::dataio::{Dataset, TaskType};
use pipeforge::pipeline::Pipeline;
use pipeforge::tuner::{tune, TuningConfig, TuningStrategy};
use pipeforge::{fixtures, seed, Registry};

fn data_for(task: TaskType) -> Dataset {
    match task {
        TaskType::Classification => fixtures::spect_like(),
        _ => fixtures::faculty_like(),
    }
}

fn tunable_nodes(p: &Pipeline, reg: &Registry) -> usize {
    p.nodes().iter().filter(|n| reg.spec(&n.operation_id).is_some_and(|s| s.has_tunable_params())).count()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn tuning_keeps_topology_and_never_loses(
        classification in any::<bool>(),
        s in any::<u64>(),
        iterations in 1usize..8,
    ) {
        let task = if classification { TaskType::Classification } else { TaskType::Regression };
        let reg = Registry::builtin();
        let data = data_for(task);
        let ctx = OperatorContext::new(&reg, task, ComposerConfig::for_task(task).rules());
        let p = ctx.random_valid(&mut seed::rng(s), 500).unwrap();
        let tunable = tunable_nodes(&p, &reg);
        for strategy in [TuningStrategy::SerialIsolated, TuningStrategy::Sequential, TuningStrategy::Simultaneous] {
            let cfg = TuningConfig { strategy, iterations, seed: s, ..TuningConfig::new(task.default_metric()) };
            let Ok((out, report)) = tune(&p, &data, &cfg, &reg) else { continue };
            prop_assert_eq!(out.topology_signature(), p.topology_signature());
            prop_assert!(report.score_after >= report.score_before, "{strategy:?}: {report:?}");
            prop_assert_eq!(report.untunable, tunable == 0);
            if report.untunable {
                prop_assert_eq!(&out, &p);
                continue;
            }
            match strategy {
                TuningStrategy::Simultaneous => prop_assert_eq!(report.full_evaluations, 1 + iterations),
                TuningStrategy::Sequential => prop_assert_eq!(report.full_evaluations, 1 + tunable * iterations),
                TuningStrategy::SerialIsolated => {
                    prop_assert!(report.full_evaluations <= 2);
                    prop_assert_eq!(report.subtree_evaluations, tunable * (iterations + 1));
                }
            }
        }
    }
}
