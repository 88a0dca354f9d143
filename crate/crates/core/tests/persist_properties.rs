use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;

use pipeforge::composer::{weighted_nodes, ComposerConfig, OperatorContext};
use pipeforge::dataio::{split, TaskType};
use pipeforge::persist::{atomize, export, export_fitted, import, PipelineDocument};
use pipeforge::pipeline::Pipeline;
use pipeforge::{fixtures, seed, Registry};

fn random_pipeline(reg: &Registry, task: TaskType, s: u64) -> Pipeline {
    let ctx = OperatorContext::new(reg, task, ComposerConfig::for_task(task).rules());
    ctx.random_valid(&mut seed::rng(s), 500).unwrap()
}

fn recount(doc: &PipelineDocument) -> BTreeMap<String, usize> {
    let mut counts = BTreeMap::new();
    for n in &doc.nodes {
        *counts.entry(n.operation_type.clone()).or_insert(0) += 1;
    }
    counts
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn structure_survives_export_and_import(classification in any::<bool>(), s in any::<u64>()) {
        let task = if classification { TaskType::Classification } else { TaskType::Regression };
        let reg = Registry::builtin();
        let p = random_pipeline(&reg, task, s);
        let dir = tempfile::tempdir().unwrap();
        let doc = export(&p, None, &reg, dir.path()).unwrap();
        prop_assert_eq!(&doc.total_pipeline_operations, &recount(&doc));
        prop_assert_eq!(&doc.total_pipeline_operations, &p.operation_counts());
        let back = import(dir.path(), &reg).unwrap();
        prop_assert_eq!(back.pipeline.canonical_signature(), p.canonical_signature());
        prop_assert_eq!(&back.document, &doc);
        prop_assert!(back.fitted.is_none());
        // A second pass is byte-stable.
        let again = tempfile::tempdir().unwrap();
        export(&back.pipeline, None, &back.registry, again.path()).unwrap();
        prop_assert_eq!(
            std::fs::read(dir.path().join("pipeline.json")).unwrap(),
            std::fs::read(again.path().join("pipeline.json")).unwrap()
        );
    }

    #[test]
    fn fitted_pipelines_predict_identically_after_import(s in any::<u64>()) {
        let reg = Registry::builtin();
        let data = if s % 2 == 0 { fixtures::spect_like() } else { fixtures::faculty_like() };
        let (train, test) = split(&data, 0.75, s).unwrap();
        let p = random_pipeline(&reg, data.task, s);
        let Ok(fitted) = p.fit(&train, s, &reg) else { return Ok(()) };
        let dir = tempfile::tempdir().unwrap();
        let doc = export_fitted(&fitted, &reg, dir.path()).unwrap();
        prop_assert_eq!(&doc.total_pipeline_operations, &recount(&doc));
        let back = import(dir.path(), &reg).unwrap().fitted.unwrap();
        prop_assert_eq!(back.predict(&test).unwrap().to_csv(), fitted.predict(&test).unwrap().to_csv());
    }
}

#[test]
fn atomized_wrapper_survives_export_and_import() {
    let reg = Registry::builtin();
    for (i, data) in
        [fixtures::esl_like(), fixtures::ionosphere_like(), fixtures::elusage_like()].into_iter().enumerate()
    {
        let (train, test) = split(&data, 0.75, i as u64).unwrap();
        let inner = random_pipeline(&reg, data.task, 40 + i as u64).fit(&train, 3, &reg).unwrap();
        let expected = inner.predict(&test).unwrap().to_csv();
        let atom = Arc::new(atomize(&inner, &reg));
        assert_eq!(atom.predict(&test).unwrap().to_csv(), expected);

        let mut with_atom = reg.clone();
        with_atom.register_atomized(atom.clone());
        let wrapper = Pipeline::single(atom.id());
        assert_eq!(weighted_nodes(&wrapper, &with_atom), inner.pipeline().len());
        let fitted = wrapper.fit(&train, 3, &with_atom).unwrap();
        assert_eq!(fitted.predict(&test).unwrap().to_csv(), expected);

        let dir = tempfile::tempdir().unwrap();
        let doc = export_fitted(&fitted, &with_atom, dir.path()).unwrap();
        assert_eq!(doc.total_pipeline_operations, recount(&doc));
        let back = import(dir.path(), &reg).unwrap();
        assert!(back.registry.atomized(atom.id()).is_some());
        assert_eq!(back.fitted.unwrap().predict(&test).unwrap().to_csv(), expected);
    }
}
