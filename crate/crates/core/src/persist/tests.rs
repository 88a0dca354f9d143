use super::*;
use crate::composer::ComposerConfig;
use crate::dataio::{split, TaskType};
use crate::fixtures;
use crate::operations::HyperValue;
use crate::pipeline::Node;

fn bits(t: &crate::PredictionTable) -> Vec<u64> {
    let mut out: Vec<u64> = t.values.iter().map(|v| v.to_bits()).collect();
    if let Some(p) = &t.probabilities {
        out.extend(p.as_slice().iter().map(|v| v.to_bits()));
    }
    out
}

#[test]
fn scaling_chain_document_layout() {
    let reg = Registry::builtin();
    let p = Pipeline::new(vec![
        Node::new(0, "standard_scaling"),
        Node::new(1, "decision_tree").with_parents(vec![0]).with_param("max_depth", HyperValue::Int(3)),
        Node::new(2, "ridge").with_parents(vec![1]),
    ]);
    let data = fixtures::faculty_like();
    let fitted = p.fit(&data, 1, &reg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let doc = export_fitted(&fitted, &reg, dir.path()).unwrap();
    assert_eq!(doc.depth, 3);
    assert_eq!(doc.nodes[1].fitted_operation_path.as_deref(), Some("fitted_operations/operation_1.pfo"));
    assert_eq!(doc.nodes[1].custom_params["max_depth"], HyperValue::Int(3));
    assert_eq!(doc.nodes[1].params["max_depth"], HyperValue::Int(3));
    assert_eq!(doc.nodes[1].params["min_samples_leaf"], HyperValue::Int(1));
    let text = std::fs::read_to_string(dir.path().join("pipeline.json")).unwrap();
    assert!(text.starts_with("{\n    \"version\""));
    let order = ["\"total_pipeline_operations\"", "\"depth\"", "\"nodes\"", "\"fitted_meta\""];
    let pos: Vec<usize> = order.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
    let node_keys = [
        "\"operation_id\"",
        "\"operation_type\"",
        "\"operation_name\"",
        "\"custom_params\"",
        "\"params\"",
        "\"nodes_from\"",
    ];
    let pos: Vec<usize> = node_keys.iter().map(|k| text.find(k).unwrap()).collect();
    assert!(pos.windows(2).all(|w| w[0] < w[1]));
}

#[test]
fn unfitted_export_has_no_paths() {
    let reg = Registry::builtin();
    let dir = tempfile::tempdir().unwrap();
    let doc = export(&Pipeline::chain(&["minmax_scaling", "knn"]), None, &reg, dir.path()).unwrap();
    assert!(doc.nodes.iter().all(|n| n.fitted_operation_path.is_none()));
    assert!(!dir.path().join(FITTED_DIR).exists());
    let text = std::fs::read_to_string(dir.path().join(DOCUMENT_FILE)).unwrap();
    assert!(!text.contains("fitted_operation_path"));
    let back = import(dir.path(), &reg).unwrap();
    assert!(back.fitted.is_none());
}

#[test]
fn fitted_round_trip_predicts_identically() {
    let reg = Registry::builtin();
    let p = Pipeline::new(vec![
        Node::new(3, "standard_scaling"),
        Node::new(1, "logistic_regression").with_parents(vec![3]),
        Node::new(0, "naive_bayes_gaussian").with_parents(vec![3]),
        Node::new(2, "decision_tree").with_parents(vec![1, 0]).with_enrichment(true),
    ]);
    let data = fixtures::ionosphere_like();
    let fitted = p.fit(&data, 9, &reg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_fitted(&fitted, &reg, dir.path()).unwrap();
    let back = import(dir.path(), &reg).unwrap();
    assert_eq!(back.pipeline.canonical_signature(), p.canonical_signature());
    let again = back.fitted.unwrap();
    assert_eq!(bits(&fitted.predict(&data).unwrap()), bits(&again.predict(&data).unwrap()));
}

#[test]
fn dangling_parent_is_reported() {
    let reg = Registry::builtin();
    let mut doc = PipelineDocument::from_pipeline(&Pipeline::chain(&["standard_scaling", "pca_topk", "ridge"]), &reg);
    doc.nodes[2].nodes_from = vec![99];
    let err = doc.to_pipeline(&reg).unwrap_err();
    assert!(matches!(err, PersistError::DanglingReference(_)), "{err}");
}

#[test]
fn schema_errors_name_the_field() {
    let text = r#"{"version": "pipeforge/1", "total_pipeline_operations": {}, "depth": "three", "nodes": []}"#;
    match PipelineDocument::from_json(text) {
        Err(PersistError::Schema { location, .. }) => assert_eq!(location, "depth"),
        other => panic!("{other:?}"),
    }
    let reg = Registry::builtin();
    let mut doc = PipelineDocument::from_pipeline(&Pipeline::single("ridge"), &reg);
    doc.nodes[0].operation_type = "gradient_boosting".into();
    assert!(matches!(doc.to_pipeline(&reg), Err(PersistError::UnknownOperation(_))));
}

#[test]
fn missing_state_file_is_dangling() {
    let reg = Registry::builtin();
    let fitted = Pipeline::single("ridge").fit(&fixtures::faculty_like(), 0, &reg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_fitted(&fitted, &reg, dir.path()).unwrap();
    std::fs::remove_file(dir.path().join("fitted_operations/operation_0.pfo")).unwrap();
    assert!(matches!(import(dir.path(), &reg), Err(PersistError::DanglingReference(_))));
}

#[test]
fn container_rejects_corruption() {
    let reg = Registry::builtin();
    let fitted = Pipeline::single("knn").fit(&fixtures::faculty_like(), 0, &reg).unwrap();
    let bytes = container::encode(fitted.state(0).unwrap()).unwrap();
    assert_eq!(&bytes[..4], b"PFOP");
    assert_eq!(&container::decode(&bytes).unwrap(), fitted.state(0).unwrap());
    let mut bad = bytes.clone();
    bad[0] = b'X';
    assert!(container::decode(&bad).is_err());
    assert!(container::decode(&bytes[..bytes.len() - 1]).is_err());
}

#[test]
fn atomized_wrapper_matches_original() {
    let reg = Registry::builtin();
    let data = fixtures::esl_like();
    let inner = Pipeline::chain(&["standard_scaling", "knn", "ridge"]);
    let fitted = inner.fit(&data, 5, &reg).unwrap();
    let atom = Arc::new(atomize(&fitted, &reg));
    assert_eq!(bits(&atom.predict(&data).unwrap()), bits(&fitted.predict(&data).unwrap()));

    let mut reg2 = reg.clone();
    reg2.register_atomized(atom.clone());
    let wrapper = Pipeline::single(atom.id());
    let wrapped = wrapper.fit(&data, 5, &reg2).unwrap();
    assert_eq!(bits(&wrapped.predict(&data).unwrap()), bits(&fitted.predict(&data).unwrap()));

    let two = Pipeline::new(vec![Node::new(0, atom.id()), Node::new(1, "ridge").with_parents(vec![0])]);
    let two_fit = two.fit(&data, 5, &reg2).unwrap();
    assert_eq!(two_fit.predict(&data).unwrap().len(), data.rows());

    let dir = tempfile::tempdir().unwrap();
    export_fitted(&wrapped, &reg2, dir.path()).unwrap();
    let back = import(dir.path(), &reg).unwrap();
    assert!(back.registry.atomized(atom.id()).is_some());
    assert_eq!(bits(&back.fitted.unwrap().predict(&data).unwrap()), bits(&fitted.predict(&data).unwrap()));
    assert_eq!(crate::composer::weighted_nodes(&wrapper, &reg2), 3);
}

#[test]
fn nested_atomization_round_trips() {
    let reg = Registry::builtin();
    let data = fixtures::faculty_like();
    let f1 = Pipeline::chain(&["minmax_scaling", "ridge"]).fit(&data, 1, &reg).unwrap();
    let a1 = Arc::new(atomize(&f1, &reg));
    let mut r1 = reg.clone();
    r1.register_atomized(a1.clone());
    let mid = Pipeline::new(vec![Node::new(0, a1.id()), Node::new(1, "knn").with_parents(vec![0])]);
    let f2 = mid.fit(&data, 1, &r1).unwrap();
    let a2 = Arc::new(atomize(&f2, &r1));
    let mut r2 = reg.clone();
    r2.register_atomized(a2.clone());
    let outer = Pipeline::new(vec![Node::new(0, a2.id()), Node::new(1, "decision_tree").with_parents(vec![0])]);
    let f3 = outer.fit(&data, 1, &r2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    export_fitted(&f3, &r2, dir.path()).unwrap();
    let back = import(dir.path(), &reg).unwrap();
    assert_eq!(back.pipeline.canonical_signature(), outer.canonical_signature());
    let inner = back.registry.atomized(a2.id()).unwrap();
    assert_eq!(inner.inner.canonical_signature(), mid.canonical_signature());
    assert_eq!(bits(&back.fitted.unwrap().predict(&data).unwrap()), bits(&f3.predict(&data).unwrap()));
    assert_eq!(crate::composer::weighted_nodes(&outer, &r2), 4);
}

#[test]
fn data_archive_is_written() {
    let data = fixtures::elusage_like();
    let (train, valid) = split(&data, 0.75, 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_data_archive(dir.path(), &train, &valid).unwrap();
    assert!(dir.path().join("data/train.csv").exists());
    assert!(dir.path().join("data/validation.csv").exists());
}

#[test]
fn adapt_with_no_generations_keeps_the_wrapper() {
    let reg = Registry::builtin();
    let data = fixtures::spect_like();
    let (old, new) = split(&data, 0.5, 3).unwrap();
    let fitted = Pipeline::chain(&["standard_scaling", "logistic_regression"]).fit(&old, 0, &reg).unwrap();
    let cfg = ComposerConfig { max_generations: 0, pop_size: 4, ..ComposerConfig::for_task(TaskType::Classification) };
    let id = atomize(&fitted, &reg).id().to_string();
    let res = adapt(&fitted, &new, &cfg, &reg).unwrap();
    let wrapper = res.population.iter().find(|i| i.pipeline == Pipeline::single(&id)).expect("wrapper kept");
    let score = wrapper.fitness.as_ref().unwrap()[0];
    assert!(score > 0.5);
    assert!(res.front.members[0].fitness.as_ref().unwrap()[0] >= score);
    let again = adapt(&fitted, &new, &cfg, &reg).unwrap();
    assert_eq!(res.front, again.front);
}
