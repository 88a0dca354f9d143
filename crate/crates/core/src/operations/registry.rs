use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::hyper::{Domain, HyperParams};
use super::{Builtin, OperationError, OperationKind};
use crate::dataio::TaskType;
use crate::frame::DataShape;
use crate::persist::AtomizedOperation;

/// Default registry shipped with the crate.
pub const DEFAULT_REGISTRY_JSON: &str = include_str!("../../registry/default_operations.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperationSpec {
    pub operation_id: String,
    pub display_name: String,
    pub kind: OperationKind,
    pub tags: BTreeSet<String>,
    pub tasks: BTreeSet<TaskType>,
    #[serde(default)]
    pub hyperparam_space: BTreeMap<String, Domain>,
    #[serde(default)]
    pub defaults: HyperParams,
}

impl OperationSpec {
    /// Custom values merged over the declared defaults.
    pub fn merged_params(&self, custom: &HyperParams) -> HyperParams {
        let mut params = self.defaults.clone();
        for (k, v) in custom {
            params.insert(k.clone(), v.clone());
        }
        params
    }

    pub fn has_tunable_params(&self) -> bool {
        !self.hyperparam_space.is_empty()
    }

    /// Spec for the target-permuting data-flow operation. It is implemented
    /// but not part of the default registry.
    pub fn label_shuffle() -> Self {
        Self {
            operation_id: "label_shuffle".into(),
            display_name: "LabelShuffle".into(),
            kind: OperationKind::DataFlow,
            tags: ["data_flow", "stochastic"].into_iter().map(String::from).collect(),
            tasks: [TaskType::Classification, TaskType::Regression].into_iter().collect(),
            hyperparam_space: BTreeMap::new(),
            defaults: BTreeMap::new(),
        }
    }
}

#[derive(Deserialize, Serialize)]
struct RegistryFile {
    operations: Vec<OperationSpec>,
}

/// Immutable-after-load table of operations, ordered by id.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    specs: BTreeMap<String, OperationSpec>,
    atomized: BTreeMap<String, Arc<AtomizedOperation>>,
}

impl Registry {
    /// The bundled default registry.
    pub fn builtin() -> Self {
        Self::from_json_str(DEFAULT_REGISTRY_JSON).expect("bundled registry is valid")
    }

    pub fn from_json_str(json: &str) -> Result<Self, OperationError> {
        let file: RegistryFile = serde_json::from_str(json).map_err(|e| OperationError::Registry(e.to_string()))?;
        let mut reg = Self::default();
        for spec in file.operations {
            if reg.specs.contains_key(&spec.operation_id) {
                return Err(OperationError::Registry(format!("`{}` is listed twice", spec.operation_id)));
            }
            reg.insert(spec)?;
        }
        Ok(reg)
    }

    pub fn from_path(path: impl AsRef<Path>) -> Result<Self, OperationError> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| OperationError::Registry(format!("{}: {e}", path.as_ref().display())))?;
        Self::from_json_str(&text)
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile {
            operations: self.specs.values().filter(|s| !self.atomized.contains_key(&s.operation_id)).cloned().collect(),
        };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }

    /// Adds a builtin-backed spec after checking it against its implementation.
    pub fn insert(&mut self, spec: OperationSpec) -> Result<(), OperationError> {
        let builtin = Builtin::from_id(&spec.operation_id)
            .ok_or_else(|| OperationError::Registry(format!("no implementation for `{}`", spec.operation_id)))?;
        if builtin.kind() != spec.kind {
            return Err(OperationError::Registry(format!(
                "`{}` declared as {:?} but implemented as {:?}",
                spec.operation_id,
                spec.kind,
                builtin.kind()
            )));
        }
        validate_space(&spec)?;
        let mut spec = spec;
        spec.defaults = spec
            .defaults
            .into_iter()
            .map(|(k, v)| {
                let v = spec.hyperparam_space[&k].coerce(v);
                (k, v)
            })
            .collect();
        self.specs.insert(spec.operation_id.clone(), spec);
        Ok(())
    }

    pub fn register_atomized(&mut self, op: Arc<AtomizedOperation>) {
        self.specs.insert(op.spec.operation_id.clone(), op.spec.clone());
        self.atomized.insert(op.spec.operation_id.clone(), op);
    }

    /// Registry restricted to the given operation ids (unknown ids ignored).
    pub fn restricted<S: AsRef<str>>(&self, ids: &[S]) -> Self {
        let keep: BTreeSet<&str> = ids.iter().map(AsRef::as_ref).collect();
        Self {
            specs: self
                .specs
                .iter()
                .filter(|(k, _)| keep.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
            atomized: self
                .atomized
                .iter()
                .filter(|(k, _)| keep.contains(k.as_str()))
                .map(|(k, v)| (k.clone(), v.clone()))
                .collect(),
        }
    }

    pub fn spec(&self, id: &str) -> Option<&OperationSpec> {
        self.specs.get(id)
    }

    pub fn specs(&self) -> impl Iterator<Item = &OperationSpec> {
        self.specs.values()
    }

    pub fn len(&self) -> usize {
        self.specs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.specs.is_empty()
    }

    pub fn atomized(&self, id: &str) -> Option<&Arc<AtomizedOperation>> {
        self.atomized.get(id)
    }

    pub fn atomized_ops(&self) -> impl Iterator<Item = &Arc<AtomizedOperation>> {
        self.atomized.values()
    }

    /// (input shape, output shape) of an operation.
    pub fn io_shapes(&self, id: &str) -> Option<(DataShape, DataShape)> {
        if let Some(b) = Builtin::from_id(id) {
            return Some(b.io_shapes());
        }
        self.atomized.get(id).map(|a| (a.input_shape(), DataShape::Table))
    }

    /// Operations that must sit on a primary node (consume raw data only).
    pub fn requires_raw_input(&self, id: &str) -> bool {
        self.atomized.contains_key(id)
    }

    /// Nodes an operation contributes to complexity objectives.
    pub fn node_weight(&self, id: &str) -> usize {
        self.atomized.get(id).map_or(1, |a| a.inner_node_count())
    }

    pub fn is_series_op(&self, id: &str) -> bool {
        matches!(self.io_shapes(id), Some((DataShape::Series, _)))
    }

    pub fn task_ops(&self, task: TaskType) -> Vec<&OperationSpec> {
        self.specs().filter(|s| s.tasks.contains(&task)).collect()
    }
}

fn validate_space(spec: &OperationSpec) -> Result<(), OperationError> {
    for (name, domain) in &spec.hyperparam_space {
        if !domain.is_well_formed() {
            return Err(OperationError::Registry(format!("`{}`: malformed domain for `{name}`", spec.operation_id)));
        }
        if !spec.defaults.contains_key(name) {
            return Err(OperationError::Registry(format!("`{}`: no default for `{name}`", spec.operation_id)));
        }
    }
    for (name, value) in &spec.defaults {
        let domain = spec.hyperparam_space.get(name).ok_or_else(|| {
            OperationError::Registry(format!("`{}`: default `{name}` has no domain", spec.operation_id))
        })?;
        if !domain.contains(value) {
            return Err(OperationError::Registry(format!(
                "`{}`: default {name}={value} outside its domain",
                spec.operation_id
            )));
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operations::registry_filter;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn default_registry_covers_required_operations() {
        let reg = Registry::builtin();
        for id in [
            "ols",
            "ridge",
            "logistic_regression",
            "decision_tree",
            "knn",
            "naive_bayes_gaussian",
            "standard_scaling",
            "minmax_scaling",
            "mean_imputation",
            "zscore_outlier_filter",
            "pca_topk",
            "lagged_transform",
            "moving_average_smoothing",
            "merge_concat",
        ] {
            assert!(reg.spec(id).is_some(), "{id} missing");
        }
        assert!(reg.spec("label_shuffle").is_none());
    }

    #[test]
    fn filter_by_linear_tag() {
        let reg = Registry::builtin();
        let found: Vec<&str> = registry_filter(&reg, &set(&["linear"]), &BTreeSet::new(), TaskType::Regression)
            .iter()
            .map(|s| s.operation_id.as_str())
            .collect();
        assert!(found.contains(&"ridge") && found.contains(&"ols"));
        assert!(!found.contains(&"knn") && !found.contains(&"decision_tree"));
    }

    #[test]
    fn filter_interpretable_but_not_nonlinear() {
        let reg = Registry::builtin();
        let found = registry_filter(&reg, &set(&["interpretable"]), &set(&["non-linear"]), TaskType::Regression);
        assert!(!found.is_empty());
        for s in found {
            assert!(s.tags.contains("interpretable") && s.tags.contains("linear"), "{}", s.operation_id);
        }
    }

    #[test]
    fn excluding_every_tag_gives_nothing() {
        let reg = Registry::builtin();
        let all: BTreeSet<String> = reg.specs().flat_map(|s| s.tags.iter().cloned()).collect();
        assert!(registry_filter(&reg, &BTreeSet::new(), &all, TaskType::Classification).is_empty());
    }

    #[test]
    fn filter_is_sorted_by_id() {
        let reg = Registry::builtin();
        let ids: Vec<String> = registry_filter(&reg, &BTreeSet::new(), &BTreeSet::new(), TaskType::Classification)
            .iter()
            .map(|s| s.operation_id.clone())
            .collect();
        let mut sorted = ids.clone();
        sorted.sort();
        assert_eq!(ids, sorted);
    }

    #[test]
    fn rejects_default_outside_space() {
        let json = r#"{"operations":[{"operation_id":"knn","display_name":"k","kind":"model","tags":[],
            "tasks":["regression"],"hyperparam_space":{"k":{"type":"int","low":1,"high":3}},"defaults":{"k":9}}]}"#;
        assert!(matches!(Registry::from_json_str(json), Err(OperationError::Registry(_))));
    }

    #[test]
    fn rejects_unimplemented_operation() {
        let json = r#"{"operations":[{"operation_id":"xgboost","display_name":"x","kind":"model","tags":[],
            "tasks":["regression"]}]}"#;
        assert!(matches!(Registry::from_json_str(json), Err(OperationError::Registry(_))));
    }

    #[test]
    fn rejects_duplicate_ids() {
        let entry = r#"{"operation_id":"ols","display_name":"x","kind":"model","tags":[],"tasks":["regression"]}"#;
        let json = format!(r#"{{"operations":[{entry},{entry}]}}"#);
        let err = Registry::from_json_str(&json).unwrap_err();
        assert!(err.to_string().contains("`ols` is listed twice"), "{err}");
    }

    #[test]
    fn json_roundtrip() {
        let reg = Registry::builtin();
        let again = Registry::from_json_str(&reg.to_json()).unwrap();
        assert_eq!(reg.specs().collect::<Vec<_>>(), again.specs().collect::<Vec<_>>());
    }
}
