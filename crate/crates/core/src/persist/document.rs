//! The `pipeline.json` document and its fitted-state directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{container, AtomizedOperation, PersistError};
use crate::dataio::{write_csv, Dataset, TaskType};
use crate::operations::{HyperParams, LearnedState, Registry};
use crate::pipeline::{FitMeta, FittedPipeline, MergePolicy, Node, Pipeline};

pub const DOCUMENT_VERSION: &str = "pipeforge/1";
pub const DOCUMENT_FILE: &str = "pipeline.json";
pub const FITTED_DIR: &str = "fitted_operations";
pub const DATA_DIR: &str = "data";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeRecord {
    /// Dense topological position of the node.
    pub operation_id: usize,
    pub operation_type: String,
    pub operation_name: String,
    pub custom_params: HyperParams,
    pub params: HyperParams,
    pub nodes_from: Vec<usize>,
    #[serde(default)]
    pub merge_policy: MergePolicy,
    #[serde(default)]
    pub enrich_raw: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_operation_path: Option<String>,
}

/// Definition of a wrapped pipeline referenced by some node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomizedRecord {
    pub task: TaskType,
    pub pipeline: PipelineDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineDocument {
    pub version: String,
    pub total_pipeline_operations: BTreeMap<String, usize>,
    pub depth: usize,
    pub nodes: Vec<NodeRecord>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub atomized: BTreeMap<String, AtomizedRecord>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fitted_meta: Option<FitMeta>,
}

impl PipelineDocument {
    /// Structure-only document. Node ids become canonical positions.
    pub fn from_pipeline(pipeline: &Pipeline, registry: &Registry) -> Self {
        let p = pipeline.relabeled();
        let mut atomized = BTreeMap::new();
        let nodes = p
            .nodes()
            .iter()
            .map(|n| {
                let spec = registry.spec(&n.operation_id);
                if let Some(atom) = registry.atomized(&n.operation_id) {
                    atomized.insert(
                        atom.id().to_string(),
                        AtomizedRecord { task: atom.task, pipeline: Self::from_pipeline(&atom.inner, &atom.registry) },
                    );
                }
                NodeRecord {
                    operation_id: n.id,
                    operation_type: n.operation_id.clone(),
                    operation_name: spec.map_or_else(|| n.operation_id.clone(), |s| s.display_name.clone()),
                    custom_params: n.hyperparams.clone(),
                    params: spec.map_or_else(|| n.hyperparams.clone(), |s| s.merged_params(&n.hyperparams)),
                    nodes_from: n.parent_ids.clone(),
                    merge_policy: n.merge_policy,
                    enrich_raw: n.enrich_raw,
                    fitted_operation_path: None,
                }
            })
            .collect();
        Self {
            version: DOCUMENT_VERSION.into(),
            total_pipeline_operations: p.operation_counts(),
            depth: p.depth(),
            nodes,
            atomized,
            fitted_meta: None,
        }
    }

    /// JSON text with four-space indentation and a trailing newline.
    pub fn to_json(&self) -> String {
        let mut buf = Vec::new();
        let fmt = serde_json::ser::PrettyFormatter::with_indent(b"    ");
        let mut ser = serde_json::Serializer::with_formatter(&mut buf, fmt);
        self.serialize(&mut ser).expect("documents serialize");
        buf.push(b'\n');
        String::from_utf8(buf).expect("serde_json emits UTF-8")
    }

    pub fn from_json(text: &str) -> Result<Self, PersistError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de)
            .map_err(|e| PersistError::Schema { location: e.path().to_string(), message: e.inner().to_string() })
    }

    /// Rebuilds the pipeline, registering wrapped pipelines in a copy of
    /// `base`. Checks every structural field against the graph.
    pub fn to_pipeline(&self, base: &Registry) -> Result<(Pipeline, Registry), PersistError> {
        self.to_pipeline_at(base, "")
    }

    fn to_pipeline_at(&self, base: &Registry, at: &str) -> Result<(Pipeline, Registry), PersistError> {
        let schema = |location: String, message: &str| PersistError::Schema { location, message: message.to_string() };
        if self.version != DOCUMENT_VERSION {
            return Err(schema(format!("{at}version"), "unsupported document version"));
        }
        let mut registry = base.clone();
        for (id, rec) in &self.atomized {
            let (inner, inner_reg) = rec.pipeline.to_pipeline_at(base, &format!("{at}atomized.{id}.pipeline."))?;
            let atom = AtomizedOperation::new(inner, inner_reg, rec.task, None);
            if atom.id() != id {
                return Err(schema(format!("{at}atomized.{id}"), "identifier does not match the wrapped pipeline"));
            }
            registry.register_atomized(Arc::new(atom));
        }
        let n = self.nodes.len();
        let mut nodes = Vec::with_capacity(n);
        for (pos, rec) in self.nodes.iter().enumerate() {
            let here = format!("{at}nodes[{pos}]");
            if rec.operation_id != pos {
                return Err(schema(format!("{here}.operation_id"), "ids must be dense and in order"));
            }
            if registry.spec(&rec.operation_type).is_none() {
                return Err(PersistError::UnknownOperation(rec.operation_type.clone()));
            }
            if let Some(bad) = rec.nodes_from.iter().find(|p| **p >= n) {
                return Err(PersistError::DanglingReference(format!("{here}.nodes_from: no node {bad}")));
            }
            for (k, v) in &rec.custom_params {
                if rec.params.get(k) != Some(v) {
                    return Err(schema(format!("{here}.params.{k}"), "params must include every custom param"));
                }
            }
            let mut node = Node::new(pos, rec.operation_type.clone())
                .with_parents(rec.nodes_from.clone())
                .with_policy(rec.merge_policy)
                .with_enrichment(rec.enrich_raw);
            node.hyperparams = rec.custom_params.clone();
            nodes.push(node);
        }
        let pipeline = Pipeline::new(nodes);
        crate::pipeline::check_graph(&pipeline).map_err(|v| schema(format!("{at}nodes"), &v.to_string()))?;
        if pipeline.operation_counts() != self.total_pipeline_operations {
            return Err(schema(format!("{at}total_pipeline_operations"), "counts disagree with the nodes"));
        }
        if pipeline.depth() != self.depth {
            return Err(schema(format!("{at}depth"), "depth disagrees with the graph"));
        }
        Ok((pipeline, registry))
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> PersistError + '_ {
    move |source| PersistError::Io { path: path.to_path_buf(), source }
}

fn fitted_path(id: usize) -> String {
    format!("{FITTED_DIR}/operation_{id}.{}", container::EXTENSION)
}

/// Writes `pipeline.json` (and fitted states when given) into `out_dir`.
pub fn export(
    pipeline: &Pipeline,
    fitted: Option<&FittedPipeline>,
    registry: &Registry,
    out_dir: impl AsRef<Path>,
) -> Result<PipelineDocument, PersistError> {
    let dir = out_dir.as_ref();
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut doc = PipelineDocument::from_pipeline(pipeline, registry);
    if let Some(f) = fitted {
        let fdir = dir.join(FITTED_DIR);
        std::fs::create_dir_all(&fdir).map_err(io_err(&fdir))?;
        let index = pipeline.canonical_index();
        for (old, state) in f.states() {
            let new = index[old];
            let rel = fitted_path(new);
            let bytes = container::encode(state)?;
            let path = dir.join(&rel);
            std::fs::write(&path, bytes).map_err(io_err(&path))?;
            doc.nodes[new].fitted_operation_path = Some(rel);
        }
        doc.fitted_meta = Some(f.meta());
    }
    let path = dir.join(DOCUMENT_FILE);
    std::fs::write(&path, doc.to_json()).map_err(io_err(&path))?;
    Ok(doc)
}

/// Exports a fitted pipeline.
pub fn export_fitted(
    fitted: &FittedPipeline,
    registry: &Registry,
    out_dir: impl AsRef<Path>,
) -> Result<PipelineDocument, PersistError> {
    export(fitted.pipeline(), Some(fitted), registry, out_dir)
}

/// Adds `data/train.csv` and `data/validation.csv` to an export directory.
pub fn write_data_archive(
    out_dir: impl AsRef<Path>,
    train: &Dataset,
    validation: &Dataset,
) -> Result<(), PersistError> {
    let dir = out_dir.as_ref().join(DATA_DIR);
    std::fs::create_dir_all(&dir).map_err(io_err(&dir))?;
    write_csv(train, dir.join("train.csv"))?;
    write_csv(validation, dir.join("validation.csv"))?;
    Ok(())
}

/// Result of [`import`].
#[derive(Debug, Clone)]
pub struct Imported {
    pub pipeline: Pipeline,
    /// The base registry plus any wrapped pipelines the document defines.
    pub registry: Registry,
    pub fitted: Option<FittedPipeline>,
    pub document: PipelineDocument,
}

/// Reads an export directory (or a `pipeline.json` path directly).
pub fn import(path: impl AsRef<Path>, registry: &Registry) -> Result<Imported, PersistError> {
    let path = path.as_ref();
    let file: PathBuf = if path.is_dir() { path.join(DOCUMENT_FILE) } else { path.to_path_buf() };
    let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let text = std::fs::read_to_string(&file).map_err(io_err(&file))?;
    let document = PipelineDocument::from_json(&text)?;
    let (pipeline, registry) = document.to_pipeline(registry)?;
    let paths: Vec<Option<&String>> = document.nodes.iter().map(|n| n.fitted_operation_path.as_ref()).collect();
    let fitted = if paths.iter().all(Option::is_none) {
        None
    } else {
        let meta = document.fitted_meta.ok_or_else(|| PersistError::Schema {
            location: "fitted_meta".into(),
            message: "fitted paths present without fit metadata".into(),
        })?;
        let mut states = BTreeMap::new();
        for (pos, rel) in paths.into_iter().enumerate() {
            let rel = rel.ok_or_else(|| PersistError::Schema {
                location: format!("nodes[{pos}].fitted_operation_path"),
                message: "every node needs a fitted state once any has one".into(),
            })?;
            let full = dir.join(rel);
            let bytes = std::fs::read(&full)
                .map_err(|_| PersistError::DanglingReference(format!("nodes[{pos}].fitted_operation_path: {rel}")))?;
            let state = container::decode(&bytes)?;
            if state.operation_id != document.nodes[pos].operation_type {
                return Err(PersistError::Container(format!("{rel} holds `{}`", state.operation_id)));
            }
            states.insert(pos, state);
        }
        Some(FittedPipeline::from_parts(pipeline.clone(), states, meta)?)
    };
    Ok(Imported { pipeline, registry, fitted, document })
}

/// Whether any fitted state wraps a pipeline.
pub fn has_atomized_state(f: &FittedPipeline) -> bool {
    f.states().values().any(|s| matches!(s.state, LearnedState::Atomized(_)))
}
