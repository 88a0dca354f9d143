//! Pipeline documents, fitted-state archives, atomization and adaptation.

mod atomize;
pub mod container;
mod document;

use std::path::PathBuf;
use std::sync::Arc;

use thiserror::Error;

use crate::composer::{compose, ComposeError, ComposeResult, ComposerConfig};
use crate::dataio::{DataError, Dataset};
use crate::operations::Registry;
use crate::pipeline::{FittedPipeline, Pipeline, PipelineError};

pub use atomize::{atomize, AtomizedOperation};
pub use document::{
    export, export_fitted, has_atomized_state, import, write_data_archive, AtomizedRecord, Imported, NodeRecord,
    PipelineDocument, DATA_DIR, DOCUMENT_FILE, DOCUMENT_VERSION, FITTED_DIR,
};

#[derive(Debug, Error)]
pub enum PersistError {
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error at `{location}`: {message}")]
    Schema { location: String, message: String },
    #[error("unknown operation `{0}`")]
    UnknownOperation(String),
    #[error("dangling reference: {0}")]
    DanglingReference(String),
    #[error("cannot serialize state of `{operation}`: {reason}")]
    UnserializableState { operation: String, reason: String },
    #[error("invalid fitted-state container: {0}")]
    Container(String),
    #[error(transparent)]
    Pipeline(#[from] PipelineError),
    #[error(transparent)]
    Data(#[from] DataError),
}

/// Re-composes on new data with the old fitted pipeline offered as a
/// single wrapped operation: it joins the registry and seeds the initial
/// population as a one-node pipeline.
pub fn adapt(
    fitted: &FittedPipeline,
    new_data: &Dataset,
    config: &ComposerConfig,
    registry: &Registry,
) -> Result<ComposeResult, ComposeError> {
    if fitted.task() != new_data.task {
        return Err(ComposeError::Config(format!(
            "pipeline was fitted for {} but the data is {}",
            fitted.task().as_str(),
            new_data.task.as_str()
        )));
    }
    let atom = Arc::new(atomize(fitted, registry));
    let mut reg = registry.clone();
    reg.register_atomized(atom.clone());
    let mut cfg = config.clone();
    cfg.initial_pipelines.insert(0, Pipeline::single(atom.id()));
    compose(&cfg, new_data, &reg)
}

#[cfg(test)]
mod tests;
