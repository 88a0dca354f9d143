//! Binary container for one fitted operation.
//!
//! Layout: magic `PFOP`, format version (u16 LE), operation id length
//! (u16 LE) and UTF-8 bytes, payload length (u64 LE), bincode payload.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::PersistError;
use crate::operations::{FittedOperation, LearnedState};
use crate::pipeline::{FitMeta, FittedPipeline, Pipeline};

pub const MAGIC: &[u8; 4] = b"PFOP";
pub const FORMAT_VERSION: u16 = 1;
pub const EXTENSION: &str = "pfo";

/// Hyperparameter values are untagged in serde, which bincode cannot read
/// back, so wrapped pipelines travel as JSON inside the binary payload.
#[derive(Serialize, Deserialize)]
enum WireBody {
    Plain(LearnedState),
    Atomized { pipeline_json: String, meta: FitMeta, states: Vec<(usize, WireOp)> },
}

#[derive(Serialize, Deserialize)]
struct WireOp {
    operation_id: String,
    input_width: usize,
    output_width: usize,
    body: WireBody,
}

fn to_wire(op: &FittedOperation) -> WireOp {
    let body = match &op.state {
        LearnedState::Atomized(inner) => WireBody::Atomized {
            pipeline_json: serde_json::to_string(inner.pipeline()).expect("pipelines serialize"),
            meta: inner.meta(),
            states: inner.states().iter().map(|(id, s)| (*id, to_wire(s))).collect(),
        },
        other => WireBody::Plain(other.clone()),
    };
    WireOp { operation_id: op.operation_id.clone(), input_width: op.input_width, output_width: op.output_width, body }
}

fn from_wire(w: WireOp) -> Result<FittedOperation, PersistError> {
    let state = match w.body {
        WireBody::Plain(s) => s,
        WireBody::Atomized { pipeline_json, meta, states } => {
            let pipeline: Pipeline =
                serde_json::from_str(&pipeline_json).map_err(|e| PersistError::Container(e.to_string()))?;
            let states = states
                .into_iter()
                .map(|(id, s)| Ok((id, from_wire(s)?)))
                .collect::<Result<BTreeMap<_, _>, PersistError>>()?;
            let inner = FittedPipeline::from_parts(pipeline, states, meta)
                .map_err(|e| PersistError::Container(e.to_string()))?;
            LearnedState::Atomized(Box::new(inner))
        }
    };
    Ok(FittedOperation {
        operation_id: w.operation_id,
        state,
        input_width: w.input_width,
        output_width: w.output_width,
    })
}

pub fn encode(op: &FittedOperation) -> Result<Vec<u8>, PersistError> {
    let payload = bincode::serialize(&to_wire(op))
        .map_err(|e| PersistError::UnserializableState { operation: op.operation_id.clone(), reason: e.to_string() })?;
    let id = op.operation_id.as_bytes();
    let id_len = u16::try_from(id.len()).map_err(|_| PersistError::UnserializableState {
        operation: op.operation_id.clone(),
        reason: "operation id too long".into(),
    })?;
    let mut out = Vec::with_capacity(16 + id.len() + payload.len());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&id_len.to_le_bytes());
    out.extend_from_slice(id);
    out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    out.extend_from_slice(&payload);
    Ok(out)
}

pub fn decode(bytes: &[u8]) -> Result<FittedOperation, PersistError> {
    let bad = |m: &str| PersistError::Container(m.to_string());
    let take = |at: usize, n: usize| bytes.get(at..at + n).ok_or_else(|| bad("truncated container"));
    if take(0, 4)? != MAGIC {
        return Err(bad("bad magic bytes"));
    }
    let version = u16::from_le_bytes(take(4, 2)?.try_into().expect("two bytes"));
    if version != FORMAT_VERSION {
        return Err(PersistError::Container(format!("unsupported container version {version}")));
    }
    let id_len = usize::from(u16::from_le_bytes(take(6, 2)?.try_into().expect("two bytes")));
    let id = std::str::from_utf8(take(8, id_len)?).map_err(|_| bad("operation id is not UTF-8"))?;
    let at = 8 + id_len;
    let len = u64::from_le_bytes(take(at, 8)?.try_into().expect("eight bytes")) as usize;
    let payload = take(at + 8, len)?;
    if bytes.len() != at + 8 + len {
        return Err(bad("trailing bytes after payload"));
    }
    let wire: WireOp = bincode::deserialize(payload).map_err(|e| PersistError::Container(e.to_string()))?;
    if wire.operation_id != id {
        return Err(bad("header and payload disagree on the operation id"));
    }
    from_wire(wire)
}
