//! Binary checkpoint format.
//!
//! Little-endian layout:
//!
//! ```text
//! "SCNN"                       magic, 4 bytes
//! u16                          format version
//! u32 + bytes                  TOML header: model spec and training metadata
//! u32                          tensor count
//! per tensor:
//!   u16 + bytes                name (UTF-8)
//!   u8                         rank
//!   u32 × rank                 dimensions
//!   f32 × Π dims               values, row-major
//! ```
//!
//! Parameters come first in graph order, then batch-norm running statistics.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Preprocess;
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::model::graph::ModelGraph;
use crate::model::spec::ModelSpec;
use crate::tensor::{Scalar, Tensor};

pub const MAGIC: &[u8; 4] = b"SCNN";
pub const VERSION: u16 = 1;

/// Training metadata stored alongside the weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub epoch: usize,
    pub best_val_accuracy: f64,
    pub seed: u64,
    /// Initialization scheme the weights started from.
    pub init: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preprocess: Option<Preprocess>,
}

impl Default for CheckpointMeta {
    fn default() -> Self {
        Self {
            epoch: 0,
            best_val_accuracy: 0.0,
            seed: 0,
            init: crate::model::INIT_SCHEME.to_string(),
            preprocess: None,
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    meta: CheckpointMeta,
    spec: ModelSpec,
}

pub fn encode_checkpoint<T: Scalar>(graph: &ModelGraph<T>, meta: &CheckpointMeta) -> Result<Vec<u8>> {
    let header = toml::to_string(&Header {
        meta: meta.clone(),
        spec: graph.spec().clone(),
    })
    .map_err(|e| Error::config(format!("cannot serialize checkpoint header: {e}")))?;
    let state = graph.named_state();
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u32).to_le_bytes());
    out.extend_from_slice(header.as_bytes());
    out.extend_from_slice(&(state.len() as u32).to_le_bytes());
    for (name, t) in state {
        out.extend_from_slice(&(name.len() as u16).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(t.rank() as u8);
        for &d in t.shape() {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in t.data() {
            out.extend_from_slice(&(v.as_f64() as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// Writes the checkpoint via a temporary file and rename, so `path` either
/// holds the previous contents or a complete new checkpoint.
pub fn save_checkpoint<T: Scalar>(
    graph: &ModelGraph<T>,
    meta: &CheckpointMeta,
    path: impl AsRef<Path>,
) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(graph, meta)?)
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!(
                    "truncated: {what} needs {n} bytes, {} remain",
                    self.buf.len() - self.pos
                ),
            });
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn err(&self, message: impl Into<String>) -> Error {
        Error::Format {
            offset: self.pos as u64,
            message: message.into(),
        }
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(ModelGraph<f32>, CheckpointMeta)> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::Format {
            offset: 0,
            message: "bad magic (not a checkpoint file)".into(),
        });
    }
    let version = r.u16("version")?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion {
            found: version,
            expected: VERSION,
        });
    }
    let len = r.u32("header length")? as usize;
    let header_at = r.pos;
    let text = std::str::from_utf8(r.take(len, "header")?).map_err(|_| Error::Format {
        offset: header_at as u64,
        message: "header is not UTF-8".into(),
    })?;
    let header: Header = toml::from_str(text).map_err(|e| Error::Format {
        offset: header_at as u64,
        message: format!("invalid header: {e}"),
    })?;
    let mut graph = ModelGraph::<f32>::new(&header.spec, header.meta.seed).map_err(|e| {
        Error::Format {
            offset: header_at as u64,
            message: format!("header describes an invalid model: {e}"),
        }
    })?;
    let count = r.u32("tensor count")? as usize;
    let mut slots = graph.named_state_mut();
    if count != slots.len() {
        return Err(r.err(format!(
            "checkpoint holds {count} tensors, model expects {}",
            slots.len()
        )));
    }
    let mut loaded = Vec::with_capacity(count);
    for (expected_name, slot) in &slots {
        let name_len = r.u16("tensor name length")? as usize;
        let name = String::from_utf8_lossy(r.take(name_len, "tensor name")?).into_owned();
        if &name != expected_name {
            return Err(r.err(format!("expected tensor {expected_name:?}, found {name:?}")));
        }
        let rank = r.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(rank);
        for _ in 0..rank {
            shape.push(r.u32("tensor dimension")? as usize);
        }
        if shape != slot.shape() {
            return Err(r.err(format!(
                "tensor {name} has shape {shape:?}, model expects {:?}",
                slot.shape()
            )));
        }
        let n: usize = shape.iter().product();
        let raw = r.take(n * 4, "tensor data")?;
        let data: Vec<f32> = raw
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes(b.try_into().unwrap()))
            .collect();
        loaded.push(Tensor::new(&shape, data)?);
    }
    if r.pos != bytes.len() {
        return Err(r.err(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    // Only touch the graph once the whole file has parsed.
    for ((_, slot), t) in slots.iter_mut().zip(loaded) {
        **slot = t;
    }
    drop(slots);
    Ok((graph, header.meta))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(ModelGraph<f32>, CheckpointMeta)> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes)
}
