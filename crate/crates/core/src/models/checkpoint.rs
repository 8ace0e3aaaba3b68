//! Self-describing checkpoint container.
//!
//! ```text
//! offset  size  content
//! 0       8     magic "HARBCKPT"
//! 8       4     format version, u32 little-endian (currently 1)
//! 12      8     header length N, u64 little-endian
//! 20      N     UTF-8 JSON header {"spec": ModelSpec, "tensors": [{"name", "shape"}, ...]}
//! 20+N    ...   every tensor's values in header order, row-major f64 little-endian
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Model, ModelSpec, ParamSet, TensorInfo};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HARBCKPT";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    spec: ModelSpec,
    tensors: Vec<TensorInfo>,
}

pub fn write_checkpoint(model: &Model) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        spec: model.spec().clone(),
        tensors: model.params().layout(),
    })
    .expect("header serializes");
    let mut out = Vec::with_capacity(20 + header.len() + 8 * model.n_params());
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for t in model.params().tensors() {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Model> {
    let bad = |m: &str| Error::Parse(format!("checkpoint: {m}"));
    if bytes.len() < 20 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("missing magic"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(bad(&format!("unsupported version {version}")));
    }
    let header_len = u64::from_le_bytes(bytes[12..20].try_into().unwrap()) as usize;
    let body = 20usize
        .checked_add(header_len)
        .filter(|&e| e <= bytes.len())
        .ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[20..body]).map_err(|e| bad(&e.to_string()))?;

    let mut params = ParamSet::new();
    let mut offset = body;
    for info in header.tensors {
        let n: usize = info.shape.iter().product();
        let end = offset + 8 * n;
        if end > bytes.len() {
            return Err(bad("truncated tensor data"));
        }
        let data = bytes[offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        params.push(info.name, info.shape, data);
        offset = end;
    }
    if offset != bytes.len() {
        return Err(bad("trailing bytes"));
    }
    Model::from_parts(header.spec, params)
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    crate::util::write_atomic(path, &write_checkpoint(model))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    read_checkpoint(&fs::read(path)?)
}
