//! Checkpoint container: an 8-byte magic, a little-endian `u64` header
//! length, a JSON header (run configuration plus the name, shape and
//! offset of every tensor) and the tensor data as little-endian `f64`.

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};
use svit_core::model::Model;
use svit_core::numerics::Tensor;
use svit_core::train::TrainConfig;

use crate::error::{format_err, io_err, Result};

const MAGIC: &[u8; 8] = b"SVITCKP1";

#[derive(Serialize, Deserialize)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    /// Offset into the payload, in `f64` elements.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    tensors: Vec<Entry>,
}

/// A trained model with the configuration that produced it.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: Model,
}

pub fn encode(config: &TrainConfig, model: &Model) -> Vec<u8> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    for p in model.params() {
        tensors.push(Entry { name: p.name.clone(), shape: p.value.shape().to_vec(), offset });
        offset += p.value.len();
    }
    let mut cfg = config.clone();
    cfg.model = model.config().clone();
    let header = serde_json::to_vec(&Header { config: cfg, tensors }).expect("header serializes");
    let mut out = Vec::with_capacity(16 + header.len() + 8 * offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    for p in model.params() {
        for v in p.value.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8], source: &Path) -> Result<Checkpoint> {
    let bad = |reason: &str| format_err(source, reason);
    if bytes.len() < 16 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint (bad magic)"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = bytes.get(16..16 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(body).map_err(|e| format_err(source, e))?;
    let payload = &bytes[16 + hlen..];
    if payload.len() % 8 != 0 {
        return Err(bad("payload is not a whole number of f64 values"));
    }
    let values: Vec<f64> = payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
    let mut stored = Vec::with_capacity(header.tensors.len());
    for e in header.tensors {
        let len: usize = e.shape.iter().product();
        let data = values.get(e.offset..e.offset + len).ok_or_else(|| bad("tensor extends past payload"))?;
        stored.push((e.name, Tensor::new(e.shape, data.to_vec())?));
    }
    let model = Model::from_params(header.config.model.clone(), stored)?;
    Ok(Checkpoint { config: header.config, model })
}

pub fn save(path: &Path, config: &TrainConfig, model: &Model) -> Result<()> {
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(&encode(config, model)).map_err(io_err(path))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path).map_err(io_err(path))?;
    decode(&bytes, path)
}
