//! Versioned binary model format.
//!
//! Layout (little-endian): magic `FBTF`, format version `u32`, hyper block
//! (`d_model`, `n_heads`, `n_layers`, `d_ff`, `max_tokens` as `u32`, then
//! `dropout_rate` as `f64`), tensor count `u32`, then every tensor in
//! [`TransformerParams::tensor_names`] order as `rows u32, cols u32` followed
//! by `rows·cols` `f64` values.

use std::fs;
use std::path::Path;

use super::{TransformerHyper, TransformerParams};
use crate::codec::{Reader, Writer};
use crate::{Error, Result};

pub const MODEL_MAGIC: &[u8; 4] = b"FBTF";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(params: &TransformerParams) -> Vec<u8> {
    let h = &params.hyper;
    let mut w = Writer::new();
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.usize(h.d_model);
    w.usize(h.n_heads);
    w.usize(h.n_layers);
    w.usize(h.d_ff);
    w.usize(h.max_tokens);
    w.f64(h.dropout_rate);
    let tensors = params.tensors();
    w.usize(tensors.len());
    for t in tensors {
        w.matrix(t);
    }
    w.finish()
}

/// Decodes a model; tensor shapes must agree with the stored hyper block.
pub fn decode_model(bytes: &[u8]) -> Result<TransformerParams> {
    decode_inner(bytes, None)
}

fn decode_inner(bytes: &[u8], expected: Option<&TransformerHyper>) -> Result<TransformerParams> {
    let mut r = Reader::new(bytes);
    let magic = r.take(4).map_err(|_| Error::Format("file too short for a model header".into()))?;
    if magic != MODEL_MAGIC {
        return Err(Error::Format(format!(
            "bad magic {:?}, expected {:?}",
            String::from_utf8_lossy(magic),
            std::str::from_utf8(MODEL_MAGIC).unwrap()
        )));
    }
    let version = r.u32()?;
    if version != MODEL_VERSION {
        return Err(Error::Format(format!(
            "model format version {version} is not supported (expected {MODEL_VERSION})"
        )));
    }
    let stored = TransformerHyper {
        d_model: r.usize()?,
        n_heads: r.usize()?,
        n_layers: r.usize()?,
        d_ff: r.usize()?,
        max_tokens: r.usize()?,
        dropout_rate: r.f64()?,
    };
    stored.validate()?;
    // tensors are checked against the caller's architecture when one is given
    let shapes_from = expected.copied().unwrap_or(stored);
    let mut params = TransformerParams::zeros(&shapes_from);
    params.hyper = stored;
    let names = params.tensor_names();
    let count = r.usize()?;
    if count != names.len() {
        return Err(Error::shape("model tensor count", names.len(), count));
    }
    for (name, slot) in names.iter().zip(params.tensors_mut()) {
        let shape = slot.shape();
        *slot = r.matrix_named(name, Some(shape))?;
    }
    r.expect_end()?;
    if let Some(h) = expected {
        if stored != *h {
            return Err(Error::shape("model hyperparameters", format!("{h:?}"), format!("{stored:?}")));
        }
    }
    Ok(params)
}

pub fn save_model(params: &TransformerParams, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_model(params)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<TransformerParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_model(&bytes)
}

/// Loads a model into a pipeline that expects architecture `hyper`; a
/// mismatch names the first tensor whose shape disagrees.
pub fn load_model_expecting(path: impl AsRef<Path>, hyper: &TransformerHyper) -> Result<TransformerParams> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_inner(&bytes, Some(hyper))
}
