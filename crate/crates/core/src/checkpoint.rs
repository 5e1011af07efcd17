//! Binary model checkpoints.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! bytes 0..8    magic "SKDCKPT\0"
//! bytes 8..12   u32 format version (1)
//! bytes 12..44  u64 vocab, embed_in, hidden, embed_out
//! then          IEEE-754 binary64 values of every tensor, row-major, in order:
//!               input_embeddings (V x E), lstm.w_input (4H x E),
//!               lstm.w_recurrent (4H x H), lstm.bias (4H), ff.weights (D x H),
//!               ff.bias (D), output.weights (V x D), output.bias (V)
//! ```
//!
//! LSTM gate rows are stacked input, forget, output, candidate.

use std::fs;
use std::path::Path;

use crate::error::{Result, SkdError};
use crate::network::{ModelDims, ModelParams};

pub const MAGIC: &[u8; 8] = b"SKDCKPT\0";
pub const VERSION: u32 = 1;
const HEADER_LEN: usize = 8 + 4 + 4 * 8;

pub fn to_bytes(params: &ModelParams) -> Vec<u8> {
    let dims = params.dims();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * dims.parameter_count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in [dims.vocab, dims.embed_in, dims.hidden, dims.embed_out] {
        out.extend_from_slice(&(d as u64).to_le_bytes());
    }
    for (_, tensor) in params.tensors() {
        for v in tensor {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn from_bytes(bytes: &[u8]) -> std::result::Result<ModelParams, String> {
    if bytes.len() < HEADER_LEN {
        return Err(format!("{} bytes is shorter than the header", bytes.len()));
    }
    if &bytes[..8] != MAGIC {
        return Err("bad magic".into());
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().unwrap());
    if version != VERSION {
        return Err(format!("unsupported version {version}"));
    }
    let dim = |k: usize| -> std::result::Result<usize, String> {
        let at = 12 + 8 * k;
        let v = u64::from_le_bytes(bytes[at..at + 8].try_into().unwrap());
        usize::try_from(v).map_err(|_| format!("dimension {v} too large"))
    };
    let dims = ModelDims {
        vocab: dim(0)?,
        embed_in: dim(1)?,
        hidden: dim(2)?,
        embed_out: dim(3)?,
    };
    dims.validate().map_err(|e| e.to_string())?;
    let expected = dims
        .parameter_count()
        .checked_mul(8)
        .and_then(|n| n.checked_add(HEADER_LEN))
        .ok_or("dimensions overflow")?;
    if bytes.len() != expected {
        return Err(format!(
            "expected {expected} bytes for {dims:?}, found {}",
            bytes.len()
        ));
    }
    let mut params = ModelParams::zeros(dims);
    let mut values = bytes[HEADER_LEN..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    for (_, tensor) in params.tensors_mut() {
        for (slot, v) in tensor.iter_mut().zip(&mut values) {
            *slot = v;
        }
    }
    params.validate().map_err(|e| e.to_string())?;
    Ok(params)
}

pub fn save(params: &ModelParams, path: &Path) -> Result<()> {
    fs::write(path, to_bytes(params)).map_err(|e| SkdError::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelParams> {
    let bytes = fs::read(path).map_err(|e| SkdError::io(path, e))?;
    from_bytes(&bytes).map_err(|reason| SkdError::Checkpoint {
        path: path.to_owned(),
        reason,
    })
}
