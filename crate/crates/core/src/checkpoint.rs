//! Binary model checkpoints.
//!
//! Layout: 8-byte magic `CQAELCKP`, u32 version, u64 payload length, u32
//! crc32 of the payload, then the payload:
//!
//! - model configuration as a JSON string
//! - vocabulary: u32 count, then each token as a length-prefixed string
//! - tensor table: u32 count, then per tensor its name and u64 length, in
//!   the `Parameters` visiting order (context encoder, auxiliary encoder,
//!   fusion layer)
//! - all tensor values as little-endian f32 in the same order
//!
//! Integers are little-endian; strings are u32 length plus UTF-8 bytes.

use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::encoder::Tokenizer;
use crate::error::{Error, Result};
use crate::index::{checked_payload, put_str, put_u32, put_u64, Reader};
use crate::params::Parameters;
use crate::ranker::{ModelConfig, RankerModel};

const MAGIC: &[u8; 8] = b"CQAELCKP";
pub const VERSION: u32 = 1;

pub fn to_bytes(model: &RankerModel) -> Vec<u8> {
    let mut payload = Vec::new();
    let config = serde_json::to_string(&model.config).expect("config serializes");
    put_str(&mut payload, &config);
    let vocab = model.tokenizer.vocab();
    put_u32(&mut payload, vocab.len() as u32);
    for t in vocab {
        put_str(&mut payload, t);
    }
    let layout = model.weights.layout();
    put_u32(&mut payload, layout.len() as u32);
    for (name, len) in &layout {
        put_str(&mut payload, name);
        put_u64(&mut payload, *len as u64);
    }
    model.weights.visit(&mut |_, t| {
        for &x in t {
            payload.extend_from_slice(&(x as f32).to_le_bytes());
        }
    });

    let mut out = Vec::with_capacity(payload.len() + 24);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION);
    put_u64(&mut out, payload.len() as u64);
    put_u32(&mut out, crc32fast::hash(&payload));
    out.extend_from_slice(&payload);
    out
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

pub fn from_bytes(bytes: &[u8]) -> Result<RankerModel> {
    let payload = checked_payload(bytes, MAGIC, VERSION).map_err(|e| match e {
        Error::IndexFormat(m) => bad(m),
        other => other,
    })?;
    let mut r = Reader::new(payload);
    let config: ModelConfig =
        serde_json::from_str(&r.string()?).map_err(|e| bad(format!("configuration: {e}")))?;
    let n_vocab = r.u32()? as usize;
    let vocab = (0..n_vocab).map(|_| r.string()).collect::<Result<Vec<_>>>()?;
    let tokenizer = Tokenizer::from_vocab(vocab).ok_or_else(|| bad("vocabulary lacks the special tokens"))?;
    let n_tensors = r.u32()? as usize;
    let mut stored = Vec::with_capacity(n_tensors);
    for _ in 0..n_tensors {
        stored.push((r.string()?, r.u64()? as usize));
    }

    // structure comes from the configuration; values are overwritten below
    let mut model = RankerModel::init(config, tokenizer, &mut ChaCha8Rng::seed_from_u64(0))?;
    let expected = model.weights.layout();
    if expected != stored {
        return Err(bad("tensor table does not match the configuration"));
    }
    let total: usize = expected.iter().map(|(_, n)| n).sum();
    let raw = r.take(total * 4).map_err(|_| bad("tensor data truncated"))?;
    if !r.is_done() {
        return Err(bad("trailing bytes after tensor data"));
    }
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    model.weights.assign_flat(&values);
    if !model.weights.all_finite() {
        return Err(bad("non-finite parameter values"));
    }
    Ok(model)
}

pub fn save(model: &RankerModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: impl AsRef<Path>) -> Result<RankerModel> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    from_bytes(&bytes)
}

/// Rounds every weight to f32, as a save/load cycle does.
pub fn round_to_f32(model: &mut RankerModel) {
    model
        .weights
        .visit_mut(&mut |_, t| t.iter_mut().for_each(|x| *x = *x as f32 as f64));
}
