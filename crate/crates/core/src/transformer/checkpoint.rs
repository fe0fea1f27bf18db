//! Versioned binary checkpoints.
//!
//! ```text
//! magic    8 bytes  "PATTNCK\0"
//! version  u32 LE
//! hlen     u64 LE
//! header   hlen bytes of JSON: {"config", "vocabulary", "tensors": [{"name", "shape"}]}
//! data     every tensor in header order, row-major, f32 LE
//! ```

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::params::{Params, TensorSpec};
use super::{ModelConfig, TransformerModel};
use crate::error::{Error, Result};
use crate::eventlog::Vocabulary;

const MAGIC: &[u8; 8] = b"PATTNCK\0";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    vocabulary: Vocabulary,
    tensors: Vec<TensorSpec>,
}

pub fn write_checkpoint<W: Write>(model: &TransformerModel, mut w: W) -> std::io::Result<()> {
    let header = Header {
        config: model.config().clone(),
        vocabulary: model.vocabulary().clone(),
        tensors: model.params().specs(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    let mut buf = Vec::with_capacity(4 * model.params().count());
    for (_, data) in model.params().tensors() {
        for &v in data {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<TransformerModel> {
    let bad = |m: &str| Error::Checkpoint(m.to_owned());
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Checkpoint(e.to_string()))?;
    if bytes.len() < 20 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file"));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let body = &bytes[20..];
    if body.len() < hlen {
        return Err(bad("truncated header"));
    }
    let header: Header =
        serde_json::from_slice(&body[..hlen]).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    header.config.validate()?;
    let mut params = Params::zeros(header.config.dims(&header.vocabulary));
    if params.specs() != header.tensors {
        return Err(bad("tensor shapes do not match the configuration"));
    }
    let mut data = body[hlen..].chunks_exact(4);
    if body.len() - hlen != 4 * params.count() {
        return Err(bad("parameter data has the wrong length"));
    }
    for (_, tensor) in params.tensors_mut() {
        for (v, chunk) in tensor.iter_mut().zip(&mut data) {
            *v = f64::from(f32::from_le_bytes(chunk.try_into().expect("4 bytes")));
        }
    }
    TransformerModel::from_params(header.config, header.vocabulary, params)
}

pub fn save_checkpoint(model: &TransformerModel, path: &Path) -> Result<()> {
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_checkpoint(model, std::io::BufWriter::new(file)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<TransformerModel> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_checkpoint(std::io::BufReader::new(file))
}
