//! `DCAPC\0`, 8-byte config hash, little-endian `u32` tensor count, then
//! every parameter in module order as a serialized tensor.

use std::io::Read;
use std::path::Path;

use super::config::ModelConfig;
use super::model::DetectorModel;
use crate::error::{Error, Result};
use crate::nn::Module;
use crate::tensor::io::{read_tensor, write_tensor};

pub const CHECKPOINT_MAGIC: &[u8; 6] = b"DCAPC\0";

pub fn checkpoint_to_bytes(model: &DetectorModel) -> Vec<u8> {
    let params = model.params();
    let mut out = CHECKPOINT_MAGIC.to_vec();
    out.extend(model.config.hash());
    out.extend((params.len() as u32).to_le_bytes());
    for p in params {
        write_tensor(p.value(), &mut out).expect("writing to a Vec cannot fail");
    }
    out
}

/// Rebuilds the architecture from `config` and loads the stored weights.
pub fn checkpoint_from_bytes(bytes: &[u8], config: &ModelConfig) -> Result<DetectorModel> {
    let mut r = bytes;
    let mut header = [0u8; 18];
    r.read_exact(&mut header).map_err(|_| Error::Checkpoint("truncated header".into()))?;
    if &header[..6] != CHECKPOINT_MAGIC {
        return Err(Error::Checkpoint("bad magic (expected DCAPC)".into()));
    }
    if header[6..14] != config.hash() {
        return Err(Error::Checkpoint("config hash mismatch: checkpoint was trained with a different architecture".into()));
    }
    let count = u32::from_le_bytes(header[14..18].try_into().expect("4 bytes")) as usize;
    let mut model = DetectorModel::new(config)?;
    let mut params = model.params_mut();
    if count != params.len() {
        return Err(Error::Checkpoint(format!("{count} tensors stored, model has {}", params.len())));
    }
    let mut offset = header.len();
    for (i, p) in params.iter_mut().enumerate() {
        let (t, next) = read_tensor(&mut r, offset).map_err(|e| Error::Checkpoint(format!("tensor {i}: {e}")))?;
        if t.shape() != p.value().shape() {
            return Err(Error::Checkpoint(format!(
                "tensor {i} has shape {:?}, expected {:?}",
                t.shape(),
                p.value().shape()
            )));
        }
        *p.value_mut() = t;
        offset = next;
    }
    if !r.is_empty() {
        return Err(Error::Checkpoint(format!("{} trailing bytes", r.len())));
    }
    Ok(model)
}

pub fn save_checkpoint(path: &Path, model: &DetectorModel) -> Result<()> {
    std::fs::write(path, checkpoint_to_bytes(model)).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path, config: &ModelConfig) -> Result<DetectorModel> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    checkpoint_from_bytes(&bytes, config)
}
