//! Checkpoint files: a JSON header followed by every parameter tensor in
//! the binary tensor format.
//!
//! ```text
//! b"DYSATCK1" | header_len: u64 LE | header JSON | tensors...
//! ```

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, ModelParams, Rng};
use crate::numeric::io::{read_tensor, write_tensor};

const MAGIC: &[u8; 8] = b"DYSATCK1";

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    input_dim: usize,
    num_steps: usize,
    names: Vec<String>,
}

pub fn write_checkpoint<W: Write>(
    w: &mut W,
    config: &ModelConfig,
    params: &ModelParams,
) -> Result<(), ModelError> {
    let header = Header {
        config: config.clone(),
        input_dim: params.input_dim,
        num_steps: params.num_steps,
        names: params.names(),
    };
    let json = serde_json::to_vec(&header).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    w.write_all(MAGIC)?;
    w.write_all(&(json.len() as u64).to_le_bytes())?;
    w.write_all(&json)?;
    for t in params.tensors() {
        write_tensor(w, t)?;
    }
    Ok(())
}

pub fn read_checkpoint<R: Read>(r: &mut R) -> Result<(ModelConfig, ModelParams), ModelError> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(ModelError::Checkpoint("not a checkpoint file".into()));
    }
    let mut len = [0u8; 8];
    r.read_exact(&mut len)?;
    let len = u64::from_le_bytes(len) as usize;
    if len > 1 << 24 {
        return Err(ModelError::Checkpoint(format!("implausible header length {len}")));
    }
    let mut json = vec![0u8; len];
    r.read_exact(&mut json)?;
    let header: Header =
        serde_json::from_slice(&json).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
    let layout = ModelParams::init(
        &header.config,
        header.input_dim,
        header.num_steps,
        &mut <Rng as rand::SeedableRng>::seed_from_u64(0),
    )?;
    if layout.names() != header.names {
        return Err(ModelError::Checkpoint(
            "tensor names do not match the stored configuration".into(),
        ));
    }
    let tensors = (0..header.names.len())
        .map(|_| read_tensor(r))
        .collect::<Result<Vec<_>, _>>()?;
    let params = layout.with_tensors(tensors)?;
    Ok((header.config, params))
}

pub fn save_checkpoint(
    path: &Path,
    config: &ModelConfig,
    params: &ModelParams,
) -> Result<(), ModelError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_checkpoint(&mut w, config, params)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(ModelConfig, ModelParams), ModelError> {
    read_checkpoint(&mut BufReader::new(File::open(path)?))
}
