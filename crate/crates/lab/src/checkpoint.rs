// SPDX-License-Identifier: MIT OR Apache-2.0

//! Checkpoint files.
//!
//! ```text
//! b"FIMCKPT1"                       8-byte magic
//! u64 little-endian                 header length in bytes
//! UTF-8 JSON header                 {"config": ModelConfig,
//!                                    "tensors": [{"name", "shape"}, ...]}
//! f32 little-endian payloads        concatenated in header order
//! ```

use std::fs;
use std::path::Path;

use fim_core::model::NamedTensor;
use fim_core::{Model, ModelConfig};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

pub const MAGIC: &[u8; 8] = b"FIMCKPT1";

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic")]
    BadMagic,
    #[error("tensor `{name}`: header declares shape {declared:?}, config requires {expected:?}")]
    ShapeMismatch {
        name: String,
        declared: Vec<usize>,
        expected: Vec<usize>,
    },
    #[error("file truncated: needed {needed} bytes, found {found}")]
    Truncated { needed: usize, found: usize },
    #[error("{0} trailing bytes after the last tensor")]
    TrailingBytes(usize),
    #[error("malformed header: {0}")]
    Header(String),
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    tensors: Vec<TensorEntry>,
}

pub fn encode(model: &Model) -> Vec<u8> {
    let tensors = model.tensors();
    let header = Header {
        config: model.config().clone(),
        tensors: tensors
            .iter()
            .map(|t| TensorEntry {
                name: t.name.clone(),
                shape: t.shape.clone(),
            })
            .collect(),
    };
    let json = serde_json::to_vec(&header).expect("header serializes");
    let payload: usize = tensors.iter().map(|t| t.data.len() * 4).sum();
    let mut out = Vec::with_capacity(16 + json.len() + payload);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for t in &tensors {
        for v in &t.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<Model, CheckpointError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let need = |needed: usize| {
        if bytes.len() < needed {
            Err(CheckpointError::Truncated {
                needed,
                found: bytes.len(),
            })
        } else {
            Ok(())
        }
    };
    need(16)?;
    let header_len = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let header_end = 16usize
        .checked_add(header_len)
        .ok_or_else(|| CheckpointError::Header("header length overflows".into()))?;
    need(header_end)?;
    let header: Header = serde_json::from_slice(&bytes[16..header_end])
        .map_err(|e| CheckpointError::Header(e.to_string()))?;
    header
        .config
        .validate()
        .map_err(|e| CheckpointError::Header(e.to_string()))?;

    let specs = header.config.tensor_specs();
    if specs.len() != header.tensors.len() {
        return Err(CheckpointError::Header(format!(
            "config implies {} tensors, header lists {}",
            specs.len(),
            header.tensors.len()
        )));
    }
    for ((name, shape), entry) in specs.iter().zip(&header.tensors) {
        if name != &entry.name {
            return Err(CheckpointError::Header(format!(
                "expected tensor `{name}`, found `{}`",
                entry.name
            )));
        }
        if shape != &entry.shape {
            return Err(CheckpointError::ShapeMismatch {
                name: name.clone(),
                declared: entry.shape.clone(),
                expected: shape.clone(),
            });
        }
    }

    let payload: usize = specs.iter().map(|(_, s)| s.iter().product::<usize>() * 4).sum();
    need(header_end + payload)?;
    if bytes.len() > header_end + payload {
        return Err(CheckpointError::TrailingBytes(
            bytes.len() - header_end - payload,
        ));
    }
    let mut cursor = header_end;
    let tensors = specs
        .into_iter()
        .map(|(name, shape)| {
            let n: usize = shape.iter().product();
            let data = bytes[cursor..cursor + 4 * n]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            cursor += 4 * n;
            NamedTensor { name, shape, data }
        })
        .collect();
    Model::from_tensors(header.config, tensors).map_err(|e| CheckpointError::Header(e.to_string()))
}

pub fn save_checkpoint(model: &Model, path: &Path) -> Result<()> {
    fs::write(path, encode(model)).map_err(LabError::io(path))
}

pub fn load_checkpoint(path: &Path) -> Result<Model> {
    let bytes = fs::read(path).map_err(LabError::io(path))?;
    Ok(decode(&bytes)?)
}
