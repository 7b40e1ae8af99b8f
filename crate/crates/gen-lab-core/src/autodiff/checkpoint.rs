//! Parameter checkpoints: a flat list of named (shape, data) records in
//! JSON, with an optional model-spec header, written atomically.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "gen-lab-checkpoint/1";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("malformed checkpoint: {0}")]
    Malformed(#[from] serde_json::Error),
    #[error("unsupported checkpoint format {found:?}, expected {CHECKPOINT_FORMAT:?}")]
    Format { found: String },
    #[error("record {name:?} has shape {shape:?} but {len} values")]
    BadRecord {
        name: String,
        shape: Vec<usize>,
        len: usize,
    },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ParamRecord {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    /// Model-specific header (e.g. the network spec), free-form JSON.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spec: Option<serde_json::Value>,
    pub params: Vec<ParamRecord>,
}

impl Checkpoint {
    pub fn new(spec: Option<serde_json::Value>) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            spec,
            params: Vec::new(),
        }
    }

    pub fn push(&mut self, name: String, tensor: &Tensor) {
        self.params.push(ParamRecord {
            name,
            shape: tensor.shape().to_vec(),
            data: tensor.data().to_vec(),
        });
    }

    pub fn validate(&self) -> Result<(), CheckpointError> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(CheckpointError::Format {
                found: self.format.clone(),
            });
        }
        for r in &self.params {
            let n: usize = r.shape.iter().product();
            if n != r.data.len() {
                return Err(CheckpointError::BadRecord {
                    name: r.name.clone(),
                    shape: r.shape.clone(),
                    len: r.data.len(),
                });
            }
        }
        Ok(())
    }

    pub fn tensors(&self) -> impl Iterator<Item = (&str, Tensor)> {
        self.params.iter().map(|r| {
            (
                r.name.as_str(),
                Tensor::new(r.shape.clone(), r.data.clone()),
            )
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let bytes = serde_json::to_vec(self)?;
        write_atomic(path, &bytes)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = fs::read(path)?;
        let ckpt: Checkpoint = serde_json::from_slice(&bytes)?;
        ckpt.validate()?;
        Ok(ckpt)
    }
}

/// Write via a sibling temp file + rename so readers never see partial data.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let dir = path.parent().unwrap_or_else(|| Path::new("."));
    fs::create_dir_all(dir)?;
    let tmp = dir.join(format!(
        ".{}.tmp",
        path.file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default()
    ));
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}
