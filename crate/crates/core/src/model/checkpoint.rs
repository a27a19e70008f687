// SPDX-License-Identifier: MIT OR Apache-2.0

//! Binary checkpoint container.
//!
//! Layout: 8-byte magic `RLABCKPT`, u32 LE format version, u64 LE header
//! length, UTF-8 JSON header (config, metadata, tensor specs), then every
//! parameter as f64 LE in layout order.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Layout, Model, ModelConfig, TensorSpec};
use crate::error::{LabError, Result};

const MAGIC: &[u8; 8] = b"RLABCKPT";
pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub steps: usize,
    pub initial_loss: f64,
    pub final_loss: f64,
    pub world_seed: u64,
    pub train_seed: u64,
}

#[derive(Debug, Clone)]
pub struct ModelCheckpoint {
    pub model: Model,
    pub meta: TrainingMeta,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    meta: TrainingMeta,
    tensors: Vec<TensorSpec>,
}

impl ModelCheckpoint {
    pub fn new(model: Model, meta: TrainingMeta) -> Self {
        Self { model, meta }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            config: self.model.config().clone(),
            meta: self.meta.clone(),
            tensors: self.model.layout().specs.clone(),
        };
        let hjson = serde_json::to_vec(&header)?;
        let mut out = Vec::with_capacity(20 + hjson.len() + 8 * self.model.params().len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&CHECKPOINT_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(hjson.len() as u64).to_le_bytes());
        out.extend_from_slice(&hjson);
        for x in self.model.params() {
            out.extend_from_slice(&x.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8], origin: &Path) -> Result<Self> {
        let corrupt = |reason: String| LabError::Corrupt { path: origin.to_path_buf(), reason };
        if bytes.len() < 20 || &bytes[..8] != MAGIC {
            return Err(corrupt("bad magic".into()));
        }
        let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
        if version != CHECKPOINT_FORMAT_VERSION {
            return Err(corrupt(format!("unsupported version {version}")));
        }
        let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
        let body = 20usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| corrupt("truncated header".into()))?;
        let header: Header = serde_json::from_slice(&bytes[20..body])?;
        header.config.validate()?;
        let layout = Layout::new(&header.config);
        if layout.specs != header.tensors {
            return Err(corrupt("tensor shapes disagree with the config".into()));
        }
        let data = &bytes[body..];
        if data.len() != layout.total * 8 {
            return Err(corrupt(format!("expected {} parameters, found {} bytes", layout.total, data.len())));
        }
        let params = data.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes"))).collect();
        Ok(Self { model: Model::from_params(header.config, params)?, meta: header.meta })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(&self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        Self::from_bytes(&buf, path)
    }
}
