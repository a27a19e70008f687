// SPDX-License-Identifier: MIT OR Apache-2.0

//! Run manifest: which stages completed, with what inputs, producing which
//! files with which hashes.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{LabError, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_FORMAT_VERSION: u32 = 1;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Hash of a file, or of a directory as the sorted list of its entries'
/// relative names and hashes.
pub fn hash_path(path: &Path) -> Result<String> {
    if path.is_dir() {
        let mut entries: Vec<PathBuf> = std::fs::read_dir(path)?.map(|e| e.map(|e| e.path())).collect::<std::io::Result<_>>()?;
        entries.sort();
        let mut h = Sha256::new();
        for e in entries {
            let name = e.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
            h.update(name.as_bytes());
            h.update([0]);
            h.update(hash_path(&e)?.as_bytes());
            h.update(b"\n");
        }
        Ok(hex::encode(h.finalize()))
    } else {
        Ok(sha256_hex(&std::fs::read(path)?))
    }
}

/// Seconds since the epoch, or `SOURCE_DATE_EPOCH` when set.
pub fn now_unix() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.parse().ok()) {
        return t;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Relative to the run directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    /// Hash of the stage's config sections and upstream stage hashes.
    pub stage_hash: String,
    pub inputs: Vec<String>,
    pub outputs: Vec<ArtifactRecord>,
    pub seeds: BTreeMap<String, u64>,
    pub completed_unix: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub format_version: u32,
    pub tool_version: String,
    pub config_hash: String,
    pub created_unix: u64,
    pub stages: BTreeMap<String, StageRecord>,
}

impl RunManifest {
    pub fn load_or_new(dir: &Path, config_hash: &str) -> Result<Self> {
        let p = dir.join(MANIFEST_FILE);
        if p.exists() {
            let m: RunManifest = serde_json::from_str(&std::fs::read_to_string(&p)?)?;
            if m.config_hash != config_hash {
                return Err(LabError::Corrupt { path: p, reason: "manifest belongs to a different config".into() });
            }
            return Ok(m);
        }
        Ok(Self {
            format_version: MANIFEST_FORMAT_VERSION,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash.to_string(),
            created_unix: now_unix(),
            stages: BTreeMap::new(),
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join(MANIFEST_FILE), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    /// The record of `stage` after checking every output still exists with
    /// its recorded hash.
    pub fn verify(&self, dir: &Path, stage: &str) -> Result<&StageRecord> {
        let rec = self
            .stages
            .get(stage)
            .ok_or_else(|| LabError::PipelineOrder(format!("stage `{stage}` has not been run; run it first")))?;
        for a in &rec.outputs {
            let p = dir.join(&a.path);
            if !p.exists() {
                return Err(LabError::PipelineOrder(format!("stage `{stage}` output {} is missing", a.path)));
            }
            if hash_path(&p)? != a.sha256 {
                return Err(LabError::PipelineOrder(format!("stage `{stage}` output {} is stale (hash mismatch)", a.path)));
            }
        }
        Ok(rec)
    }

    /// Whether `stage` is recorded with `stage_hash` and intact outputs.
    pub fn is_current(&self, dir: &Path, stage: &str, stage_hash: &str) -> bool {
        matches!(self.verify(dir, stage), Ok(r) if r.stage_hash == stage_hash)
    }

    pub fn record(
        &mut self,
        dir: &Path,
        stage: &str,
        stage_hash: String,
        inputs: Vec<String>,
        outputs: &[&str],
        seeds: BTreeMap<String, u64>,
    ) -> Result<()> {
        let outputs = outputs
            .iter()
            .map(|o| Ok(ArtifactRecord { path: (*o).to_string(), sha256: hash_path(&dir.join(o))? }))
            .collect::<Result<Vec<_>>>()?;
        self.stages.insert(stage.to_string(), StageRecord { stage_hash, inputs, outputs, seeds, completed_unix: now_unix() });
        self.save(dir)
    }
}
