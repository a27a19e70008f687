// SPDX-License-Identifier: MIT OR Apache-2.0

//! Grid persistence: one CSV of cells plus a JSON sidecar per grid.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::grid::ScoreGrid;
use super::noise::{draw_seed, AblationKind, NoiseConfig};
use crate::corpus::{AnnotatedPrompt, TemplateId};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellRecord {
    pub layer: usize,
    pub position: usize,
    pub score: f64,
    pub restored_p: f64,
    pub corrupted_p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSidecar {
    pub config_hash: String,
    pub kind: AblationKind,
    pub template: TemplateId,
    pub text: String,
    pub prompt: AnnotatedPrompt,
    pub target: usize,
    pub target_token: String,
    pub layers: usize,
    pub positions: usize,
    pub clean_p: f64,
    pub corrupted_p: f64,
    pub sigma: f64,
    pub noise: NoiseConfig,
    pub draw_seeds: Vec<u64>,
    pub forward_passes: usize,
}

/// Directory holding persisted grids.
#[derive(Debug, Clone)]
pub struct GridStore {
    dir: PathBuf,
}

impl GridStore {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self> {
        let dir = dir.into();
        std::fs::create_dir_all(&dir)?;
        Ok(Self { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn stem(index: usize, template: TemplateId, kind: AblationKind) -> String {
        format!("{index:04}_{}_{}", template.as_str().to_ascii_lowercase(), kind.score_name().to_ascii_lowercase())
    }

    fn paths(&self, stem: &str) -> (PathBuf, PathBuf) {
        (self.dir.join(format!("{stem}.csv")), self.dir.join(format!("{stem}.json")))
    }

    pub fn save(&self, stem: &str, grid: &ScoreGrid, text: &str, target_token: &str, config_hash: &str) -> Result<()> {
        let (csv_path, json_path) = self.paths(stem);
        let mut w = csv::Writer::from_path(&csv_path)?;
        for (layer, position, score) in grid.cells() {
            w.serialize(CellRecord {
                layer,
                position,
                score,
                restored_p: grid.restored_p(layer, position),
                corrupted_p: grid.corrupted_p,
            })?;
        }
        w.flush()?;
        let sidecar = GridSidecar {
            config_hash: config_hash.to_string(),
            kind: grid.kind,
            template: grid.prompt.template,
            text: text.to_string(),
            prompt: grid.prompt.clone(),
            target: grid.target,
            target_token: target_token.to_string(),
            layers: grid.layers,
            positions: grid.positions,
            clean_p: grid.clean_p,
            corrupted_p: grid.corrupted_p,
            sigma: grid.sigma,
            noise: grid.noise.clone(),
            draw_seeds: (0..grid.noise.samples).map(|s| draw_seed(&grid.noise, &grid.prompt, grid.kind, s)).collect(),
            forward_passes: grid.forward_passes,
        };
        std::fs::write(&json_path, serde_json::to_string_pretty(&sidecar)? + "\n")?;
        Ok(())
    }

    pub fn read_cells(&self, stem: &str) -> Result<Vec<CellRecord>> {
        let mut r = csv::Reader::from_path(self.paths(stem).0)?;
        r.deserialize().map(|x| x.map_err(LabError::from)).collect()
    }

    pub fn read_sidecar(&self, stem: &str) -> Result<GridSidecar> {
        let text = std::fs::read_to_string(self.paths(stem).1)?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Load a grid if both files exist and the sidecar carries `config_hash`.
    pub fn load(&self, stem: &str, config_hash: &str) -> Result<Option<ScoreGrid>> {
        let (csv_path, json_path) = self.paths(stem);
        if !csv_path.exists() || !json_path.exists() {
            return Ok(None);
        }
        let side = self.read_sidecar(stem)?;
        if side.config_hash != config_hash {
            return Ok(None);
        }
        let cells = self.read_cells(stem)?;
        let corrupt = |reason: &str| LabError::Corrupt { path: csv_path.clone(), reason: reason.into() };
        if cells.len() != side.layers * side.positions {
            return Err(corrupt("cell count disagrees with sidecar"));
        }
        let mut scores = vec![0.0; cells.len()];
        let mut restored = vec![0.0; cells.len()];
        for c in &cells {
            if c.layer >= side.layers || c.position >= side.positions {
                return Err(corrupt("cell outside grid"));
            }
            let i = c.layer * side.positions + c.position;
            scores[i] = c.score;
            restored[i] = c.restored_p;
        }
        Ok(Some(ScoreGrid {
            kind: side.kind,
            layers: side.layers,
            positions: side.positions,
            scores,
            restored,
            corrupted_p: side.corrupted_p,
            clean_p: side.clean_p,
            target: side.target,
            prompt: side.prompt,
            noise: side.noise,
            sigma: side.sigma,
            forward_passes: side.forward_passes,
        }))
    }
}
