// SPDX-License-Identifier: MIT OR Apache-2.0

//! Corruption-restoration score grids.

use serde::{Deserialize, Serialize};

use super::noise::{ablate_sample, AblationKind, NoiseConfig};
use crate::corpus::AnnotatedPrompt;
use crate::error::{LabError, Result};
use crate::model::{Model, PatchPlan};

/// Layer-by-position grid of one score kind for one prompt.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreGrid {
    pub kind: AblationKind,
    pub layers: usize,
    pub positions: usize,
    /// Row-major `[layer][position]`, each `restored - corrupted_p`.
    pub scores: Vec<f64>,
    pub restored: Vec<f64>,
    pub corrupted_p: f64,
    pub clean_p: f64,
    pub target: usize,
    pub prompt: AnnotatedPrompt,
    pub noise: NoiseConfig,
    pub sigma: f64,
    pub forward_passes: usize,
}

impl ScoreGrid {
    pub fn score(&self, layer: usize, position: usize) -> f64 {
        self.scores[layer * self.positions + position]
    }

    pub fn restored_p(&self, layer: usize, position: usize) -> f64 {
        self.restored[layer * self.positions + position]
    }

    /// Scores of one layer across positions.
    pub fn row(&self, layer: usize) -> &[f64] {
        &self.scores[layer * self.positions..(layer + 1) * self.positions]
    }

    /// Cells `(layer, position, score)` in row-major order.
    pub fn cells(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.scores.iter().enumerate().map(move |(i, &s)| (i / self.positions, i % self.positions, s))
    }

    pub fn max_score(&self) -> f64 {
        self.scores.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Clean run, corrupted run, then one restoring run per `(layer, position)`.
///
/// Each restoring run resumes from the corrupted cache at the patched layer,
/// which reproduces a full patched pass because nothing below that layer
/// changes. With `samples > 1` restored and corrupted probabilities are
/// averaged over draws before differencing.
pub fn score_grid(
    model: &Model,
    prompt: &AnnotatedPrompt,
    target: usize,
    kind: AblationKind,
    noise: &NoiseConfig,
) -> Result<ScoreGrid> {
    noise.validate()?;
    prompt.check()?;
    let (layers, n) = (model.config().layers, prompt.len());
    if target >= model.config().vocab_size {
        return Err(LabError::TokenOutOfRange { id: target, vocab: model.config().vocab_size });
    }
    let clean = model.forward(&prompt.tokens, &PatchPlan::new())?;
    let clean_p = clean.dist.prob(target)?;
    let mut passes = 1;
    let mut restored = vec![0.0; layers * n];
    let mut corrupted_p = 0.0;
    let m = noise.samples as f64;
    for sample in 0..noise.samples {
        let (dist, base) = ablate_sample(model, prompt, kind, noise, sample)?;
        passes += 1;
        corrupted_p += dist.prob(target)? / m;
        for layer in 0..layers {
            for pos in 0..n {
                let plan = PatchPlan::new().patch(layer, pos, clean.cache.read(layer, pos)?.to_vec());
                let p = model.resume(&prompt.tokens, &base, layer, &plan)?.prob(target)?;
                restored[layer * n + pos] += p / m;
                passes += 1;
            }
        }
    }
    let scores = restored.iter().map(|r| r - corrupted_p).collect();
    Ok(ScoreGrid {
        kind,
        layers,
        positions: n,
        scores,
        restored,
        corrupted_p,
        clean_p,
        target,
        prompt: prompt.clone(),
        noise: noise.clone(),
        sigma: model.embedding_std(),
        forward_passes: passes,
    })
}
