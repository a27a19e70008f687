// SPDX-License-Identifier: MIT OR Apache-2.0

//! Gaussian textual-knowledge ablation.

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::corpus::AnnotatedPrompt;
use crate::error::{LabError, Result};
use crate::model::{ActivationCache, EmbeddingNoise, Model, NextTokenDistribution, PatchPlan};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Multiplier `k` on the embedding standard deviation.
    pub scale: f64,
    /// Independent noise draws averaged per grid.
    pub samples: usize,
    pub seed: u64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self { scale: 5.0, samples: 1, seed: 0 }
    }
}

impl NoiseConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.scale >= 0.0) || !self.scale.is_finite() {
            return Err(LabError::Config("noise scale must be finite and non-negative".into()));
        }
        if self.samples == 0 {
            return Err(LabError::Config("noise samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which knowledge span is corrupted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AblationKind {
    Subject,
    Relation,
    /// Subject and relation together.
    Object,
}

impl AblationKind {
    pub const ALL: [AblationKind; 3] = [AblationKind::Subject, AblationKind::Relation, AblationKind::Object];

    /// Noised positions, ascending.
    pub fn positions(self, prompt: &AnnotatedPrompt) -> Vec<usize> {
        let mut p: Vec<usize> = match self {
            AblationKind::Subject => prompt.subject.positions().collect(),
            AblationKind::Relation => prompt.relation.positions().collect(),
            AblationKind::Object => prompt.subject.positions().chain(prompt.relation.positions()).collect(),
        };
        p.sort_unstable();
        p
    }

    pub fn score_name(self) -> &'static str {
        match self {
            AblationKind::Subject => "SES",
            AblationKind::Relation => "RES",
            AblationKind::Object => "OES",
        }
    }
}

impl fmt::Display for AblationKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.score_name())
    }
}

impl FromStr for AblationKind {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "SES" | "SUBJECT" => Ok(AblationKind::Subject),
            "RES" | "RELATION" => Ok(AblationKind::Relation),
            "OES" | "OBJECT" => Ok(AblationKind::Object),
            _ => Err(LabError::Config(format!("unknown score kind `{s}`"))),
        }
    }
}

/// Seed for one noise draw, derived from the prompt identity so results do
/// not depend on evaluation order.
pub fn draw_seed(config: &NoiseConfig, prompt: &AnnotatedPrompt, kind: AblationKind, sample: usize) -> u64 {
    let mut h = Sha256::new();
    h.update(config.seed.to_le_bytes());
    for t in &prompt.tokens {
        h.update((*t as u64).to_le_bytes());
    }
    h.update([kind as u8]);
    h.update((sample as u64).to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Gaussian noise with per-component standard deviation `scale * sigma` at
/// every position of the kind's span set.
pub fn ablation_noise(
    prompt: &AnnotatedPrompt,
    kind: AblationKind,
    sigma: f64,
    width: usize,
    config: &NoiseConfig,
    sample: usize,
) -> Result<EmbeddingNoise> {
    let positions = kind.positions(prompt);
    if positions.is_empty() {
        return Err(LabError::Prompt(format!("{kind} ablation has no positions")));
    }
    let std = config.scale * sigma;
    let normal = Normal::new(0.0, std).map_err(|e| LabError::Config(e.to_string()))?;
    let mut rng = ChaCha8Rng::seed_from_u64(draw_seed(config, prompt, kind, sample));
    let vectors = positions.iter().map(|_| (0..width).map(|_| normal.sample(&mut rng)).collect()).collect();
    Ok(EmbeddingNoise { positions, vectors })
}

/// Corrupted run for noise draw `sample`.
pub fn ablate_sample(
    model: &Model,
    prompt: &AnnotatedPrompt,
    kind: AblationKind,
    config: &NoiseConfig,
    sample: usize,
) -> Result<(NextTokenDistribution, ActivationCache)> {
    config.validate()?;
    let noise = ablation_noise(prompt, kind, model.embedding_std(), model.config().d_model, config, sample)?;
    let out = model.forward(&prompt.tokens, &PatchPlan::with_noise(noise))?;
    Ok((out.dist, out.cache))
}

/// Corrupted run for the first noise draw.
pub fn ablate(
    model: &Model,
    prompt: &AnnotatedPrompt,
    kind: AblationKind,
    config: &NoiseConfig,
) -> Result<(NextTokenDistribution, ActivationCache)> {
    ablate_sample(model, prompt, kind, config, 0)
}
