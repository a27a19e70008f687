// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Transformer shape.
///
/// `layers` counts residual-stream layers as cached: index 0 is the
/// post-embedding input and each of the `layers - 1` transformer blocks adds
/// one more, so the head reads layer `layers - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    pub ln_eps: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { layers: 8, d_model: 128, heads: 4, d_ff: 256, vocab_size: 0, max_seq_len: 40, ln_eps: 1e-5 }
    }
}

impl ModelConfig {
    pub fn blocks(&self) -> usize {
        self.layers - 1
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.heads
    }

    /// Shape checks needed by the forward pass itself.
    pub fn validate(&self) -> Result<()> {
        if self.layers < 2 {
            return Err(LabError::Config("need at least one transformer block (layers >= 2)".into()));
        }
        if self.heads == 0 || !self.d_model.is_multiple_of(self.heads) {
            return Err(LabError::Config(format!(
                "d_model {} not divisible by {} heads",
                self.d_model, self.heads
            )));
        }
        if self.d_model == 0 || self.d_ff == 0 || self.vocab_size == 0 || self.max_seq_len == 0 {
            return Err(LabError::Config("model dimensions must be positive".into()));
        }
        if !(self.ln_eps > 0.0) {
            return Err(LabError::Config("ln_eps must be positive".into()));
        }
        Ok(())
    }

    /// Stricter check for models used in locality work, where early, middle
    /// and late bands must be distinguishable.
    pub fn validate_for_analysis(&self) -> Result<()> {
        self.validate()?;
        if self.layers < 4 {
            return Err(LabError::Config(format!("analysis needs layers >= 4, got {}", self.layers)));
        }
        Ok(())
    }
}
