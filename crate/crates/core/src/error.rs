// SPDX-License-Identifier: MIT OR Apache-2.0

//! Crate-wide error type.

use std::path::PathBuf;

/// Errors raised anywhere in the lab.
#[derive(Debug, thiserror::Error)]
pub enum LabError {
    /// A configuration value is out of its legal range.
    #[error("invalid config: {0}")]
    Config(String),

    /// A token or symbol is not part of the closed vocabulary.
    #[error("unknown symbol `{0}`")]
    UnknownSymbol(String),

    /// A token id is outside the vocabulary.
    #[error("token id {id} out of range for vocabulary of {vocab}")]
    TokenOutOfRange { id: usize, vocab: usize },

    /// A patch directive or cache read addresses a cell that does not exist.
    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    /// A patch plan is malformed (duplicate cell, bad width, ...).
    #[error("invalid patch plan: {0}")]
    InvalidPlan(String),

    /// The requested counter-knowledge or edit set cannot be built from the world.
    #[error("unsatisfiable request: {0}")]
    Unsatisfiable(String),

    /// A prompt lacks the span an operation needs.
    #[error("prompt error: {0}")]
    Prompt(String),

    /// A layer selection falls outside the component band it must respect.
    #[error("layer {layer} outside band {lo}..={hi}")]
    LayerOutsideBand { layer: usize, lo: usize, hi: usize },

    /// Training produced a non-finite loss.
    #[error("training diverged at step {step}: loss = {loss}")]
    Diverged { step: usize, loss: f64 },

    /// A persisted artifact failed validation.
    #[error("corrupt artifact {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },

    /// A pipeline stage ran before the stage it depends on.
    #[error("pipeline order: {0}")]
    PipelineOrder(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, LabError>;
