// SPDX-License-Identifier: MIT OR Apache-2.0

//! Counter-knowledge interchange: swapping subject, relation and object
//! vectors between prompts and comparing against textual recombination.

pub mod experiments;
pub mod intervene;
pub mod io;
pub mod vectors;

pub use experiments::{
    interchange_metrics, layer_sweep, mean_interchange, mode_band, GroupAccuracy, InterchangeMetrics,
    MeanInterchangeResult, SweepCurve, SweepResult,
};
pub use intervene::{
    build_plan, interchange, interchange_with, mode_compatible, plan_positions, recombined_prompt, textual_baseline,
    InterventionOutcome, LayerSelection,
};
pub use io::{write_accuracy_table, write_jsonl, write_outcomes, write_sweep_csv, AccuracyRow};
pub use vectors::{extract_vectors, roles, vectors_from_cache, KnowledgeVectors, LayerVector, Role};
