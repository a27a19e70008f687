// SPDX-License-Identifier: MIT OR Apache-2.0

//! Noise ablation, corruption restoration and knowledge-score grids.

pub mod grid;
pub mod noise;
pub mod store;
pub mod suite;

pub use grid::{score_grid, ScoreGrid};
pub use noise::{ablate, ablate_sample, ablation_noise, draw_seed, AblationKind, NoiseConfig};
pub use store::{CellRecord, GridSidecar, GridStore};
pub use suite::{run_score_suite, ScoreSuite, SuiteFailure};
