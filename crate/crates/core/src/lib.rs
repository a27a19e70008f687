// SPDX-License-Identifier: MIT OR Apache-2.0

//! A toy-scale laboratory for knowledge-recall interpretability.
//!
//! A small decoder-only transformer memorises a synthetic world of
//! (subject, relation, object) facts. On top of it the crate implements
//! noise-ablation knowledge scoring with corruption restoration, locality
//! analysis of the resulting score grids, counter-knowledge interchange
//! interventions, and contextual knowledge editing augmented by activation
//! patching.

pub mod analysis;
pub mod cli;
pub mod corpus;
pub mod editing;
pub mod error;
pub mod interchange;
pub mod model;
pub mod scoring;
pub mod trainer;

pub use error::{LabError, Result};
