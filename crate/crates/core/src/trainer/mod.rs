// SPDX-License-Identifier: MIT OR Apache-2.0

//! Memorisation training, gradient checking and the stored-knowledge filter.

pub mod data;
pub mod filter;
pub mod gradcheck;
pub mod train;

pub use data::{join_context, SequenceSampler, TrainMixture, SEPARATOR};
pub use filter::{filter_known, object_accuracy, recalls, FilterFlags, FilteredSet};
pub use gradcheck::{gradient_check, GradCheckConfig, GradCheckReport, ModelObjective, Objective};
pub use train::{resolve_model_config, train, write_train_log, TrainConfig, TrainLogRow, TrainReport};
