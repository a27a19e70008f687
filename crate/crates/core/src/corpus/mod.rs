// SPDX-License-Identifier: MIT OR Apache-2.0

//! Synthetic knowledge world, templates, counter-knowledge pairs and edit sets.

pub mod pairs;
pub mod template;
pub mod vocab;
pub mod world;

pub use pairs::{build_pairs, make_edit_set, CounterPair, EditItem, EditSet, PairMode, PairSet};
pub use template::{AnnotatedPrompt, PromptTemplate, Region, Renderer, Span, TemplateId};
pub use vocab::{detokenize, tokenize, Vocabulary};
pub use world::{generate_world, KnowledgeTriple, KnowledgeWorld, Relation, WorldConfig};
