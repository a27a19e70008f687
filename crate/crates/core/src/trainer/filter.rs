// SPDX-License-Identifier: MIT OR Apache-2.0

//! Stored-knowledge filter: keep the facts the model recalls under both
//! declarative templates.

use serde::{Deserialize, Serialize};

use crate::corpus::{KnowledgeTriple, KnowledgeWorld, Renderer, TemplateId};
use crate::error::Result;
use crate::model::{Model, PatchPlan};

pub const FILTER_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterFlags {
    pub triple: KnowledgeTriple,
    pub decl1: bool,
    pub decl2: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredSet {
    pub format_version: u32,
    /// Triples passing under both templates, in world order.
    pub triples: Vec<KnowledgeTriple>,
    /// One entry per world triple.
    pub flags: Vec<FilterFlags>,
    pub pass_rate: f64,
}

/// Whether the argmax next token after the query equals the object.
pub fn recalls(model: &Model, world: &KnowledgeWorld, triple: &KnowledgeTriple, template: TemplateId) -> Result<bool> {
    let prompt = Renderer::new(&world.vocabulary).query(triple, world.template(template))?;
    let dist = model.probe(&prompt.tokens, &PatchPlan::new())?;
    Ok(dist.argmax == world.vocabulary.id(&triple.object)?)
}

/// Fraction of world triples recalled under `template`.
pub fn object_accuracy(model: &Model, world: &KnowledgeWorld, template: TemplateId) -> Result<f64> {
    let mut hits = 0usize;
    for t in &world.triples {
        hits += usize::from(recalls(model, world, t, template)?);
    }
    Ok(hits as f64 / world.triples.len().max(1) as f64)
}

pub fn filter_known(model: &Model, world: &KnowledgeWorld) -> Result<FilteredSet> {
    let mut flags = Vec::with_capacity(world.triples.len());
    let mut triples = Vec::new();
    for t in &world.triples {
        let decl1 = recalls(model, world, t, TemplateId::Decl1)?;
        let decl2 = recalls(model, world, t, TemplateId::Decl2)?;
        if decl1 && decl2 {
            triples.push(t.clone());
        }
        flags.push(FilterFlags { triple: t.clone(), decl1, decl2 });
    }
    let pass_rate = triples.len() as f64 / world.triples.len().max(1) as f64;
    Ok(FilteredSet { format_version: FILTER_FORMAT_VERSION, triples, flags, pass_rate })
}
