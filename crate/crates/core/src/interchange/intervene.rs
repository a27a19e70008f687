// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::vectors::{extract_vectors, roles, KnowledgeVectors};
use crate::analysis::ComponentSpec;
use crate::corpus::{AnnotatedPrompt, CounterPair, KnowledgeTriple, KnowledgeWorld, PairMode, Renderer};
use crate::error::{LabError, Result};
use crate::model::{Model, NextTokenDistribution, PatchPlan};

/// Layers patched by one intervention.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerSelection {
    /// Every layer of each role's band at once.
    Band,
    Single(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionOutcome {
    pub mode: PairMode,
    pub selection: LayerSelection,
    pub source: KnowledgeTriple,
    pub reference: KnowledgeTriple,
    pub target: usize,
    pub patched_target_p: f64,
    pub textual_target_p: f64,
    pub patched_argmax: usize,
    pub textual_argmax: usize,
    pub argmax_match: bool,
    pub patched_probs: Vec<f64>,
}

/// Whether `requested` may run on a pair built for `built`.
pub fn mode_compatible(built: PairMode, requested: PairMode) -> bool {
    built == requested
        || matches!((built, requested), (PairMode::ObjectOnly, PairMode::Dual) | (PairMode::Dual, PairMode::ObjectOnly))
}

/// Patch plan writing `vectors` into `source` for `mode`.
///
/// Subject and relation vectors are broadcast to every token of the source
/// span; the object vector goes to the final token.
pub fn build_plan(
    source: &AnnotatedPrompt,
    vectors: &KnowledgeVectors,
    mode: PairMode,
    spec: &ComponentSpec,
    selection: LayerSelection,
) -> Result<PatchPlan> {
    let mut plan = PatchPlan::new();
    for &role in roles(mode) {
        let band = role.band(spec);
        let layers: Vec<usize> = match selection {
            LayerSelection::Band => band.layers().collect(),
            LayerSelection::Single(l) => {
                band.check(l)?;
                vec![l]
            }
        };
        for layer in layers {
            let v = vectors
                .get(role, layer)
                .ok_or_else(|| LabError::InvalidPlan(format!("no {role:?} vector at layer {layer}")))?;
            for pos in role.target_positions(source) {
                plan.push(layer, pos, v.to_vec());
            }
        }
    }
    Ok(plan)
}

/// Prompt for the textual recombination a pair stands for.
pub fn recombined_prompt(world: &KnowledgeWorld, pair: &CounterPair, mode: PairMode) -> Result<AnnotatedPrompt> {
    let (s, r) = mode.recombine(&pair.source.triple, &pair.reference.triple);
    let triple = KnowledgeTriple::new(s, r, pair.target.clone());
    Renderer::new(&world.vocabulary).query(&triple, world.template(pair.template))
}

/// Plain forward pass on the recombined prompt.
pub fn textual_baseline(model: &Model, world: &KnowledgeWorld, pair: &CounterPair, mode: PairMode) -> Result<NextTokenDistribution> {
    model.probe(&recombined_prompt(world, pair, mode)?.tokens, &PatchPlan::new())
}

/// Run the source with reference vectors patched in, given precomputed
/// reference vectors and textual baseline.
pub fn interchange_with(
    model: &Model,
    pair: &CounterPair,
    mode: PairMode,
    spec: &ComponentSpec,
    selection: LayerSelection,
    vectors: &KnowledgeVectors,
    textual: &NextTokenDistribution,
) -> Result<InterventionOutcome> {
    if !mode_compatible(pair.mode, mode) {
        return Err(LabError::Config(format!("{mode} interchange on a {} pair", pair.mode)));
    }
    let plan = build_plan(&pair.source, vectors, mode, spec, selection)?;
    let patched = model.probe(&pair.source.tokens, &plan)?;
    Ok(InterventionOutcome {
        mode,
        selection,
        source: pair.source.triple.clone(),
        reference: pair.reference.triple.clone(),
        target: pair.target_id,
        patched_target_p: patched.prob(pair.target_id)?,
        textual_target_p: textual.prob(pair.target_id)?,
        patched_argmax: patched.argmax,
        textual_argmax: textual.argmax,
        argmax_match: patched.argmax == textual.argmax,
        patched_probs: patched.probs,
    })
}

pub fn interchange(
    model: &Model,
    world: &KnowledgeWorld,
    pair: &CounterPair,
    mode: PairMode,
    spec: &ComponentSpec,
    selection: LayerSelection,
) -> Result<InterventionOutcome> {
    let vectors = extract_vectors(model, &pair.reference, spec)?;
    let textual = textual_baseline(model, world, pair, mode)?;
    interchange_with(model, pair, mode, spec, selection, &vectors, &textual)
}

/// Distinct positions a plan writes to.
pub fn plan_positions(plan: &PatchPlan) -> Vec<usize> {
    let mut p: Vec<usize> = plan.cells().into_iter().map(|c| c.1).collect();
    p.sort_unstable();
    p.dedup();
    p
}
