// SPDX-License-Identifier: MIT OR Apache-2.0

//! Counter-knowledge source/reference pairs and knowledge-editing sets.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::template::{AnnotatedPrompt, Renderer, TemplateId};
use super::world::{KnowledgeTriple, KnowledgeWorld};
use crate::error::{LabError, Result};

pub const PAIRS_FORMAT_VERSION: u32 = 1;

/// Which functional component a pair isolates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PairMode {
    SubjectOnly,
    RelationOnly,
    ObjectOnly,
    Dual,
}

impl PairMode {
    pub const ALL: [PairMode; 4] =
        [PairMode::SubjectOnly, PairMode::RelationOnly, PairMode::ObjectOnly, PairMode::Dual];

    pub fn as_str(self) -> &'static str {
        match self {
            PairMode::SubjectOnly => "SUBJECT_ONLY",
            PairMode::RelationOnly => "RELATION_ONLY",
            PairMode::ObjectOnly => "OBJECT_ONLY",
            PairMode::Dual => "DUAL",
        }
    }

    /// Whether `(source, reference)` has this mode's equality pattern.
    pub fn admits(self, source: &KnowledgeTriple, reference: &KnowledgeTriple) -> bool {
        let same_s = source.subject == reference.subject;
        let same_r = source.relation == reference.relation;
        match self {
            PairMode::SubjectOnly => !same_s && same_r,
            PairMode::RelationOnly => same_s && !same_r,
            PairMode::ObjectOnly | PairMode::Dual => !same_s && !same_r,
        }
    }

    /// The (subject, relation) the textual recombination queries.
    pub fn recombine<'a>(
        self,
        source: &'a KnowledgeTriple,
        reference: &'a KnowledgeTriple,
    ) -> (&'a str, &'a str) {
        match self {
            PairMode::SubjectOnly => (&reference.subject, &source.relation),
            PairMode::RelationOnly => (&source.subject, &reference.relation),
            PairMode::ObjectOnly | PairMode::Dual => (&reference.subject, &reference.relation),
        }
    }
}

impl fmt::Display for PairMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PairMode {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        PairMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s) || m.as_str().replace('_', "-").eq_ignore_ascii_case(s))
            .ok_or_else(|| LabError::Config(format!("unknown pair mode `{s}`")))
    }
}

/// A source query and a reference query sharing one template.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterPair {
    pub mode: PairMode,
    pub template: TemplateId,
    pub source: AnnotatedPrompt,
    pub reference: AnnotatedPrompt,
    /// Ground-truth object of the recombined (subject, relation).
    pub target: String,
    pub target_id: usize,
}

impl CounterPair {
    pub fn check(&self, world: &KnowledgeWorld) -> Result<()> {
        let (s, r) = (&self.source.triple, &self.reference.triple);
        if self.source.template != self.reference.template {
            return Err(LabError::Prompt("pair prompts use different templates".into()));
        }
        if !self.mode.admits(s, r) {
            return Err(LabError::Prompt(format!("pair violates {} pattern", self.mode)));
        }
        let (rs, rr) = self.mode.recombine(s, r);
        match world.object_of(rs, rr) {
            Some(o) if o == self.target => Ok(()),
            _ => Err(LabError::Prompt(format!("target {} is not object({rs}, {rr})", self.target))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub format_version: u32,
    pub seed: u64,
    pub pairs: Vec<CounterPair>,
}

/// Sample `count` distinct counter-knowledge pairs of `mode` from `pool`.
///
/// Candidates are every ordered (source, reference) combination of pool
/// triples matching the mode's pattern whose recombined fact exists in the
/// world and whose target differs from the source's own object; the sample is
/// uniform without replacement.
pub fn build_pairs(
    world: &KnowledgeWorld,
    pool: &[KnowledgeTriple],
    template: TemplateId,
    mode: PairMode,
    count: usize,
    seed: u64,
) -> Result<Vec<CounterPair>> {
    let mut candidates = Vec::new();
    for (i, src) in pool.iter().enumerate() {
        for (j, refr) in pool.iter().enumerate() {
            if i == j || !mode.admits(src, refr) {
                continue;
            }
            let (rs, rr) = mode.recombine(src, refr);
            match world.object_of(rs, rr) {
                Some(o) if o != src.object => candidates.push((i, j, o.to_string())),
                _ => {}
            }
        }
    }
    if candidates.is_empty() {
        return Err(LabError::Unsatisfiable(format!("no {mode} pairs exist in a pool of {}", pool.len())));
    }
    if candidates.len() < count {
        return Err(LabError::Unsatisfiable(format!(
            "requested {count} {mode} pairs but only {} exist",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(count);

    let renderer = Renderer::new(&world.vocabulary);
    let tpl = world.template(template);
    candidates
        .into_iter()
        .map(|(i, j, target)| {
            Ok(CounterPair {
                mode,
                template,
                source: renderer.query(&pool[i], tpl)?,
                reference: renderer.query(&pool[j], tpl)?,
                target_id: world.vocabulary.id(&target)?,
                target,
            })
        })
        .collect()
}

/// An original fact and its replacement object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EditItem {
    pub original: KnowledgeTriple,
    pub new_object: String,
    /// Template of the query that follows the context statement.
    pub query_template: TemplateId,
}

impl EditItem {
    pub fn new_triple(&self) -> KnowledgeTriple {
        KnowledgeTriple { object: self.new_object.clone(), ..self.original.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditSet {
    pub format_version: u32,
    pub seed: u64,
    pub items: Vec<EditItem>,
}

/// Build `count` distinct edits over `pool`: each replaces the object with a
/// different member of the same relation's domain. Query templates are drawn
/// uniformly from DECL2 and QA.
pub fn make_edit_set(
    world: &KnowledgeWorld,
    pool: &[KnowledgeTriple],
    count: usize,
    seed: u64,
) -> Result<Vec<EditItem>> {
    let mut candidates = Vec::new();
    for t in pool {
        let rel = world.relation(&t.relation)?;
        if rel.objects.len() < 2 {
            return Err(LabError::Unsatisfiable(format!("relation {} has a one-object domain", rel.name)));
        }
        for o in &rel.objects {
            if *o != t.object {
                candidates.push((t.clone(), o.clone()));
            }
        }
    }
    if candidates.len() < count {
        return Err(LabError::Unsatisfiable(format!(
            "requested {count} edits but only {} distinct ones exist",
            candidates.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    candidates.shuffle(&mut rng);
    candidates.truncate(count);
    Ok(candidates
        .into_iter()
        .map(|(original, new_object)| EditItem {
            original,
            new_object,
            query_template: if rng.random_bool(0.5) { TemplateId::Decl2 } else { TemplateId::Qa },
        })
        .collect())
}
