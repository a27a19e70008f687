// SPDX-License-Identifier: MIT OR Apache-2.0

//! The synthetic knowledge world: pseudoword entities, functional relations
//! with closed object domains, and the triples linking them.

use std::collections::{BTreeSet, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::template::{PromptTemplate, TemplateId};
use super::vocab::{tokenize, Vocabulary};
use crate::error::{LabError, Result};

pub const WORLD_FORMAT_VERSION: u32 = 1;

/// One (subject, relation, object) fact.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct KnowledgeTriple {
    pub subject: String,
    pub relation: String,
    pub object: String,
}

impl KnowledgeTriple {
    pub fn new(subject: impl Into<String>, relation: impl Into<String>, object: impl Into<String>) -> Self {
        Self { subject: subject.into(), relation: relation.into(), object: object.into() }
    }
}

/// A relation and the closed set of objects it may map to.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Relation {
    pub name: String,
    pub objects: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub subjects: usize,
    pub relations: usize,
    pub triples: usize,
    pub objects_per_relation: usize,
    /// Probability that a subject name has two words.
    pub multiword_subject_rate: f64,
    /// Probability that a relation name has two words.
    pub multiword_relation_rate: f64,
    /// Optional pattern overrides, keyed by template id.
    pub template_overrides: Vec<PromptTemplate>,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            subjects: 20,
            relations: 6,
            triples: 60,
            objects_per_relation: 8,
            multiword_subject_rate: 0.3,
            multiword_relation_rate: 0.2,
            template_overrides: Vec::new(),
        }
    }
}

impl WorldConfig {
    pub fn validate(&self) -> Result<()> {
        if self.relations < 2 {
            return Err(LabError::Config("need at least 2 relations".into()));
        }
        if self.subjects < 4 {
            return Err(LabError::Config("need at least 4 subjects".into()));
        }
        if self.objects_per_relation < 2 {
            return Err(LabError::Config("each relation needs an object domain of size >= 2".into()));
        }
        if self.triples > self.subjects * self.relations {
            return Err(LabError::Config(format!(
                "{} triples exceed the {} available (subject, relation) slots",
                self.triples,
                self.subjects * self.relations
            )));
        }
        if self.triples < 2 * self.relations {
            return Err(LabError::Config(
                "need at least two triples per relation so each relation has two distinct objects".into(),
            ));
        }
        for r in [self.multiword_subject_rate, self.multiword_relation_rate] {
            if !(0.0..=1.0).contains(&r) {
                return Err(LabError::Config("multiword rates must lie in [0, 1]".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeWorld {
    pub format_version: u32,
    pub seed: u64,
    pub config: WorldConfig,
    pub subjects: Vec<String>,
    pub relations: Vec<Relation>,
    pub triples: Vec<KnowledgeTriple>,
    pub templates: Vec<PromptTemplate>,
    pub vocabulary: Vocabulary,
}

const CONSONANTS: &[u8] = b"bdfgklmnprstvz";
const VOWELS: &[u8] = b"aeiou";

struct WordForge {
    rng: ChaCha8Rng,
    used: HashSet<String>,
}

impl WordForge {
    fn word(&mut self, syllables: usize, capital: bool) -> String {
        loop {
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(CONSONANTS[self.rng.random_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[self.rng.random_range(0..VOWELS.len())] as char);
            }
            if capital {
                w[..1].make_ascii_uppercase();
            }
            if self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

/// Build a world deterministically from `config` and `seed`.
pub fn generate_world(config: &WorldConfig, seed: u64) -> Result<KnowledgeWorld> {
    config.validate()?;
    let templates: Vec<PromptTemplate> = TemplateId::ALL
        .iter()
        .map(|&id| {
            config
                .template_overrides
                .iter()
                .find(|t| t.id == id)
                .cloned()
                .unwrap_or_else(|| PromptTemplate::builtin(id))
        })
        .collect();
    let mut literals = Vec::new();
    for t in &templates {
        for w in t.literal_tokens()? {
            if !literals.contains(&w) {
                literals.push(w);
            }
        }
    }

    let mut forge = WordForge { rng: ChaCha8Rng::seed_from_u64(seed), used: literals.iter().cloned().collect() };

    // Subject names draw words from a shared pool so two-word names can share
    // a leading word, like real multi-token entity names.
    let pool_size = config.subjects + config.subjects / 2 + 2;
    let subject_words: Vec<String> = (0..pool_size).map(|_| forge.word(2, true)).collect();
    let mut subjects = Vec::with_capacity(config.subjects);
    let mut taken = HashSet::new();
    while subjects.len() < config.subjects {
        let two = forge.rng.random_bool(config.multiword_subject_rate);
        let first = &subject_words[forge.rng.random_range(0..pool_size)];
        let name = if two {
            let second = &subject_words[forge.rng.random_range(0..pool_size)];
            if second == first {
                continue;
            }
            format!("{first} {second}")
        } else {
            first.clone()
        };
        if taken.insert(name.clone()) {
            subjects.push(name);
        }
    }

    let mut relations = Vec::with_capacity(config.relations);
    for _ in 0..config.relations {
        let name = if forge.rng.random_bool(config.multiword_relation_rate) {
            format!("{} {}", forge.word(2, false), forge.word(2, false))
        } else {
            forge.word(3, false)
        };
        let objects = (0..config.objects_per_relation).map(|_| forge.word(3, true)).collect();
        relations.push(Relation { name, objects });
    }

    // Balanced slot assignment: relation r receives either floor or ceil of
    // triples / relations distinct subjects.
    let base = config.triples / config.relations;
    let extra = config.triples % config.relations;
    let mut triples = Vec::with_capacity(config.triples);
    for (ri, rel) in relations.iter().enumerate() {
        let want = base + usize::from(ri < extra);
        if want > config.subjects {
            return Err(LabError::Config(format!(
                "relation {ri} needs {want} subjects but only {} exist",
                config.subjects
            )));
        }
        let mut idx: Vec<usize> = (0..config.subjects).collect();
        idx.shuffle(&mut forge.rng);
        idx.truncate(want);
        idx.sort_unstable();
        let mut objs: Vec<usize> =
            (0..want).map(|_| forge.rng.random_range(0..rel.objects.len())).collect();
        if objs.iter().all(|&o| o == objs[0]) {
            objs[want - 1] = (objs[0] + 1) % rel.objects.len();
        }
        for (si, oi) in idx.into_iter().zip(objs) {
            triples.push(KnowledgeTriple::new(&subjects[si], &rel.name, &rel.objects[oi]));
        }
    }

    let mut vocab_tokens = literals;
    let mut seen: HashSet<String> = vocab_tokens.iter().cloned().collect();
    let mut add = |w: String, v: &mut Vec<String>| {
        if seen.insert(w.clone()) {
            v.push(w);
        }
    };
    for s in &subjects {
        for w in tokenize(s) {
            add(w, &mut vocab_tokens);
        }
    }
    for r in &relations {
        for w in tokenize(&r.name) {
            add(w, &mut vocab_tokens);
        }
    }
    for r in &relations {
        for o in &r.objects {
            add(o.clone(), &mut vocab_tokens);
        }
    }

    let world = KnowledgeWorld {
        format_version: WORLD_FORMAT_VERSION,
        seed,
        config: config.clone(),
        subjects,
        relations,
        triples,
        templates,
        vocabulary: Vocabulary::new(vocab_tokens)?,
    };
    world.validate()?;
    Ok(world)
}

impl KnowledgeWorld {
    pub fn template(&self, id: TemplateId) -> &PromptTemplate {
        self.templates.iter().find(|t| t.id == id).expect("world carries all templates")
    }

    pub fn relation(&self, name: &str) -> Result<&Relation> {
        self.relations
            .iter()
            .find(|r| r.name == name)
            .ok_or_else(|| LabError::UnknownSymbol(name.to_string()))
    }

    /// Every entity symbol: subjects then all objects.
    pub fn entities(&self) -> Vec<&str> {
        self.subjects
            .iter()
            .map(String::as_str)
            .chain(self.relations.iter().flat_map(|r| r.objects.iter().map(String::as_str)))
            .collect()
    }

    /// Object of `(subject, relation)`, if the world holds that fact.
    pub fn object_of(&self, subject: &str, relation: &str) -> Option<&str> {
        self.triples
            .iter()
            .find(|t| t.subject == subject && t.relation == relation)
            .map(|t| t.object.as_str())
    }

    /// Ids of every object token, in relation order.
    pub fn object_token_ids(&self) -> Result<Vec<usize>> {
        self.relations
            .iter()
            .flat_map(|r| r.objects.iter())
            .map(|o| self.vocabulary.id(o))
            .collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let w: KnowledgeWorld = serde_json::from_str(text)?;
        if w.format_version != WORLD_FORMAT_VERSION {
            return Err(LabError::Config(format!("unsupported world format {}", w.format_version)));
        }
        w.validate()?;
        Ok(w)
    }

    /// Check every structural invariant of the world.
    pub fn validate(&self) -> Result<()> {
        let subjects: HashSet<&str> = self.subjects.iter().map(String::as_str).collect();
        let mut slots = HashSet::new();
        for t in &self.triples {
            if !subjects.contains(t.subject.as_str()) {
                return Err(LabError::UnknownSymbol(t.subject.clone()));
            }
            let rel = self.relation(&t.relation)?;
            if !rel.objects.contains(&t.object) {
                return Err(LabError::Config(format!(
                    "object {} outside the domain of {}",
                    t.object, t.relation
                )));
            }
            if !slots.insert((t.subject.as_str(), t.relation.as_str())) {
                return Err(LabError::Config(format!(
                    "duplicate slot ({}, {})",
                    t.subject, t.relation
                )));
            }
        }
        for rel in &self.relations {
            let distinct: BTreeSet<&str> = self
                .triples
                .iter()
                .filter(|t| t.relation == rel.name)
                .map(|t| t.object.as_str())
                .collect();
            if distinct.len() < 2 {
                return Err(LabError::Config(format!("relation {} has < 2 distinct objects", rel.name)));
            }
            for o in &rel.objects {
                if tokenize(o).len() != 1 || !self.vocabulary.contains(o) {
                    return Err(LabError::Config(format!("object {o} is not a single vocabulary token")));
                }
            }
        }
        // entity and relation word sets are disjoint
        let subject_words: HashSet<String> = self.subjects.iter().flat_map(|s| tokenize(s)).collect();
        for rel in &self.relations {
            for w in tokenize(&rel.name) {
                if subject_words.contains(&w) || rel.objects.contains(&w) {
                    return Err(LabError::Config(format!("relation word {w} collides with an entity")));
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_in_seed() {
        let c = WorldConfig::default();
        let a = generate_world(&c, 7).unwrap();
        let b = generate_world(&c, 7).unwrap();
        assert_eq!(a.to_json().unwrap(), b.to_json().unwrap());
        let other = generate_world(&c, 8).unwrap();
        assert_ne!(a.to_json().unwrap(), other.to_json().unwrap());
    }

    #[test]
    fn single_object_domain_rejected() {
        let c = WorldConfig { objects_per_relation: 1, ..WorldConfig::default() };
        assert!(generate_world(&c, 1).is_err());
    }

    #[test]
    fn too_many_triples_rejected() {
        let c = WorldConfig { subjects: 4, relations: 2, triples: 9, ..WorldConfig::default() };
        assert!(matches!(generate_world(&c, 1), Err(LabError::Config(_))));
    }

    #[test]
    fn reference_config_brute_force_scan() {
        let c = WorldConfig { subjects: 20, relations: 6, triples: 60, ..WorldConfig::default() };
        let w = generate_world(&c, 3).unwrap();
        assert_eq!(w.triples.len(), 60);
        for (i, a) in w.triples.iter().enumerate() {
            for b in &w.triples[i + 1..] {
                assert!(!(a.subject == b.subject && a.relation == b.relation));
            }
        }
    }

    #[test]
    fn json_round_trip() {
        let w = generate_world(&WorldConfig::default(), 11).unwrap();
        let back = KnowledgeWorld::from_json(&w.to_json().unwrap()).unwrap();
        assert_eq!(w, back);
    }
}
