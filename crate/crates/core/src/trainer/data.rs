// SPDX-License-Identifier: MIT OR Apache-2.0

//! Training-sequence sampling over a knowledge world.

use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{AnnotatedPrompt, KnowledgeTriple, KnowledgeWorld, Renderer, TemplateId};
use crate::error::{LabError, Result};
use crate::model::backprop::TrainSequence;

/// Separator placed between a context statement and the query that follows.
pub const SEPARATOR: &str = ".";

/// Relative sampling weights of the three sequence families.
///
/// * `statements`: a known fact rendered with one template, predicting the
///   object at the final query token.
/// * `consistent_context`: a true statement, the separator, then a query on
///   the same fact.
/// * `counterfactual_context`: a statement about an (s, r) slot the world
///   leaves empty, with a random object from the relation's domain, then a
///   query that must copy that object.
/// * `contradicted_context`: a statement giving a known fact a different
///   object from the relation's domain, then a query whose target stays the
///   memorised object, or with probability `contradicted_trust` the
///   context's object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainMixture {
    pub statements: f64,
    pub consistent_context: f64,
    pub counterfactual_context: f64,
    pub contradicted_context: f64,
    /// Probability that a contradicted query answers with the context object.
    pub contradicted_trust: f64,
    /// Probability that a context sequence drops the token embeddings of the
    /// query's subject, so the query must take the subject from the context.
    pub query_subject_dropout: f64,
    /// Also supervise every next token of the sequence, not only the answers.
    pub full_sequence_loss: bool,
}

impl Default for TrainMixture {
    fn default() -> Self {
        Self {
            statements: 0.5,
            consistent_context: 0.15,
            counterfactual_context: 0.15,
            contradicted_context: 0.2,
            contradicted_trust: 0.0,
            query_subject_dropout: 0.7,
            full_sequence_loss: false,
        }
    }
}

impl TrainMixture {
    pub fn validate(&self) -> Result<()> {
        let w = [self.statements, self.consistent_context, self.counterfactual_context, self.contradicted_context];
        if w.iter().any(|x| !x.is_finite() || *x < 0.0) || self.statements <= 0.0 {
            return Err(LabError::Config("mixture weights must be finite, non-negative, with statements > 0".into()));
        }
        for (name, p) in [("contradicted_trust", self.contradicted_trust), ("query_subject_dropout", self.query_subject_dropout)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(LabError::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }
}

/// Concatenate a context statement and a query around the separator.
///
/// Returns the joined tokens and the offset at which the query starts.
pub fn join_context(world: &KnowledgeWorld, statement: &AnnotatedPrompt, query: &AnnotatedPrompt) -> Result<(Vec<usize>, usize)> {
    let sep = world.vocabulary.id(SEPARATOR)?;
    let mut tokens = Vec::with_capacity(statement.len() + 1 + query.len());
    tokens.extend_from_slice(&statement.tokens);
    tokens.push(sep);
    let start = tokens.len();
    tokens.extend_from_slice(&query.tokens);
    Ok((tokens, start))
}

/// Deterministic sampler of training sequences.
pub struct SequenceSampler<'w> {
    world: &'w KnowledgeWorld,
    renderer: Renderer<'w>,
    mixture: TrainMixture,
    empty_slots: Vec<(String, String)>,
}

impl<'w> SequenceSampler<'w> {
    pub fn new(world: &'w KnowledgeWorld, mixture: TrainMixture) -> Result<Self> {
        mixture.validate()?;
        if world.triples.is_empty() {
            return Err(LabError::Config("world has no triples".into()));
        }
        let mut empty_slots = Vec::new();
        for s in &world.subjects {
            for r in &world.relations {
                if world.object_of(s, &r.name).is_none() {
                    empty_slots.push((s.clone(), r.name.clone()));
                }
            }
        }
        Ok(Self { world, renderer: Renderer::new(&world.vocabulary), mixture, empty_slots })
    }

    /// Longest sequence the sampler can emit.
    pub fn max_len(&self) -> Result<usize> {
        let mut best = 0;
        let longest_s = self.world.subjects.iter().max_by_key(|s| s.split_whitespace().count()).expect("subjects");
        let longest_r = self.world.relations.iter().max_by_key(|r| r.name.split_whitespace().count()).expect("relations");
        let t = KnowledgeTriple::new(longest_s, &longest_r.name, &longest_r.objects[0]);
        let mut stmt = 0;
        let mut query = 0;
        for id in TemplateId::ALL {
            let tpl = self.world.template(id);
            stmt = stmt.max(self.renderer.statement(&t, tpl)?.len());
            query = query.max(self.renderer.query(&t, tpl)?.len());
        }
        best = best.max(stmt).max(stmt + 1 + query);
        Ok(best)
    }

    pub fn statement(&self, triple: &KnowledgeTriple, template: TemplateId) -> Result<TrainSequence> {
        let p = self.renderer.statement(triple, self.world.template(template))?;
        let obj = p.object.expect("statement has object");
        Ok(TrainSequence { targets: vec![(obj.start - 1, p.tokens[obj.start])], tokens: p.tokens, offset: 0, masked: Vec::new() })
    }

    /// `context` statement, separator, then a query on `query_fact` whose
    /// final-token target is `answer`.
    pub fn context(
        &self,
        context: &KnowledgeTriple,
        ctx_template: TemplateId,
        query_fact: &KnowledgeTriple,
        q_template: TemplateId,
        supervise_context: bool,
        mask_query_subject: bool,
    ) -> Result<TrainSequence> {
        let stmt = self.renderer.statement(context, self.world.template(ctx_template))?;
        let query = self.renderer.query(query_fact, self.world.template(q_template))?;
        let (tokens, query_start) = join_context(self.world, &stmt, &query)?;
        let obj = stmt.object.expect("statement has object");
        let answer = self.world.vocabulary.id(&query_fact.object)?;
        let mut targets = Vec::with_capacity(2);
        if supervise_context {
            targets.push((obj.start - 1, stmt.tokens[obj.start]));
        }
        targets.push((tokens.len() - 1, answer));
        let masked = if mask_query_subject { query.subject.shifted(query_start).positions().collect() } else { Vec::new() };
        Ok(TrainSequence { tokens, offset: 0, targets, masked })
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> Result<TrainSequence> {
        let mut seq = self.sample_answers(rng)?;
        if self.mixture.full_sequence_loss {
            let answers: Vec<usize> = seq.targets.iter().map(|t| t.0).collect();
            for pos in 0..seq.tokens.len() - 1 {
                if !answers.contains(&pos) {
                    seq.targets.push((pos, seq.tokens[pos + 1]));
                }
            }
            seq.targets.sort_unstable();
        }
        Ok(seq)
    }

    fn sample_answers<R: Rng>(&self, rng: &mut R) -> Result<TrainSequence> {
        let m = &self.mixture;
        let cf = if self.empty_slots.is_empty() { 0.0 } else { m.counterfactual_context };
        let weights = [m.statements, m.consistent_context, cf, m.contradicted_context];
        let mut u = rng.random::<f64>() * weights.iter().sum::<f64>();
        let mut family = 0;
        while family < 3 && u >= weights[family] {
            u -= weights[family];
            family += 1;
        }
        let tpl = |rng: &mut R| TemplateId::ALL[rng.random_range(0..TemplateId::ALL.len())];
        let drop = family > 0 && rng.random_bool(m.query_subject_dropout);
        match family {
            0 => {
                let t = self.world.triples.choose(rng).expect("nonempty");
                let id = tpl(rng);
                self.statement(t, id)
            }
            1 => {
                let t = self.world.triples.choose(rng).expect("nonempty");
                let (a, b) = (tpl(rng), tpl(rng));
                self.context(t, a, t, b, true, drop)
            }
            2 => {
                let (s, r) = self.empty_slots.choose(rng).expect("nonempty");
                let rel = self.world.relation(r)?;
                let o = rel.objects.choose(rng).expect("nonempty domain");
                let t = KnowledgeTriple::new(s, r, o);
                let (a, b) = (tpl(rng), tpl(rng));
                self.context(&t, a, &t, b, false, drop)
            }
            _ => {
                let t = self.world.triples.choose(rng).expect("nonempty");
                let rel = self.world.relation(&t.relation)?;
                let others: Vec<&String> = rel.objects.iter().filter(|o| **o != t.object).collect();
                let o = others.choose(rng).ok_or_else(|| LabError::Config("one-object domain".into()))?;
                let fake = KnowledgeTriple::new(&t.subject, &t.relation, o.as_str());
                let (a, b) = (tpl(rng), tpl(rng));
                let answer = if rng.random_bool(m.contradicted_trust) { &fake } else { t };
                self.context(&fake, a, answer, b, false, drop)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_world, WorldConfig};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn statement_targets_object_at_pre_object_position() {
        let w = generate_world(&WorldConfig::default(), 3).unwrap();
        let s = SequenceSampler::new(&w, TrainMixture::default()).unwrap();
        let t = &w.triples[0];
        let seq = s.statement(t, TemplateId::Decl1).unwrap();
        let (pos, tgt) = seq.targets[0];
        assert_eq!(pos, seq.tokens.len() - 2);
        assert_eq!(w.vocabulary.token(tgt).unwrap(), t.object);
    }

    #[test]
    fn counterfactual_contexts_use_empty_slots_only() {
        let w = generate_world(&WorldConfig::default(), 3).unwrap();
        let mix = TrainMixture { statements: 1e-9, consistent_context: 0.0, counterfactual_context: 1.0, ..Default::default() };
        let s = SequenceSampler::new(&w, mix).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sep = w.vocabulary.id(SEPARATOR).unwrap();
        for _ in 0..50 {
            let seq = s.sample(&mut rng).unwrap();
            assert_eq!(seq.targets.len(), 1);
            assert!(seq.tokens.contains(&sep));
            assert!(seq.tokens.len() <= s.max_len().unwrap());
        }
    }
}
