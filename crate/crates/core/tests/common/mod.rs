// SPDX-License-Identifier: MIT OR Apache-2.0

#![allow(dead_code)]

pub mod oracle;

use recall_lab::corpus::{generate_world, AnnotatedPrompt, KnowledgeWorld, Renderer, TemplateId, WorldConfig};
use recall_lab::model::{Model, ModelConfig};

pub fn world() -> KnowledgeWorld {
    generate_world(&WorldConfig::default(), 1).unwrap()
}

/// Untrained model sized for `world`.
pub fn model(world: &KnowledgeWorld, layers: usize, d_model: usize, seed: u64) -> Model {
    let config = ModelConfig {
        layers,
        d_model,
        heads: 4,
        d_ff: 2 * d_model,
        vocab_size: world.vocabulary.len(),
        max_seq_len: 40,
        ..Default::default()
    };
    Model::init(config, seed).unwrap()
}

/// The first `count` world triples as queries, alternating the two
/// declarative templates.
pub fn prompts(world: &KnowledgeWorld, count: usize) -> Vec<AnnotatedPrompt> {
    let r = Renderer::new(&world.vocabulary);
    world
        .triples
        .iter()
        .take(count)
        .enumerate()
        .map(|(i, t)| r.query(t, world.template(TemplateId::QUERY_PAIR[i % 2])).unwrap())
        .collect()
}
