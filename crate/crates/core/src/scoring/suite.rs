// SPDX-License-Identifier: MIT OR Apache-2.0

//! Batch driver over (triple, template, kind) jobs.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::grid::{score_grid, ScoreGrid};
use super::noise::{AblationKind, NoiseConfig};
use super::store::GridStore;
use crate::corpus::{KnowledgeTriple, KnowledgeWorld, Renderer, TemplateId};
use crate::error::Result;
use crate::model::Model;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteFailure {
    pub triple: KnowledgeTriple,
    pub template: TemplateId,
    pub kind: AblationKind,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct ScoreSuite {
    /// Grids in job order: triple-major, then template, then kind.
    pub grids: Vec<ScoreGrid>,
    pub failures: Vec<SuiteFailure>,
    pub computed: usize,
    pub reused: usize,
}

impl ScoreSuite {
    pub fn of_kind(&self, kind: AblationKind, template: TemplateId) -> Vec<&ScoreGrid> {
        self.grids.iter().filter(|g| g.kind == kind && g.prompt.template == template).collect()
    }
}

struct Job<'a> {
    index: usize,
    triple: &'a KnowledgeTriple,
    template: TemplateId,
    kind: AblationKind,
}

fn one(model: &Model, world: &KnowledgeWorld, job: &Job<'_>, noise: &NoiseConfig) -> Result<(ScoreGrid, String, String)> {
    let r = Renderer::new(&world.vocabulary);
    let prompt = r.query(job.triple, world.template(job.template))?;
    let target = world.vocabulary.id(&job.triple.object)?;
    let grid = score_grid(model, &prompt, target, job.kind, noise)?;
    Ok((grid, r.text(&prompt)?, job.triple.object.clone()))
}

/// Score every triple under every template and kind. With a store, grids
/// already persisted under `config_hash` are loaded instead of recomputed and
/// fresh grids are written back.
pub fn run_score_suite(
    model: &Model,
    world: &KnowledgeWorld,
    triples: &[KnowledgeTriple],
    templates: &[TemplateId],
    noise: &NoiseConfig,
    store: Option<(&GridStore, &str)>,
) -> Result<ScoreSuite> {
    noise.validate()?;
    let mut jobs = Vec::with_capacity(triples.len() * templates.len() * 3);
    for (index, triple) in triples.iter().enumerate() {
        for &template in templates {
            for kind in AblationKind::ALL {
                jobs.push(Job { index, triple, template, kind });
            }
        }
    }
    let results: Vec<Result<(ScoreGrid, bool)>> = jobs
        .par_iter()
        .map(|job| {
            let stem = GridStore::stem(job.index, job.template, job.kind);
            if let Some((s, hash)) = store {
                if let Some(g) = s.load(&stem, hash)? {
                    return Ok((g, true));
                }
            }
            let (grid, text, obj) = one(model, world, job, noise)?;
            if let Some((s, hash)) = store {
                s.save(&stem, &grid, &text, &obj, hash)?;
            }
            Ok((grid, false))
        })
        .collect();
    let mut suite = ScoreSuite::default();
    for (job, r) in jobs.iter().zip(results) {
        match r {
            Ok((g, reused)) => {
                if reused {
                    suite.reused += 1;
                } else {
                    suite.computed += 1;
                }
                suite.grids.push(g);
            }
            Err(e) => {
                log::warn!("grid failed for {:?} {} {}: {e}", job.triple, job.template, job.kind);
                suite.failures.push(SuiteFailure {
                    triple: job.triple.clone(),
                    template: job.template,
                    kind: job.kind,
                    error: e.to_string(),
                });
            }
        }
    }
    Ok(suite)
}
