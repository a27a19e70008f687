// SPDX-License-Identifier: MIT OR Apache-2.0

//! Contextual knowledge editing with a patched context statement.
//!
//! A statement of the new fact is prepended to the query. In the patched
//! variants the late-layer activations at the token just before the new
//! object are overwritten with a new-object vector taken from the early
//! layers of the object tokens in an isolated run of the same statement.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{Band, ComponentSpec, Fraction};
use crate::corpus::{AnnotatedPrompt, EditItem, KnowledgeTriple, KnowledgeWorld, Renderer, TemplateId};
use crate::error::{LabError, Result};
use crate::model::{mean_over, Model, NextTokenDistribution, PatchPlan};
use crate::trainer::join_context;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum InputVariant {
    #[serde(rename = "QUERY_ONLY")]
    QueryOnly,
    #[serde(rename = "DECL1+Q")]
    Decl1,
    #[serde(rename = "DECL1_PATCHED+Q")]
    Decl1Patched,
    #[serde(rename = "DECL2+Q")]
    Decl2,
    #[serde(rename = "DECL2_PATCHED+Q")]
    Decl2Patched,
    #[serde(rename = "QA+Q")]
    Qa,
    #[serde(rename = "QA_PATCHED+Q")]
    QaPatched,
}

impl InputVariant {
    pub const ALL: [InputVariant; 7] = [
        InputVariant::QueryOnly,
        InputVariant::Decl1,
        InputVariant::Decl1Patched,
        InputVariant::Decl2,
        InputVariant::Decl2Patched,
        InputVariant::Qa,
        InputVariant::QaPatched,
    ];

    pub fn statement_template(self) -> Option<TemplateId> {
        match self {
            InputVariant::QueryOnly => None,
            InputVariant::Decl1 | InputVariant::Decl1Patched => Some(TemplateId::Decl1),
            InputVariant::Decl2 | InputVariant::Decl2Patched => Some(TemplateId::Decl2),
            InputVariant::Qa | InputVariant::QaPatched => Some(TemplateId::Qa),
        }
    }

    pub fn patched(self) -> bool {
        matches!(self, InputVariant::Decl1Patched | InputVariant::Decl2Patched | InputVariant::QaPatched)
    }

    /// The variant with the same statement template and no patch.
    pub fn unpatched(self) -> InputVariant {
        match self {
            InputVariant::Decl1Patched => InputVariant::Decl1,
            InputVariant::Decl2Patched => InputVariant::Decl2,
            InputVariant::QaPatched => InputVariant::Qa,
            v => v,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            InputVariant::QueryOnly => "QUERY_ONLY",
            InputVariant::Decl1 => "DECL1+Q",
            InputVariant::Decl1Patched => "DECL1_PATCHED+Q",
            InputVariant::Decl2 => "DECL2+Q",
            InputVariant::Decl2Patched => "DECL2_PATCHED+Q",
            InputVariant::Qa => "QA+Q",
            InputVariant::QaPatched => "QA_PATCHED+Q",
        }
    }
}

impl fmt::Display for InputVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for InputVariant {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        InputVariant::ALL
            .into_iter()
            .find(|v| v.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| LabError::Config(format!("unknown input variant `{s}`")))
    }
}

/// Bands used for extraction and patching. `None` falls back to the
/// component spec: subject band for extraction, object band for patching.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EditBands {
    pub extract: Option<Fraction>,
    pub patch: Option<Fraction>,
}

impl EditBands {
    pub fn resolve(&self, spec: &ComponentSpec) -> Result<(Band, Band)> {
        let extract = match self.extract {
            Some(f) => f.rescale(spec.layers)?,
            None => spec.subject,
        };
        let patch = match self.patch {
            Some(f) => f.rescale(spec.layers)?,
            None => spec.object,
        };
        Ok((extract, patch))
    }
}

/// One edit rendered for a given statement template.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditRecord {
    pub original: KnowledgeTriple,
    pub new: KnowledgeTriple,
    pub statement_template: TemplateId,
    pub query_template: TemplateId,
    pub statement: AnnotatedPrompt,
    pub query: AnnotatedPrompt,
}

impl EditRecord {
    pub fn new(world: &KnowledgeWorld, item: &EditItem, statement_template: TemplateId) -> Result<Self> {
        let r = Renderer::new(&world.vocabulary);
        let new = item.new_triple();
        Ok(Self {
            statement: r.statement(&new, world.template(statement_template))?,
            query: r.query(&item.original, world.template(item.query_template))?,
            original: item.original.clone(),
            new,
            statement_template,
            query_template: item.query_template,
        })
    }

    /// Index of the token just before the object in the statement.
    pub fn pre_object(&self) -> Result<usize> {
        let o = self.statement.object.ok_or_else(|| LabError::Prompt("statement has no object span".into()))?;
        o.start.checked_sub(1).ok_or_else(|| LabError::Prompt("object at position 0 has no preceding token".into()))
    }
}

/// Mean of a statement's clean activations over `band x object span`.
pub fn new_object_vector(model: &Model, statement: &AnnotatedPrompt, band: Band) -> Result<Vec<f64>> {
    let span = statement.object.ok_or_else(|| LabError::Prompt("statement has no object span".into()))?;
    if span.is_empty() {
        return Err(LabError::Prompt("empty object span".into()));
    }
    let cache = model.forward(&statement.tokens, &PatchPlan::new())?.cache;
    let positions: Vec<usize> = span.positions().collect();
    let width = model.config().d_model;
    let mut acc = vec![0.0; width];
    for layer in band.layers() {
        let m = mean_over(&[&cache], layer, &positions)?;
        acc.iter_mut().zip(&m).for_each(|(a, b)| *a += b);
    }
    let k = band.width() as f64;
    acc.iter_mut().for_each(|a| *a /= k);
    Ok(acc)
}

/// Concatenated input with its patch plan.
#[derive(Debug, Clone)]
pub struct PatchedContext {
    pub tokens: Vec<usize>,
    pub query_start: usize,
    pub pre_object: usize,
    pub plan: PatchPlan,
    pub dist: NextTokenDistribution,
}

/// Patch `vector` at every `patch_band` layer of the pre-object token of the
/// `[statement ; separator ; query]` input and run it.
pub fn patched_context_run_with(
    model: &Model,
    world: &KnowledgeWorld,
    record: &EditRecord,
    patch_band: Band,
    vector: &[f64],
) -> Result<PatchedContext> {
    let pre_object = record.pre_object()?;
    let (tokens, query_start) = join_context(world, &record.statement, &record.query)?;
    let mut plan = PatchPlan::new();
    for layer in patch_band.layers() {
        plan.push(layer, pre_object, vector.to_vec());
    }
    let dist = model.probe(&tokens, &plan)?;
    Ok(PatchedContext { tokens, query_start, pre_object, plan, dist })
}

pub fn patched_context_run(
    model: &Model,
    world: &KnowledgeWorld,
    record: &EditRecord,
    spec: &ComponentSpec,
    bands: &EditBands,
) -> Result<PatchedContext> {
    let (extract, patch) = bands.resolve(spec)?;
    let v = new_object_vector(model, &record.statement, extract)?;
    patched_context_run_with(model, world, record, patch, &v)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOutcome {
    pub variant: InputVariant,
    pub subject: String,
    pub relation: String,
    pub original_object: String,
    pub new_object: String,
    pub query_template: TemplateId,
    pub p_new: f64,
    pub p_original: f64,
    pub success: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct EditingMetrics {
    pub count: usize,
    pub failures: usize,
    /// Mean of `1[P(o*) > P(o^c)]`.
    pub es: f64,
    /// Mean of `P(o*) - P(o^c)`.
    pub em: f64,
}

pub fn editing_metrics(outcomes: &[EditOutcome], failures: usize) -> EditingMetrics {
    let n = outcomes.len();
    if n == 0 {
        return EditingMetrics { failures, ..Default::default() };
    }
    let es = outcomes.iter().filter(|o| o.p_new > o.p_original).count() as f64 / n as f64;
    let em = outcomes.iter().map(|o| o.p_new - o.p_original).sum::<f64>() / n as f64;
    EditingMetrics { count: n, failures, es, em }
}

#[derive(Debug, Clone)]
pub struct EditingResult {
    pub variant: InputVariant,
    pub metrics: EditingMetrics,
    pub outcomes: Vec<EditOutcome>,
}

fn evaluate_one(
    model: &Model,
    world: &KnowledgeWorld,
    item: &EditItem,
    variant: InputVariant,
    spec: &ComponentSpec,
    bands: &EditBands,
) -> Result<EditOutcome> {
    let r = Renderer::new(&world.vocabulary);
    let dist = match variant.statement_template() {
        None => model.probe(&r.query(&item.original, world.template(item.query_template))?.tokens, &PatchPlan::new())?,
        Some(t) => {
            let rec = EditRecord::new(world, item, t)?;
            if variant.patched() {
                patched_context_run(model, world, &rec, spec, bands)?.dist
            } else {
                model.probe(&join_context(world, &rec.statement, &rec.query)?.0, &PatchPlan::new())?
            }
        }
    };
    let p_new = dist.prob(world.vocabulary.id(&item.new_object)?)?;
    let p_original = dist.prob(world.vocabulary.id(&item.original.object)?)?;
    Ok(EditOutcome {
        variant,
        subject: item.original.subject.clone(),
        relation: item.original.relation.clone(),
        original_object: item.original.object.clone(),
        new_object: item.new_object.clone(),
        query_template: item.query_template,
        p_new,
        p_original,
        success: p_new > p_original,
    })
}

/// Score every edit under one input variant. Failing records are logged and
/// excluded.
pub fn evaluate_editing(
    model: &Model,
    world: &KnowledgeWorld,
    items: &[EditItem],
    variant: InputVariant,
    spec: &ComponentSpec,
    bands: &EditBands,
) -> Result<EditingResult> {
    bands.resolve(spec)?;
    let results: Vec<Result<EditOutcome>> =
        items.par_iter().map(|it| evaluate_one(model, world, it, variant, spec, bands)).collect();
    let mut outcomes = Vec::with_capacity(items.len());
    let mut failures = 0;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(e) => {
                log::warn!("{variant} edit failed: {e}");
                failures += 1;
            }
        }
    }
    Ok(EditingResult { variant, metrics: editing_metrics(&outcomes, failures), outcomes })
}

#[derive(Serialize)]
struct TableRow {
    input: InputVariant,
    es: f64,
    em: f64,
    records: usize,
    failures: usize,
}

/// Metrics per input variant.
pub fn write_editing_table<W: Write>(results: &[EditingResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in results {
        w.serialize(TableRow {
            input: r.variant,
            es: r.metrics.es,
            em: r.metrics.em,
            records: r.metrics.count,
            failures: r.metrics.failures,
        })?;
    }
    w.flush()?;
    Ok(())
}
