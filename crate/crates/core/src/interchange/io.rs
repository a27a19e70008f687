// SPDX-License-Identifier: MIT OR Apache-2.0

use std::io::Write;

use serde::Serialize;

use super::experiments::SweepCurve;
use super::intervene::InterventionOutcome;
use crate::corpus::{PairMode, TemplateId};
use crate::error::Result;

/// One JSON object per line.
pub fn write_jsonl<T: Serialize, W: Write>(items: &[T], mut out: W) -> Result<()> {
    for it in items {
        serde_json::to_writer(&mut out, it)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_outcomes<W: Write>(outcomes: &[InterventionOutcome], out: W) -> Result<()> {
    write_jsonl(outcomes, out)
}

#[derive(Serialize)]
struct SweepRow {
    template: TemplateId,
    mode: PairMode,
    layer: usize,
    vector_effect: f64,
    textual_effect: f64,
    pairs: usize,
}

pub fn write_sweep_csv<W: Write>(curves: &[(TemplateId, SweepCurve)], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for (template, c) in curves {
        for (&layer, &vector_effect) in c.layers.iter().zip(&c.vector_effect) {
            w.serialize(SweepRow {
                template: *template,
                mode: c.mode,
                layer,
                vector_effect,
                textual_effect: c.textual_effect,
                pairs: c.pairs,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Mean-interchange accuracy per template and mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AccuracyRow {
    pub template: TemplateId,
    pub subject_only: f64,
    pub relation_only: f64,
    pub object_only: f64,
    pub dual: f64,
}

pub fn write_accuracy_table<W: Write>(rows: &[AccuracyRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
