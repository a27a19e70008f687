// SPDX-License-Identifier: MIT OR Apache-2.0

//! Layer-by-layer sweeps, mean interchange and their metrics.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::intervene::{interchange_with, textual_baseline, InterventionOutcome, LayerSelection};
use super::vectors::{extract_vectors, roles, KnowledgeVectors, LayerVector, Role};
use crate::analysis::{Band, ComponentSpec};
use crate::corpus::{CounterPair, KnowledgeWorld, PairMode};
use crate::error::{LabError, Result};
use crate::model::Model;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct InterchangeMetrics {
    pub count: usize,
    /// Mean target probability under the vector intervention.
    pub vector_effect: f64,
    /// Mean target probability under the textual recombination.
    pub textual_effect: f64,
    /// Fraction of outcomes whose patched argmax equals the textual argmax.
    pub accuracy: f64,
}

pub fn interchange_metrics<'o, I>(outcomes: I) -> InterchangeMetrics
where
    I: IntoIterator<Item = &'o InterventionOutcome>,
{
    let mut m = InterchangeMetrics::default();
    let (mut v, mut t, mut hits) = (0.0, 0.0, 0usize);
    for o in outcomes {
        m.count += 1;
        v += o.patched_target_p;
        t += o.textual_target_p;
        hits += usize::from(o.argmax_match);
    }
    if m.count > 0 {
        let n = m.count as f64;
        m.vector_effect = v / n;
        m.textual_effect = t / n;
        m.accuracy = hits as f64 / n;
    }
    m
}

/// Layers a mode can be patched at: the intersection of its roles' bands.
pub fn mode_band(mode: PairMode, spec: &ComponentSpec) -> Result<Band> {
    let rs = roles(mode);
    let lo = rs.iter().map(|r| r.band(spec).lo).max().expect("nonempty roles");
    let hi = rs.iter().map(|r| r.band(spec).hi).min().expect("nonempty roles");
    Band::new(lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepCurve {
    pub mode: PairMode,
    pub layers: Vec<usize>,
    pub vector_effect: Vec<f64>,
    pub textual_effect: f64,
    pub pairs: usize,
    pub failures: usize,
    pub empty: bool,
}

impl SweepCurve {
    /// Layer with the largest vector effect (first on ties).
    pub fn peak(&self) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for (&l, &e) in self.layers.iter().zip(&self.vector_effect) {
            if best.is_none_or(|b| e > b.1) {
                best = Some((l, e));
            }
        }
        best
    }
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub curve: SweepCurve,
    pub outcomes: Vec<InterventionOutcome>,
}

/// Interchange one layer at a time over the mode's band, across all pairs.
pub fn layer_sweep(
    model: &Model,
    world: &KnowledgeWorld,
    pairs: &[CounterPair],
    mode: PairMode,
    spec: &ComponentSpec,
) -> Result<SweepResult> {
    let band = mode_band(mode, spec)?;
    let layers: Vec<usize> = band.layers().collect();
    if pairs.is_empty() {
        return Ok(SweepResult {
            curve: SweepCurve {
                mode,
                vector_effect: vec![0.0; layers.len()],
                layers,
                textual_effect: 0.0,
                pairs: 0,
                failures: 0,
                empty: true,
            },
            outcomes: Vec::new(),
        });
    }
    let per_pair: Vec<Result<Vec<InterventionOutcome>>> = pairs
        .par_iter()
        .map(|pair| {
            let vectors = extract_vectors(model, &pair.reference, spec)?;
            let textual = textual_baseline(model, world, pair, mode)?;
            layers
                .iter()
                .map(|&l| interchange_with(model, pair, mode, spec, LayerSelection::Single(l), &vectors, &textual))
                .collect()
        })
        .collect();
    let mut outcomes = Vec::new();
    let mut failures = 0;
    for r in per_pair {
        match r {
            Ok(o) => outcomes.extend(o),
            Err(e) => {
                log::warn!("{mode} sweep pair failed: {e}");
                failures += 1;
            }
        }
    }
    let ok = pairs.len() - failures;
    let vector_effect = layers
        .iter()
        .map(|&l| {
            interchange_metrics(outcomes.iter().filter(|o| o.selection == LayerSelection::Single(l))).vector_effect
        })
        .collect();
    let textual_effect = if ok == 0 {
        0.0
    } else {
        outcomes.iter().step_by(layers.len()).map(|o| o.textual_target_p).sum::<f64>() / ok as f64
    };
    Ok(SweepResult {
        curve: SweepCurve { mode, layers, vector_effect, textual_effect, pairs: ok, failures, empty: ok == 0 },
        outcomes,
    })
}

/// Knowledge a reference contributes for `role`: its subject, its relation,
/// or the pair's target object.
fn role_key(pair: &CounterPair, role: Role) -> String {
    match role {
        Role::Subject => pair.reference.triple.subject.clone(),
        Role::Relation => pair.reference.triple.relation.clone(),
        Role::Object => pair.target.clone(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupAccuracy {
    pub key: String,
    pub sources: usize,
    /// Distinct reference runs averaged for the group's vectors.
    pub references: usize,
    pub accuracy: f64,
    /// Only one distinct reference run: plain interchange.
    pub degenerate: bool,
}

#[derive(Debug, Clone)]
pub struct MeanInterchangeResult {
    pub mode: PairMode,
    pub groups: Vec<GroupAccuracy>,
    pub outcomes: Vec<InterventionOutcome>,
    pub metrics: InterchangeMetrics,
    pub failures: usize,
}

/// Replace each role's vectors with the mean over every distinct reference
/// run in `pairs` sharing that role's knowledge, patching the whole band.
pub fn mean_interchange(
    model: &Model,
    world: &KnowledgeWorld,
    pairs: &[CounterPair],
    mode: PairMode,
    spec: &ComponentSpec,
) -> Result<MeanInterchangeResult> {
    if pairs.is_empty() {
        return Err(LabError::Config(format!("mean {mode} interchange over an empty pair set")));
    }
    let mut refs: BTreeMap<Vec<usize>, usize> = BTreeMap::new();
    let mut uniq = Vec::new();
    for p in pairs {
        refs.entry(p.reference.tokens.clone()).or_insert_with(|| {
            uniq.push(p);
            uniq.len() - 1
        });
    }
    let extracted: Vec<KnowledgeVectors> =
        uniq.par_iter().map(|p| extract_vectors(model, &p.reference, spec)).collect::<Result<_>>()?;

    // role -> key -> indices of distinct references
    let mut members: BTreeMap<(Role, String), Vec<usize>> = BTreeMap::new();
    for (i, p) in uniq.iter().enumerate() {
        for &role in roles(mode) {
            members.entry((role, role_key(p, role))).or_default().push(i);
        }
    }
    let mut means: BTreeMap<(Role, String), Vec<LayerVector>> = BTreeMap::new();
    for (k, idx) in &members {
        let items: Vec<&KnowledgeVectors> = idx.iter().map(|&i| &extracted[i]).collect();
        means.insert(k.clone(), KnowledgeVectors::mean(&items)?.family(k.0).to_vec());
    }

    let results: Vec<Result<InterventionOutcome>> = pairs
        .par_iter()
        .map(|pair| {
            let mut v = extracted[refs[&pair.reference.tokens]].clone();
            for &role in roles(mode) {
                let fam = means[&(role, role_key(pair, role))].clone();
                match role {
                    Role::Subject => v.subject = fam,
                    Role::Relation => v.relation = fam,
                    Role::Object => v.object = fam,
                }
            }
            let textual = textual_baseline(model, world, pair, mode)?;
            interchange_with(model, pair, mode, spec, LayerSelection::Band, &v, &textual)
        })
        .collect();

    let mut outcomes = Vec::new();
    let mut grouped: BTreeMap<String, (usize, usize, usize)> = BTreeMap::new();
    let mut failures = 0;
    for (pair, r) in pairs.iter().zip(results) {
        match r {
            Ok(o) => {
                let key = roles(mode).iter().map(|&role| format!("{role:?}={}", role_key(pair, role))).collect::<Vec<_>>().join("|");
                let nref = roles(mode).iter().map(|&role| members[&(role, role_key(pair, role))].len()).min().unwrap_or(0);
                let g = grouped.entry(key).or_insert((0, 0, nref));
                g.0 += 1;
                g.1 += usize::from(o.argmax_match);
                outcomes.push(o);
            }
            Err(e) => {
                log::warn!("mean {mode} interchange failed: {e}");
                failures += 1;
            }
        }
    }
    let groups = grouped
        .into_iter()
        .map(|(key, (n, hits, nref))| GroupAccuracy {
            key,
            sources: n,
            references: nref,
            accuracy: hits as f64 / n as f64,
            degenerate: nref < 2,
        })
        .collect();
    let metrics = interchange_metrics(&outcomes);
    Ok(MeanInterchangeResult { mode, groups, outcomes, metrics, failures })
}
