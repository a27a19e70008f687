// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::analysis::{Band, ComponentSpec};
use crate::corpus::{AnnotatedPrompt, PairMode};
use crate::error::{LabError, Result};
use crate::model::{ActivationCache, Model, PatchPlan};

/// Functional role of a knowledge vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Subject,
    Relation,
    Object,
}

impl Role {
    pub fn band(self, spec: &ComponentSpec) -> Band {
        match self {
            Role::Subject => spec.subject,
            Role::Relation => spec.relation,
            Role::Object => spec.object,
        }
    }

    /// Position the role's vector is read from in a reference prompt.
    pub fn source_position(self, prompt: &AnnotatedPrompt) -> usize {
        match self {
            Role::Subject => prompt.subject.last(),
            Role::Relation => prompt.relation.last(),
            Role::Object => prompt.last(),
        }
    }

    /// Positions the role's vector is written to in a source prompt.
    pub fn target_positions(self, prompt: &AnnotatedPrompt) -> Vec<usize> {
        match self {
            Role::Subject => prompt.subject.positions().collect(),
            Role::Relation => prompt.relation.positions().collect(),
            Role::Object => vec![prompt.last()],
        }
    }
}

/// Roles an interchange mode replaces.
pub fn roles(mode: PairMode) -> &'static [Role] {
    match mode {
        PairMode::SubjectOnly => &[Role::Subject],
        PairMode::RelationOnly => &[Role::Relation],
        PairMode::ObjectOnly => &[Role::Object],
        PairMode::Dual => &[Role::Subject, Role::Relation],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerVector {
    pub layer: usize,
    pub vector: Vec<f64>,
}

/// Subject, relation and object vectors of one prompt over their bands.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeVectors {
    pub subject_position: usize,
    pub relation_position: usize,
    pub object_position: usize,
    pub subject: Vec<LayerVector>,
    pub relation: Vec<LayerVector>,
    pub object: Vec<LayerVector>,
}

impl KnowledgeVectors {
    pub fn family(&self, role: Role) -> &[LayerVector] {
        match role {
            Role::Subject => &self.subject,
            Role::Relation => &self.relation,
            Role::Object => &self.object,
        }
    }

    fn family_mut(&mut self, role: Role) -> &mut Vec<LayerVector> {
        match role {
            Role::Subject => &mut self.subject,
            Role::Relation => &mut self.relation,
            Role::Object => &mut self.object,
        }
    }

    pub fn get(&self, role: Role, layer: usize) -> Option<&[f64]> {
        self.family(role).iter().find(|v| v.layer == layer).map(|v| v.vector.as_slice())
    }

    /// Element-wise mean of several extractions that share bands.
    pub fn mean(items: &[&KnowledgeVectors]) -> Result<KnowledgeVectors> {
        let first = *items.first().ok_or_else(|| LabError::Config("mean of zero vector sets".into()))?;
        let mut out = first.clone();
        let k = items.len() as f64;
        for role in [Role::Subject, Role::Relation, Role::Object] {
            for (i, lv) in out.family_mut(role).iter_mut().enumerate() {
                for (j, x) in lv.vector.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for it in items {
                        let other = it.family(role).get(i).filter(|o| o.layer == lv.layer).ok_or_else(|| {
                            LabError::Config("vector sets have mismatched bands".into())
                        })?;
                        s += other.vector[j];
                    }
                    *x = s / k;
                }
            }
        }
        Ok(out)
    }
}

/// Read the three role families from a clean cache.
pub fn vectors_from_cache(cache: &ActivationCache, prompt: &AnnotatedPrompt, spec: &ComponentSpec) -> Result<KnowledgeVectors> {
    prompt.check()?;
    if spec.layers != cache.layers() {
        return Err(LabError::Config(format!(
            "component spec is for {} layers but the model has {}",
            spec.layers,
            cache.layers()
        )));
    }
    let read = |role: Role| -> Result<Vec<LayerVector>> {
        let pos = role.source_position(prompt);
        role.band(spec)
            .layers()
            .map(|layer| Ok(LayerVector { layer, vector: cache.read(layer, pos)?.to_vec() }))
            .collect()
    };
    Ok(KnowledgeVectors {
        subject_position: Role::Subject.source_position(prompt),
        relation_position: Role::Relation.source_position(prompt),
        object_position: Role::Object.source_position(prompt),
        subject: read(Role::Subject)?,
        relation: read(Role::Relation)?,
        object: read(Role::Object)?,
    })
}

/// Clean run of `prompt`, then read its knowledge vectors.
pub fn extract_vectors(model: &Model, prompt: &AnnotatedPrompt, spec: &ComponentSpec) -> Result<KnowledgeVectors> {
    let out = model.forward(&prompt.tokens, &PatchPlan::new())?;
    vectors_from_cache(&out.cache, prompt, spec)
}
