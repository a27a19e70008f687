// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::scoring::{AblationKind, ScoreGrid};

/// Mean score per layer at a kind's designated positions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindProfile {
    pub kind: AblationKind,
    pub grids: usize,
    pub means: Vec<f64>,
}

impl KindProfile {
    /// First layer attaining the maximum mean.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.means.iter().enumerate() {
            if v > self.means[best] {
                best = i;
            }
        }
        best
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerProfile {
    pub layers: usize,
    pub kinds: Vec<KindProfile>,
}

impl LayerProfile {
    pub fn kind(&self, kind: AblationKind) -> Option<&KindProfile> {
        self.kinds.iter().find(|k| k.kind == kind)
    }
}

/// Subject span for SES, relation span for RES, last token for OES.
pub fn designated_positions(grid: &ScoreGrid) -> Vec<usize> {
    match grid.kind {
        AblationKind::Subject => grid.prompt.subject.positions().collect(),
        AblationKind::Relation => grid.prompt.relation.positions().collect(),
        AblationKind::Object => vec![grid.prompt.last()],
    }
}

/// Per kind: average each grid over its designated positions, then average
/// across grids. Grids with a layer count different from the first are
/// skipped.
pub fn layer_profile<'g, I>(grids: I) -> LayerProfile
where
    I: IntoIterator<Item = &'g ScoreGrid>,
{
    let mut layers = None;
    let mut acc: Vec<(AblationKind, usize, Vec<f64>)> = Vec::new();
    for g in grids {
        let l = *layers.get_or_insert(g.layers);
        if g.layers != l {
            continue;
        }
        let slot = match acc.iter().position(|a| a.0 == g.kind) {
            Some(i) => &mut acc[i],
            None => {
                acc.push((g.kind, 0, vec![0.0; l]));
                acc.last_mut().expect("just pushed")
            }
        };
        slot.1 += 1;
        let pos = designated_positions(g);
        for (layer, m) in slot.2.iter_mut().enumerate() {
            *m += pos.iter().map(|&p| g.score(layer, p)).sum::<f64>() / pos.len() as f64;
        }
    }
    acc.sort_by_key(|a| a.0);
    let kinds = acc
        .into_iter()
        .map(|(kind, n, sums)| KindProfile { kind, grids: n, means: sums.into_iter().map(|s| s / n as f64).collect() })
        .collect();
    LayerProfile { layers: layers.unwrap_or(0), kinds }
}
