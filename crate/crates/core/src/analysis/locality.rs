// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use crate::corpus::Region;
use crate::scoring::{AblationKind, ScoreGrid};

pub const DEFAULT_THRESHOLD: f64 = 0.05;

/// Share of high-score cells per token region.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionShares {
    pub subject: f64,
    pub relation: f64,
    pub last: f64,
    pub other: f64,
}

impl RegionShares {
    pub fn get(&self, region: Region) -> f64 {
        match region {
            Region::Subject => self.subject,
            Region::Relation => self.relation,
            Region::Last => self.last,
            Region::Other => self.other,
        }
    }

    pub fn total(&self) -> f64 {
        self.subject + self.relation + self.last + self.other
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KindLocality {
    pub kind: AblationKind,
    pub grids: usize,
    pub high_cells: usize,
    pub counts: [usize; 4],
    pub shares: RegionShares,
    /// No cell exceeded the threshold.
    pub empty: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalityReport {
    pub threshold: f64,
    pub kinds: Vec<KindLocality>,
}

impl LocalityReport {
    pub fn kind(&self, kind: AblationKind) -> Option<&KindLocality> {
        self.kinds.iter().find(|k| k.kind == kind)
    }
}

/// Count cells with `score > threshold` by the region of their position,
/// pooled over grids and normalised per kind.
pub fn locality_report<'g, I>(grids: I, threshold: f64) -> LocalityReport
where
    I: IntoIterator<Item = &'g ScoreGrid>,
{
    let mut acc: Vec<(AblationKind, usize, [usize; 4])> =
        AblationKind::ALL.iter().map(|&k| (k, 0, [0; 4])).collect();
    for g in grids {
        let slot = acc.iter_mut().find(|a| a.0 == g.kind).expect("all kinds present");
        slot.1 += 1;
        for (_, pos, s) in g.cells() {
            if s > threshold {
                let idx = match g.prompt.region(pos) {
                    Region::Subject => 0,
                    Region::Relation => 1,
                    Region::Last => 2,
                    Region::Other => 3,
                };
                slot.2[idx] += 1;
            }
        }
    }
    let kinds = acc
        .into_iter()
        .filter(|a| a.1 > 0)
        .map(|(kind, grids, counts)| {
            let high: usize = counts.iter().sum();
            let share = |i: usize| if high == 0 { 0.0 } else { counts[i] as f64 / high as f64 };
            KindLocality {
                kind,
                grids,
                high_cells: high,
                counts,
                shares: RegionShares { subject: share(0), relation: share(1), last: share(2), other: share(3) },
                empty: high == 0,
            }
        })
        .collect();
    LocalityReport { threshold, kinds }
}
