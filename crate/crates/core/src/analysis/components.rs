// SPDX-License-Identifier: MIT OR Apache-2.0

use serde::{Deserialize, Serialize};

use super::profile::{KindProfile, LayerProfile};
use crate::error::{LabError, Result};
use crate::scoring::AblationKind;

/// Inclusive integer layer range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Band {
    pub lo: usize,
    pub hi: usize,
}

impl Band {
    pub fn new(lo: usize, hi: usize) -> Result<Self> {
        if lo > hi {
            return Err(LabError::Config(format!("empty band {lo}..={hi}")));
        }
        Ok(Self { lo, hi })
    }

    pub fn contains(&self, layer: usize) -> bool {
        (self.lo..=self.hi).contains(&layer)
    }

    pub fn layers(&self) -> std::ops::RangeInclusive<usize> {
        self.lo..=self.hi
    }

    pub fn width(&self) -> usize {
        self.hi - self.lo + 1
    }

    pub fn check(&self, layer: usize) -> Result<()> {
        if self.contains(layer) {
            Ok(())
        } else {
            Err(LabError::LayerOutsideBand { layer, lo: self.lo, hi: self.hi })
        }
    }
}

/// Depth-fraction interval `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub lo: f64,
    pub hi: f64,
}

impl Fraction {
    /// `lo = round(lo * L)`, `hi = ceil(hi * L) - 1`, clamped to `[0, L-1]`.
    pub fn rescale(&self, layers: usize) -> Result<Band> {
        if !(0.0..=1.0).contains(&self.lo) || !(0.0..=1.0).contains(&self.hi) || self.lo > self.hi {
            return Err(LabError::Config(format!("bad fraction interval [{}, {}]", self.lo, self.hi)));
        }
        let l = layers as f64;
        let lo = (self.lo * l).round() as usize;
        let hi = ((self.hi * l).ceil() as usize).saturating_sub(1).min(layers - 1);
        Band::new(lo, hi)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ComponentFractions {
    pub subject: Fraction,
    pub relation: Fraction,
    pub object: Fraction,
}

impl Default for ComponentFractions {
    fn default() -> Self {
        Self {
            subject: Fraction { lo: 0.0, hi: 0.45 },
            relation: Fraction { lo: 0.0, hi: 0.33 },
            object: Fraction { lo: 0.47, hi: 1.0 },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandMode {
    Fractions,
    HalfMax,
}

/// Layer bands of the three functional components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComponentSpec {
    pub layers: usize,
    pub mode: BandMode,
    pub subject: Band,
    pub relation: Band,
    pub object: Band,
}

impl ComponentSpec {
    pub fn band(&self, kind: AblationKind) -> Band {
        match kind {
            AblationKind::Subject => self.subject,
            AblationKind::Relation => self.relation,
            AblationKind::Object => self.object,
        }
    }
}

/// Where the bands come from.
pub enum ComponentSource<'a> {
    Fractions(&'a ComponentFractions),
    HalfMax(&'a LayerProfile),
}

/// Contiguous run of layers around the argmax whose mean is at least half the
/// maximum.
pub fn half_max_band(profile: &KindProfile) -> Result<Band> {
    let m = profile.argmax();
    let peak = profile.means[m];
    if !(peak > 0.0) {
        return Err(LabError::Config(format!("{} profile has no positive peak", profile.kind)));
    }
    let half = peak / 2.0;
    let mut lo = m;
    while lo > 0 && profile.means[lo - 1] >= half {
        lo -= 1;
    }
    let mut hi = m;
    while hi + 1 < profile.means.len() && profile.means[hi + 1] >= half {
        hi += 1;
    }
    Band::new(lo, hi)
}

pub fn derive_components(source: ComponentSource<'_>, layers: usize) -> Result<ComponentSpec> {
    if layers < 4 {
        return Err(LabError::Config(format!("component bands need at least 4 layers, got {layers}")));
    }
    match source {
        ComponentSource::Fractions(f) => Ok(ComponentSpec {
            layers,
            mode: BandMode::Fractions,
            subject: f.subject.rescale(layers)?,
            relation: f.relation.rescale(layers)?,
            object: f.object.rescale(layers)?,
        }),
        ComponentSource::HalfMax(p) => {
            if p.layers != layers {
                return Err(LabError::Config(format!("profile has {} layers, expected {layers}", p.layers)));
            }
            let band = |k: AblationKind| {
                p.kind(k).ok_or_else(|| LabError::Config(format!("profile lacks {k}"))).and_then(half_max_band)
            };
            Ok(ComponentSpec {
                layers,
                mode: BandMode::HalfMax,
                subject: band(AblationKind::Subject)?,
                relation: band(AblationKind::Relation)?,
                object: band(AblationKind::Object)?,
            })
        }
    }
}
