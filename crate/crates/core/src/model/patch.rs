// SPDX-License-Identifier: MIT OR Apache-2.0

//! Activation caches, patch plans and next-token distributions.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

/// Residual-stream activations of one run, indexed by (layer, position).
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationCache {
    layers: usize,
    len: usize,
    width: usize,
    data: Vec<f64>,
}

impl ActivationCache {
    pub(crate) fn zeros(layers: usize, len: usize, width: usize) -> Self {
        Self { layers, len, width, data: vec![0.0; layers * len * width] }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub(crate) fn layer_mut(&mut self, layer: usize) -> &mut [f64] {
        let s = self.len * self.width;
        &mut self.data[layer * s..(layer + 1) * s]
    }

    /// All positions of one layer, `len x width` row-major.
    pub fn layer(&self, layer: usize) -> Result<&[f64]> {
        if layer >= self.layers {
            return Err(LabError::IndexOutOfRange(format!("layer {layer} >= {}", self.layers)));
        }
        let s = self.len * self.width;
        Ok(&self.data[layer * s..(layer + 1) * s])
    }

    /// `h_{layer, position}`.
    pub fn read(&self, layer: usize, position: usize) -> Result<&[f64]> {
        if layer >= self.layers || position >= self.len {
            return Err(LabError::IndexOutOfRange(format!(
                "cell ({layer}, {position}) outside ({}, {})",
                self.layers, self.len
            )));
        }
        let o = (layer * self.len + position) * self.width;
        Ok(&self.data[o..o + self.width])
    }
}

/// Component-wise mean of `h_{layer, j}` over every cache and every listed
/// position.
pub fn mean_over(caches: &[&ActivationCache], layer: usize, positions: &[usize]) -> Result<Vec<f64>> {
    let first = caches.first().ok_or_else(|| LabError::IndexOutOfRange("no caches to average".into()))?;
    if positions.is_empty() {
        return Err(LabError::IndexOutOfRange("no positions to average".into()));
    }
    let width = first.width();
    let mut acc = vec![0.0; width];
    for c in caches {
        if c.width() != width {
            return Err(LabError::IndexOutOfRange(format!("cache width {} != {width}", c.width())));
        }
        for &p in positions {
            for (a, v) in acc.iter_mut().zip(c.read(layer, p)?) {
                *a += v;
            }
        }
    }
    let count = (caches.len() * positions.len()) as f64;
    acc.iter_mut().for_each(|a| *a /= count);
    Ok(acc)
}

/// `do(h_{layer, position} <- vector)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatchDirective {
    pub layer: usize,
    pub position: usize,
    pub vector: Vec<f64>,
}

/// Noise added to the input embeddings before layer 0 is formed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingNoise {
    pub positions: Vec<usize>,
    pub vectors: Vec<Vec<f64>>,
}

/// Ordered interventions for one forward pass.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PatchPlan {
    pub directives: Vec<PatchDirective>,
    pub noise: Option<EmbeddingNoise>,
}

impl PatchPlan {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_noise(noise: EmbeddingNoise) -> Self {
        Self { directives: Vec::new(), noise: Some(noise) }
    }

    pub fn patch(mut self, layer: usize, position: usize, vector: Vec<f64>) -> Self {
        self.directives.push(PatchDirective { layer, position, vector });
        self
    }

    pub fn push(&mut self, layer: usize, position: usize, vector: Vec<f64>) {
        self.directives.push(PatchDirective { layer, position, vector });
    }

    pub fn is_empty(&self) -> bool {
        self.directives.is_empty() && self.noise.is_none()
    }

    /// Cells touched by directives, sorted.
    pub fn cells(&self) -> Vec<(usize, usize)> {
        let mut c: Vec<_> = self.directives.iter().map(|d| (d.layer, d.position)).collect();
        c.sort_unstable();
        c
    }

    /// Reject duplicate cells, out-of-range indices and width mismatches.
    pub fn validate(&self, layers: usize, len: usize, width: usize) -> Result<()> {
        let mut seen = BTreeMap::new();
        for d in &self.directives {
            if d.layer >= layers || d.position >= len {
                return Err(LabError::IndexOutOfRange(format!(
                    "directive at ({}, {}) outside ({layers}, {len})",
                    d.layer, d.position
                )));
            }
            if d.vector.len() != width {
                return Err(LabError::InvalidPlan(format!(
                    "directive width {} != model width {width}",
                    d.vector.len()
                )));
            }
            if seen.insert((d.layer, d.position), ()).is_some() {
                return Err(LabError::InvalidPlan(format!("duplicate cell ({}, {})", d.layer, d.position)));
            }
        }
        if let Some(n) = &self.noise {
            if n.positions.len() != n.vectors.len() {
                return Err(LabError::InvalidPlan("noise positions and vectors differ in count".into()));
            }
            let mut uniq = n.positions.clone();
            uniq.sort_unstable();
            uniq.dedup();
            if uniq.len() != n.positions.len() {
                return Err(LabError::InvalidPlan("duplicate noise position".into()));
            }
            if let Some(&p) = n.positions.iter().find(|&&p| p >= len) {
                return Err(LabError::IndexOutOfRange(format!("noise position {p} >= {len}")));
            }
            if n.vectors.iter().any(|v| v.len() != width) {
                return Err(LabError::InvalidPlan("noise width mismatch".into()));
            }
        }
        Ok(())
    }

    /// Directives grouped by layer.
    pub(crate) fn by_layer(&self, layers: usize) -> Vec<Vec<&PatchDirective>> {
        let mut out = vec![Vec::new(); layers];
        for d in &self.directives {
            out[d.layer].push(d);
        }
        out
    }
}

/// Softmax over the vocabulary at the final position.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NextTokenDistribution {
    pub probs: Vec<f64>,
    pub argmax: usize,
}

impl NextTokenDistribution {
    pub fn from_probs(probs: Vec<f64>) -> Self {
        let argmax = probs
            .iter()
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bp), (i, &p)| if p > bp { (i, p) } else { (bi, bp) })
            .0;
        Self { probs, argmax }
    }

    /// Probability of `token` as the next (first object) token.
    pub fn prob(&self, token: usize) -> Result<f64> {
        self.probs
            .get(token)
            .copied()
            .ok_or(LabError::TokenOutOfRange { id: token, vocab: self.probs.len() })
    }

    pub fn max_abs_diff(&self, other: &NextTokenDistribution) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn cache_from(rows: &[Vec<f64>]) -> ActivationCache {
        let w = rows[0].len();
        let mut c = ActivationCache::zeros(1, rows.len(), w);
        for (i, r) in rows.iter().enumerate() {
            c.layer_mut(0)[i * w..(i + 1) * w].copy_from_slice(r);
        }
        c
    }

    #[test]
    fn mean_identity_and_symmetry() {
        let v = vec![0.5, -1.25, 3.0];
        let c = cache_from(std::slice::from_ref(&v));
        assert_eq!(mean_over(&[&c, &c], 0, &[0]).unwrap(), v);
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        let c2 = cache_from(&[neg]);
        assert!(mean_over(&[&c, &c2], 0, &[0]).unwrap().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn out_of_range_reads() {
        let c = cache_from(&[vec![1.0, 2.0]]);
        assert!(c.read(1, 0).is_err());
        assert!(c.read(0, 1).is_err());
        assert!(mean_over(&[&c], 0, &[3]).is_err());
    }

    #[test]
    fn plan_validation() {
        let ok = PatchPlan::new().patch(1, 2, vec![0.0; 4]);
        assert!(ok.validate(3, 3, 4).is_ok());
        assert!(ok.validate(1, 3, 4).is_err());
        assert!(ok.validate(3, 2, 4).is_err());
        assert!(ok.validate(3, 3, 5).is_err());
        let dup = ok.clone().patch(1, 2, vec![1.0; 4]);
        assert!(matches!(dup.validate(3, 3, 4), Err(LabError::InvalidPlan(_))));
    }

    #[test]
    fn uniform_probs() {
        let d = NextTokenDistribution::from_probs(vec![0.25; 4]);
        assert_eq!(d.prob(3).unwrap(), 0.25);
        assert!(d.prob(4).is_err());
    }

    proptest! {
        #[test]
        fn mean_of_three_matches_naive(vals in proptest::collection::vec(-10.0f64..10.0, 15)) {
            let rows: Vec<Vec<f64>> = vals.chunks(5).map(|c| c.to_vec()).collect();
            let caches: Vec<ActivationCache> = rows.iter().map(|r| cache_from(std::slice::from_ref(r))).collect();
            let refs: Vec<&ActivationCache> = caches.iter().collect();
            let m = mean_over(&refs, 0, &[0]).unwrap();
            for i in 0..5 {
                let brute = (rows[0][i] + rows[1][i] + rows[2][i]) / 3.0;
                prop_assert!((m[i] - brute).abs() <= 1e-12);
            }
        }
    }
}
