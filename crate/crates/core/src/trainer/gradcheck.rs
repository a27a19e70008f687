// SPDX-License-Identifier: MIT OR Apache-2.0

//! Central finite-difference check of analytic gradients.

use std::ops::Range;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::model::backprop::TrainSequence;
use crate::model::Model;

/// A differentiable scalar function of a flat parameter vector.
pub trait Objective {
    fn params(&self) -> &[f64];
    fn params_mut(&mut self) -> &mut [f64];
    /// Loss, writing the gradient into `grad` (zeroed by the caller).
    fn loss_and_grad(&self, grad: Option<&mut [f64]>) -> Result<f64>;
    /// Parameter groups sampled separately so every tensor is covered.
    fn groups(&self) -> Vec<Range<usize>> {
        vec![0..self.params().len()]
    }
}

/// Mean cross-entropy of a model over a fixed batch.
pub struct ModelObjective<'b> {
    pub model: Model,
    pub batch: &'b [TrainSequence],
}

impl Objective for ModelObjective<'_> {
    fn params(&self) -> &[f64] {
        self.model.params()
    }
    fn params_mut(&mut self) -> &mut [f64] {
        self.model.params_mut()
    }
    fn loss_and_grad(&self, grad: Option<&mut [f64]>) -> Result<f64> {
        self.model.loss_and_grad(self.batch, grad)
    }
    fn groups(&self) -> Vec<Range<usize>> {
        self.model.layout().specs.iter().map(|s| s.range()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckConfig {
    pub epsilon: f64,
    /// Coordinates drawn per parameter group (all when the group is smaller).
    pub samples_per_group: usize,
    pub seed: u64,
    /// Denominator floor so vanishing gradients do not inflate the ratio.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self { epsilon: 1e-5, samples_per_group: 8, seed: 0, floor: 1e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error <= tolerance
    }
}

/// Compare analytic and central-difference gradients on a random subsample.
///
/// The relative error of coordinate `i` is
/// `|g_i - n_i| / max(|g_i|, |n_i|, floor)`.
pub fn gradient_check<O: Objective>(objective: &mut O, config: &GradCheckConfig) -> Result<GradCheckReport> {
    if !(1e-6..=1e-3).contains(&config.epsilon) {
        return Err(LabError::Config(format!("epsilon {} outside [1e-6, 1e-3]", config.epsilon)));
    }
    let n = objective.params().len();
    let mut grad = vec![0.0; n];
    objective.loss_and_grad(Some(&mut grad))?;

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut indices = Vec::new();
    for g in objective.groups() {
        if g.len() <= config.samples_per_group {
            indices.extend(g);
        } else {
            let mut picked: Vec<usize> = sample(&mut rng, g.len(), config.samples_per_group).into_iter().map(|i| g.start + i).collect();
            picked.sort_unstable();
            indices.extend(picked);
        }
    }

    let mut worst = (0.0f64, 0usize);
    for &i in &indices {
        let orig = objective.params()[i];
        objective.params_mut()[i] = orig + config.epsilon;
        let up = objective.loss_and_grad(None)?;
        objective.params_mut()[i] = orig - config.epsilon;
        let down = objective.loss_and_grad(None)?;
        objective.params_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * config.epsilon);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(config.floor);
        if rel > worst.0 || !rel.is_finite() {
            worst = (rel, i);
        }
    }
    Ok(GradCheckReport { max_rel_error: worst.0, worst_index: worst.1, checked: indices.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// `f(x) = 1/2 x^T A x + b^T x` with symmetric `A`.
    struct Quadratic {
        a: Vec<f64>,
        b: Vec<f64>,
        x: Vec<f64>,
        flip: Option<usize>,
    }

    impl Objective for Quadratic {
        fn params(&self) -> &[f64] {
            &self.x
        }
        fn params_mut(&mut self) -> &mut [f64] {
            &mut self.x
        }
        fn loss_and_grad(&self, grad: Option<&mut [f64]>) -> Result<f64> {
            let n = self.x.len();
            let ax: Vec<f64> = (0..n).map(|i| (0..n).map(|j| self.a[i * n + j] * self.x[j]).sum()).collect();
            let f = 0.5 * self.x.iter().zip(&ax).map(|(x, y)| x * y).sum::<f64>()
                + self.b.iter().zip(&self.x).map(|(b, x)| b * x).sum::<f64>();
            if let Some(g) = grad {
                for i in 0..n {
                    g[i] += ax[i] + self.b[i];
                }
                if let Some(k) = self.flip {
                    g[k] = -g[k];
                }
            }
            Ok(f)
        }
    }

    fn quad(flip: Option<usize>) -> Quadratic {
        let n = 6;
        let mut a = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                a[i * n + j] = 1.0 / (1.0 + (i + j) as f64) + if i == j { 2.0 } else { 0.0 };
            }
        }
        Quadratic { a, b: (0..n).map(|i| 0.3 * i as f64 - 0.7).collect(), x: (0..n).map(|i| (i as f64).sin()).collect(), flip }
    }

    #[test]
    fn quadratic_is_exact() {
        let r = gradient_check(&mut quad(None), &GradCheckConfig { epsilon: 1e-4, ..Default::default() }).unwrap();
        assert_eq!(r.checked, 6);
        assert!(r.max_rel_error <= 1e-8, "{r:?}");
    }

    #[test]
    fn sign_flip_is_caught() {
        let r = gradient_check(&mut quad(Some(2)), &GradCheckConfig::default()).unwrap();
        assert!(!r.passes(1e-4));
        assert_eq!(r.worst_index, 2);
    }

    #[test]
    fn epsilon_range_enforced() {
        assert!(gradient_check(&mut quad(None), &GradCheckConfig { epsilon: 1e-2, ..Default::default() }).is_err());
    }
}
