// SPDX-License-Identifier: MIT OR Apache-2.0

//! Deterministic Adam training loop with filter-based early stopping.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::data::{SequenceSampler, TrainMixture};
use super::filter::filter_known;
use crate::corpus::KnowledgeWorld;
use crate::error::{LabError, Result};
use crate::model::{Model, ModelCheckpoint, ModelConfig, TrainingMeta};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub steps: usize,
    pub batch_size: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub weight_decay: f64,
    pub warmup_steps: usize,
    /// Global gradient-norm clip; 0 disables clipping.
    pub grad_clip: f64,
    pub seed: u64,
    /// Stop once the filter pass rate reaches this value (and `min_steps` ran).
    pub target_accuracy: f64,
    pub min_steps: usize,
    pub eval_every: usize,
    pub mixture: TrainMixture,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            steps: 1500,
            batch_size: 32,
            beta1: 0.9,
            beta2: 0.98,
            adam_eps: 1e-8,
            weight_decay: 0.0,
            warmup_steps: 100,
            grad_clip: 1.0,
            seed: 0,
            target_accuracy: 0.99,
            min_steps: 1500,
            eval_every: 100,
            mixture: TrainMixture::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(LabError::Config(m.into()));
        if !(self.learning_rate > 0.0) || !self.learning_rate.is_finite() {
            return bad("learning_rate must be positive");
        }
        if self.batch_size == 0 || self.eval_every == 0 {
            return bad("batch_size and eval_every must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("adam hyperparameters out of range");
        }
        if self.weight_decay < 0.0 || self.grad_clip < 0.0 {
            return bad("weight_decay and grad_clip must be non-negative");
        }
        if !(0.0..=1.0).contains(&self.target_accuracy) {
            return bad("target_accuracy must lie in [0, 1]");
        }
        self.mixture.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLogRow {
    pub step: usize,
    /// Mean batch loss since the previous row.
    pub loss: f64,
    pub filter_pass_rate: f64,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub checkpoint: ModelCheckpoint,
    pub log: Vec<TrainLogRow>,
}

/// Fill `vocab_size` from the world when zero and check sequence lengths fit.
pub fn resolve_model_config(world: &KnowledgeWorld, config: &ModelConfig, mixture: &TrainMixture) -> Result<ModelConfig> {
    let mut c = config.clone();
    let v = world.vocabulary.len();
    if c.vocab_size == 0 {
        c.vocab_size = v;
    } else if c.vocab_size < v {
        return Err(LabError::Config(format!("vocab_size {} smaller than the world's {v}", c.vocab_size)));
    }
    let need = SequenceSampler::new(world, mixture.clone())?.max_len()?;
    if c.max_seq_len < need {
        return Err(LabError::Config(format!("max_seq_len {} below longest sequence {need}", c.max_seq_len)));
    }
    c.validate()?;
    Ok(c)
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, cfg: &TrainConfig) {
        self.t += 1;
        let bc1 = 1.0 - cfg.beta1.powi(self.t);
        let bc2 = 1.0 - cfg.beta2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = cfg.beta1 * self.m[i] + (1.0 - cfg.beta1) * g;
            self.v[i] = cfg.beta2 * self.v[i] + (1.0 - cfg.beta2) * g * g;
            let update = (self.m[i] / bc1) / ((self.v[i] / bc2).sqrt() + cfg.adam_eps);
            params[i] -= lr * (update + cfg.weight_decay * params[i]);
        }
    }
}

fn lr_at(step: usize, cfg: &TrainConfig) -> f64 {
    if step < cfg.warmup_steps {
        return cfg.learning_rate * (step + 1) as f64 / cfg.warmup_steps as f64;
    }
    let span = cfg.steps.saturating_sub(cfg.warmup_steps).max(1) as f64;
    let t = (step - cfg.warmup_steps) as f64 / span;
    cfg.learning_rate * (0.1 + 0.9 * 0.5 * (1.0 + (std::f64::consts::PI * t.min(1.0)).cos()))
}

/// Train a fresh model on `world`. Identical inputs give a bit-identical
/// checkpoint.
pub fn train(world: &KnowledgeWorld, model_config: &ModelConfig, config: &TrainConfig, init_seed: u64) -> Result<TrainReport> {
    config.validate()?;
    let mc = resolve_model_config(world, model_config, &config.mixture)?;
    let mut model = Model::init(mc, init_seed)?;
    let sampler = SequenceSampler::new(world, config.mixture.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let n = model.params().len();
    let mut adam = Adam { m: vec![0.0; n], v: vec![0.0; n], t: 0 };
    let mut grad = vec![0.0; n];
    let mut log = Vec::new();
    let mut initial_loss = f64::NAN;
    let mut last_loss = f64::NAN;
    let mut window = (0.0, 0usize);
    let mut steps_run = 0;

    if config.steps == 0 {
        let batch = (0..config.batch_size).map(|_| sampler.sample(&mut rng)).collect::<Result<Vec<_>>>()?;
        initial_loss = model.loss_and_grad(&batch, None)?;
        last_loss = initial_loss;
    }
    for step in 0..config.steps {
        let batch = (0..config.batch_size).map(|_| sampler.sample(&mut rng)).collect::<Result<Vec<_>>>()?;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let loss = model.loss_and_grad(&batch, Some(&mut grad))?;
        if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(LabError::Diverged { step, loss });
        }
        if step == 0 {
            initial_loss = loss;
        }
        last_loss = loss;
        window.0 += loss;
        window.1 += 1;
        if config.grad_clip > 0.0 {
            let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
            if norm > config.grad_clip {
                let s = config.grad_clip / norm;
                grad.iter_mut().for_each(|g| *g *= s);
            }
        }
        adam.step(model.params_mut(), &grad, lr_at(step, config), config);
        steps_run = step + 1;

        if steps_run % config.eval_every == 0 || steps_run == config.steps {
            let pass = filter_known(&model, world)?.pass_rate;
            let mean = window.0 / window.1 as f64;
            log::info!("step {steps_run}: loss {mean:.4}, filter pass rate {pass:.3}");
            log.push(TrainLogRow { step: steps_run, loss: mean, filter_pass_rate: pass });
            window = (0.0, 0);
            if pass >= config.target_accuracy && steps_run >= config.min_steps {
                break;
            }
        }
    }

    let meta = TrainingMeta {
        steps: steps_run,
        initial_loss,
        final_loss: last_loss,
        world_seed: world.seed,
        train_seed: config.seed,
    };
    Ok(TrainReport { checkpoint: ModelCheckpoint::new(model, meta), log })
}

/// Write the training log as CSV.
pub fn write_train_log<W: std::io::Write>(rows: &[TrainLogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}
