// SPDX-License-Identifier: MIT OR Apache-2.0

//! Pre-norm decoder-only transformer with an addressable residual stream.
//!
//! Residual recurrence per block `l = 1..L-1`:
//!
//! ```text
//! m_l = h_{l-1} + Attn(LN1(h_{l-1}))
//! h_l = m_l + MLP(LN2(m_l))
//! ```
//!
//! `h_0` is the token embedding plus the learned position embedding, and the
//! head reads `LN_f(h_{L-1, n-1})`.

pub mod backprop;
pub mod checkpoint;
pub mod config;
pub mod kernels;
pub mod params;
pub mod patch;

use kernels::{causal_attention, gelu, layer_norm, linear, softmax};

pub use checkpoint::{ModelCheckpoint, TrainingMeta};
pub use config::ModelConfig;
pub use params::{Layout, TensorSpec};
pub use patch::{mean_over, ActivationCache, EmbeddingNoise, NextTokenDistribution, PatchDirective, PatchPlan};

use crate::error::{LabError, Result};

/// Weights plus their layout. Immutable during inference.
#[derive(Debug, Clone)]
pub struct Model {
    config: ModelConfig,
    layout: Layout,
    params: Vec<f64>,
}

/// Distribution and full activation cache of one run.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    pub dist: NextTokenDistribution,
    pub cache: ActivationCache,
}

impl Model {
    /// Freshly initialised model.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        let params = params::init_params(&config, &layout, seed);
        Ok(Self { config, layout, params })
    }

    pub fn from_params(config: ModelConfig, params: Vec<f64>) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(&config);
        if params.len() != layout.total {
            return Err(LabError::Config(format!(
                "parameter count {} != {} expected by config",
                params.len(),
                layout.total
            )));
        }
        Ok(Self { config, layout, params })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn token_embeddings(&self) -> &[f64] {
        &self.params[self.layout.tok_emb.clone()]
    }

    /// Population standard deviation over every entry of the token
    /// embedding table.
    pub fn embedding_std(&self) -> f64 {
        let e = self.token_embeddings();
        let mean = e.iter().sum::<f64>() / e.len() as f64;
        (e.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / e.len() as f64).sqrt()
    }

    fn check_tokens(&self, tokens: &[usize], offset: usize) -> Result<()> {
        if tokens.is_empty() {
            return Err(LabError::Prompt("empty token sequence".into()));
        }
        if offset + tokens.len() > self.config.max_seq_len {
            return Err(LabError::IndexOutOfRange(format!(
                "sequence of {} at offset {offset} exceeds max_seq_len {}",
                tokens.len(),
                self.config.max_seq_len
            )));
        }
        if let Some(&id) = tokens.iter().find(|&&t| t >= self.config.vocab_size) {
            return Err(LabError::TokenOutOfRange { id, vocab: self.config.vocab_size });
        }
        Ok(())
    }

    /// `h_0`: token plus position embeddings, starting at position `offset`.
    pub(crate) fn embed(&self, tokens: &[usize], offset: usize) -> Vec<f64> {
        let d = self.config.d_model;
        let tok = &self.params[self.layout.tok_emb.clone()];
        let pos = &self.params[self.layout.pos_emb.clone()];
        let mut h = vec![0.0; tokens.len() * d];
        for (j, &t) in tokens.iter().enumerate() {
            let p = offset + j;
            for i in 0..d {
                h[j * d + i] = tok[t * d + i] + pos[p * d + i];
            }
        }
        h
    }

    /// Apply block `b` (0-based) in place: maps `h_b` to `h_{b+1}`.
    pub(crate) fn block(&self, b: usize, h: &mut [f64], n: usize) {
        let c = &self.config;
        let (d, f) = (c.d_model, c.d_ff);
        let bl = &self.layout.blocks[b];
        let p = &self.params;
        let (a, _) = layer_norm(h, n, d, &p[bl.ln1_g.clone()], &p[bl.ln1_b.clone()], c.ln_eps);
        let qkv = linear(&a, n, d, &p[bl.w_qkv.clone()], &p[bl.b_qkv.clone()], 3 * d);
        let (att, _) = causal_attention(&qkv, n, d, c.heads);
        let o = linear(&att, n, d, &p[bl.w_o.clone()], &p[bl.b_o.clone()], d);
        h.iter_mut().zip(&o).for_each(|(x, y)| *x += y);
        let (z, _) = layer_norm(h, n, d, &p[bl.ln2_g.clone()], &p[bl.ln2_b.clone()], c.ln_eps);
        let mut u = linear(&z, n, d, &p[bl.w_fc.clone()], &p[bl.b_fc.clone()], f);
        u.iter_mut().for_each(|x| *x = gelu(*x));
        let m = linear(&u, n, f, &p[bl.w_proj.clone()], &p[bl.b_proj.clone()], d);
        h.iter_mut().zip(&m).for_each(|(x, y)| *x += y);
    }

    /// Logits from one final-layer residual row.
    pub(crate) fn logits(&self, last_row: &[f64]) -> Vec<f64> {
        let c = &self.config;
        let (z, _) = layer_norm(
            last_row,
            1,
            c.d_model,
            &self.params[self.layout.lnf_g.clone()],
            &self.params[self.layout.lnf_b.clone()],
            c.ln_eps,
        );
        let mut out = vec![0.0; c.vocab_size];
        kernels::gemm(1, c.d_model, c.vocab_size, &z, false, &self.params[self.layout.head.clone()], false, &mut out, 1.0, 0.0);
        out
    }

    /// Clean or patched forward pass from position 0, returning the
    /// next-token distribution at the final position and every `h_{l,j}`.
    pub fn forward(&self, tokens: &[usize], plan: &PatchPlan) -> Result<ForwardOutput> {
        let (dist, cache) = self.run(tokens, 0, plan, None, true)?;
        Ok(ForwardOutput { dist, cache: cache.expect("cache requested") })
    }

    /// Like [`Model::forward`] but without materialising the cache.
    pub fn probe(&self, tokens: &[usize], plan: &PatchPlan) -> Result<NextTokenDistribution> {
        Ok(self.run(tokens, 0, plan, None, false)?.0)
    }

    /// Continue a run from layer `start` of `base`, applying `plan`'s
    /// directives at layers `>= start`. Equivalent to a full patched pass
    /// whenever `base` was produced by the same input, noise and
    /// lower-layer directives.
    pub fn resume(
        &self,
        tokens: &[usize],
        base: &ActivationCache,
        start: usize,
        plan: &PatchPlan,
    ) -> Result<NextTokenDistribution> {
        if plan.directives.iter().any(|d| d.layer < start) {
            return Err(LabError::InvalidPlan(format!("directive below resume layer {start}")));
        }
        if base.len() != tokens.len() || base.layers() != self.config.layers {
            return Err(LabError::InvalidPlan("resume cache does not match the input".into()));
        }
        Ok(self.run(tokens, 0, plan, Some((start, base)), false)?.0)
    }

    pub(crate) fn run(
        &self,
        tokens: &[usize],
        offset: usize,
        plan: &PatchPlan,
        resume: Option<(usize, &ActivationCache)>,
        keep_cache: bool,
    ) -> Result<(NextTokenDistribution, Option<ActivationCache>)> {
        let c = &self.config;
        let (n, d, layers) = (tokens.len(), c.d_model, c.layers);
        self.check_tokens(tokens, offset)?;
        plan.validate(layers, n, d)?;
        let by_layer = plan.by_layer(layers);
        let mut cache = keep_cache.then(|| ActivationCache::zeros(layers, n, d));

        let (start, mut h) = match resume {
            Some((start, base)) => {
                if start >= layers {
                    return Err(LabError::IndexOutOfRange(format!("resume layer {start} >= {layers}")));
                }
                (start, base.layer(start)?.to_vec())
            }
            None => {
                let mut h = self.embed(tokens, offset);
                if let Some(noise) = &plan.noise {
                    for (&p, v) in noise.positions.iter().zip(&noise.vectors) {
                        h[p * d..(p + 1) * d].iter_mut().zip(v).for_each(|(x, e)| *x += e);
                    }
                }
                (0, h)
            }
        };
        for layer in start..layers {
            if layer > start {
                self.block(layer - 1, &mut h, n);
            }
            for dir in &by_layer[layer] {
                h[dir.position * d..(dir.position + 1) * d].copy_from_slice(&dir.vector);
            }
            if let Some(cache) = cache.as_mut() {
                cache.layer_mut(layer).copy_from_slice(&h);
            }
        }
        let probs = softmax(&self.logits(&h[(n - 1) * d..]));
        Ok((NextTokenDistribution::from_probs(probs), cache))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> Model {
        let cfg = ModelConfig { layers: 4, d_model: 16, heads: 2, d_ff: 32, vocab_size: 11, max_seq_len: 12, ln_eps: 1e-5 };
        Model::init(cfg, 3).unwrap()
    }

    #[test]
    fn distribution_normalised() {
        let m = tiny();
        let out = m.forward(&[1, 2, 3, 4], &PatchPlan::new()).unwrap();
        assert!((out.dist.probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(out.dist.probs.iter().all(|&p| p >= 0.0));
        let top = out.dist.prob(out.dist.argmax).unwrap();
        assert!(out.dist.probs.iter().all(|&p| p <= top));
        assert_eq!((out.cache.layers(), out.cache.len(), out.cache.width()), (4, 4, 16));
    }

    #[test]
    fn self_patch_is_exact_noop() {
        let m = tiny();
        let toks = [3, 1, 4, 1, 5];
        let clean = m.forward(&toks, &PatchPlan::new()).unwrap();
        let mut plan = PatchPlan::new();
        for l in 0..4 {
            for j in 0..toks.len() {
                plan.push(l, j, clean.cache.read(l, j).unwrap().to_vec());
            }
        }
        let patched = m.forward(&toks, &plan).unwrap();
        assert_eq!(patched.dist.max_abs_diff(&clean.dist), 0.0);
    }

    #[test]
    fn directive_value_lands_in_cache() {
        let m = tiny();
        let v: Vec<f64> = (0..16).map(|i| i as f64).collect();
        let out = m.forward(&[1, 2, 3], &PatchPlan::new().patch(2, 1, v.clone())).unwrap();
        assert_eq!(out.cache.read(2, 1).unwrap(), v.as_slice());
    }

    #[test]
    fn out_of_range_directive_rejected() {
        let m = tiny();
        assert!(m.forward(&[1, 2], &PatchPlan::new().patch(4, 0, vec![0.0; 16])).is_err());
        assert!(m.forward(&[1, 2], &PatchPlan::new().patch(0, 2, vec![0.0; 16])).is_err());
        assert!(m.forward(&[1, 99], &PatchPlan::new()).is_err());
    }

    #[test]
    fn resume_matches_full_patched_run() {
        let m = tiny();
        let toks = [2, 7, 1, 8, 2];
        let noise = EmbeddingNoise { positions: vec![1], vectors: vec![vec![0.3; 16]] };
        let corrupted = m.forward(&toks, &PatchPlan::with_noise(noise.clone())).unwrap();
        let v = vec![0.1; 16];
        for l in 0..4 {
            let full = PatchPlan { directives: vec![PatchDirective { layer: l, position: 2, vector: v.clone() }], noise: Some(noise.clone()) };
            let a = m.probe(&toks, &full).unwrap();
            let b = m.resume(&toks, &corrupted.cache, l, &PatchPlan::new().patch(l, 2, v.clone())).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn causal_shadow() {
        let m = tiny();
        let a = m.forward(&[1, 2, 3, 4, 5], &PatchPlan::new()).unwrap();
        let b = m.forward(&[1, 2, 3, 9, 9], &PatchPlan::new()).unwrap();
        for l in 0..4 {
            for j in 0..3 {
                assert_eq!(a.cache.read(l, j).unwrap(), b.cache.read(l, j).unwrap());
            }
        }
    }
}
