// SPDX-License-Identifier: MIT OR Apache-2.0

//! Flat parameter storage with a named layout.

use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::config::ModelConfig;

/// One named tensor inside the flat buffer.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn numel(&self) -> usize {
        self.shape.iter().product()
    }
    pub fn range(&self) -> Range<usize> {
        self.offset..self.offset + self.numel()
    }
}

#[derive(Debug, Clone)]
pub struct BlockLayout {
    pub ln1_g: Range<usize>,
    pub ln1_b: Range<usize>,
    pub w_qkv: Range<usize>,
    pub b_qkv: Range<usize>,
    pub w_o: Range<usize>,
    pub b_o: Range<usize>,
    pub ln2_g: Range<usize>,
    pub ln2_b: Range<usize>,
    pub w_fc: Range<usize>,
    pub b_fc: Range<usize>,
    pub w_proj: Range<usize>,
    pub b_proj: Range<usize>,
}

#[derive(Debug, Clone)]
pub struct Layout {
    pub tok_emb: Range<usize>,
    pub pos_emb: Range<usize>,
    pub blocks: Vec<BlockLayout>,
    pub lnf_g: Range<usize>,
    pub lnf_b: Range<usize>,
    pub head: Range<usize>,
    pub specs: Vec<TensorSpec>,
    pub total: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let (d, f, v) = (cfg.d_model, cfg.d_ff, cfg.vocab_size);
        let mut specs = Vec::new();
        let mut off = 0;
        let mut take = |name: String, shape: Vec<usize>| {
            let spec = TensorSpec { name, shape, offset: off };
            off += spec.numel();
            let r = spec.range();
            specs.push(spec);
            r
        };
        let tok_emb = take("tok_emb".into(), vec![v, d]);
        let pos_emb = take("pos_emb".into(), vec![cfg.max_seq_len, d]);
        let blocks = (0..cfg.blocks())
            .map(|b| BlockLayout {
                ln1_g: take(format!("blocks.{b}.ln1.g"), vec![d]),
                ln1_b: take(format!("blocks.{b}.ln1.b"), vec![d]),
                w_qkv: take(format!("blocks.{b}.attn.w_qkv"), vec![d, 3 * d]),
                b_qkv: take(format!("blocks.{b}.attn.b_qkv"), vec![3 * d]),
                w_o: take(format!("blocks.{b}.attn.w_o"), vec![d, d]),
                b_o: take(format!("blocks.{b}.attn.b_o"), vec![d]),
                ln2_g: take(format!("blocks.{b}.ln2.g"), vec![d]),
                ln2_b: take(format!("blocks.{b}.ln2.b"), vec![d]),
                w_fc: take(format!("blocks.{b}.mlp.w_fc"), vec![d, f]),
                b_fc: take(format!("blocks.{b}.mlp.b_fc"), vec![f]),
                w_proj: take(format!("blocks.{b}.mlp.w_proj"), vec![f, d]),
                b_proj: take(format!("blocks.{b}.mlp.b_proj"), vec![d]),
            })
            .collect();
        let lnf_g = take("ln_f.g".into(), vec![d]);
        let lnf_b = take("ln_f.b".into(), vec![d]);
        let head = take("head".into(), vec![d, v]);
        Self { tok_emb, pos_emb, blocks, lnf_g, lnf_b, head, specs, total: off }
    }
}

/// GPT-2 style initialisation: N(0, 0.02) matrices and embeddings, residual
/// output projections scaled by `1 / sqrt(2 * blocks)`, unit norm gains.
pub fn init_params(cfg: &ModelConfig, layout: &Layout, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = vec![0.0; layout.total];
    let std = 0.02;
    let resid_std = std / (2.0 * cfg.blocks() as f64).sqrt();
    let mut fill = |r: &Range<usize>, s: f64, data: &mut [f64]| {
        let dist = Normal::new(0.0, s).expect("positive std");
        for x in &mut data[r.clone()] {
            *x = dist.sample(&mut rng);
        }
    };
    fill(&layout.tok_emb, std, &mut data);
    fill(&layout.pos_emb, std, &mut data);
    for b in &layout.blocks {
        fill(&b.w_qkv, std, &mut data);
        fill(&b.w_o, resid_std, &mut data);
        fill(&b.w_fc, std, &mut data);
        fill(&b.w_proj, resid_std, &mut data);
        data[b.ln1_g.clone()].fill(1.0);
        data[b.ln2_g.clone()].fill(1.0);
    }
    data[layout.lnf_g.clone()].fill(1.0);
    fill(&layout.head, std, &mut data);
    data
}
