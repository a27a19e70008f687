// SPDX-License-Identifier: MIT OR Apache-2.0

//! Batched training forward pass and its hand-written backward pass.
//!
//! Sequences are packed row-wise so every linear layer runs as one GEMM over
//! all tokens in the batch; attention runs per sequence.

use super::kernels::{
    causal_attention, causal_attention_backward, gelu, gelu_grad, gemm, layer_norm, layer_norm_backward,
    linear, linear_backward, NormCache,
};
use super::Model;
use crate::error::{LabError, Result};

/// One training sequence with next-token targets at chosen positions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSequence {
    pub tokens: Vec<usize>,
    /// Position id of the first token.
    pub offset: usize,
    /// `(position, target token)`: the logits at `position` should predict
    /// `target`.
    pub targets: Vec<(usize, usize)>,
    /// Positions whose token embedding is dropped (position embedding kept).
    pub masked: Vec<usize>,
}

struct BlockTape {
    ln1: NormCache,
    a: Vec<f64>,
    qkv: Vec<f64>,
    probs: Vec<Vec<f64>>,
    att: Vec<f64>,
    ln2: NormCache,
    z: Vec<f64>,
    u: Vec<f64>,
    g: Vec<f64>,
}

impl Model {
    /// Mean next-token cross-entropy over every target in `batch`. When `grad`
    /// is given it must have the parameter count and receives `dLoss/dθ`
    /// (accumulated, so zero it first).
    pub fn loss_and_grad(&self, batch: &[TrainSequence], grad: Option<&mut [f64]>) -> Result<f64> {
        let c = self.config();
        let (d, f, v, heads) = (c.d_model, c.d_ff, c.vocab_size, c.heads);
        let lay = self.layout();
        let p = self.params();

        let mut starts = Vec::with_capacity(batch.len());
        let mut total = 0;
        let mut target_rows = Vec::new();
        for seq in batch {
            self.check_tokens(&seq.tokens, seq.offset)?;
            for &(pos, tgt) in &seq.targets {
                if pos >= seq.tokens.len() || tgt >= v {
                    return Err(LabError::IndexOutOfRange(format!("bad target ({pos}, {tgt})")));
                }
                target_rows.push((total + pos, tgt));
            }
            starts.push(total);
            total += seq.tokens.len();
        }
        if target_rows.is_empty() {
            return Err(LabError::Config("batch has no targets".into()));
        }

        let mut h = Vec::with_capacity(total * d);
        for seq in batch {
            let mut e = self.embed(&seq.tokens, seq.offset);
            let tok = &p[lay.tok_emb.clone()];
            for &j in &seq.masked {
                if j >= seq.tokens.len() {
                    return Err(LabError::IndexOutOfRange(format!("masked position {j}")));
                }
                let t = seq.tokens[j];
                e[j * d..(j + 1) * d].iter_mut().zip(&tok[t * d..(t + 1) * d]).for_each(|(x, y)| *x -= y);
            }
            h.extend(e);
        }

        let mut tapes = Vec::with_capacity(lay.blocks.len());
        for bl in &lay.blocks {
            let (a, ln1) = layer_norm(&h, total, d, &p[bl.ln1_g.clone()], &p[bl.ln1_b.clone()], c.ln_eps);
            let qkv = linear(&a, total, d, &p[bl.w_qkv.clone()], &p[bl.b_qkv.clone()], 3 * d);
            let mut att = vec![0.0; total * d];
            let mut probs = Vec::with_capacity(batch.len());
            for (seq, &s) in batch.iter().zip(&starts) {
                let n = seq.tokens.len();
                let (o, pr) = causal_attention(&qkv[s * 3 * d..(s + n) * 3 * d], n, d, heads);
                att[s * d..(s + n) * d].copy_from_slice(&o);
                probs.push(pr);
            }
            let o = linear(&att, total, d, &p[bl.w_o.clone()], &p[bl.b_o.clone()], d);
            h.iter_mut().zip(&o).for_each(|(x, y)| *x += y);
            let (z, ln2) = layer_norm(&h, total, d, &p[bl.ln2_g.clone()], &p[bl.ln2_b.clone()], c.ln_eps);
            let u = linear(&z, total, d, &p[bl.w_fc.clone()], &p[bl.b_fc.clone()], f);
            let g: Vec<f64> = u.iter().map(|&x| gelu(x)).collect();
            let m = linear(&g, total, f, &p[bl.w_proj.clone()], &p[bl.b_proj.clone()], d);
            h.iter_mut().zip(&m).for_each(|(x, y)| *x += y);
            tapes.push(BlockTape { ln1, a, qkv, probs, att, ln2, z, u, g });
        }

        let r = target_rows.len();
        let mut rows = Vec::with_capacity(r * d);
        for &(row, _) in &target_rows {
            rows.extend_from_slice(&h[row * d..(row + 1) * d]);
        }
        let (zf, lnf) = layer_norm(&rows, r, d, &p[lay.lnf_g.clone()], &p[lay.lnf_b.clone()], c.ln_eps);
        let mut logits = vec![0.0; r * v];
        gemm(r, d, v, &zf, false, &p[lay.head.clone()], false, &mut logits, 1.0, 0.0);

        let mut loss = 0.0;
        let mut dlogits = vec![0.0; r * v];
        for (i, &(_, tgt)) in target_rows.iter().enumerate() {
            let row = &logits[i * v..(i + 1) * v];
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|l| (l - max).exp()).sum();
            let lse = max + z.ln();
            loss += lse - row[tgt];
            for j in 0..v {
                dlogits[i * v + j] = (row[j] - lse).exp() / r as f64;
            }
            dlogits[i * v + tgt] -= 1.0 / r as f64;
        }
        loss /= r as f64;

        let Some(grad) = grad else { return Ok(loss) };
        if grad.len() != p.len() {
            return Err(LabError::Config("gradient buffer has the wrong length".into()));
        }

        let mut dzf = vec![0.0; r * d];
        gemm(d, r, v, &zf, true, &dlogits, false, &mut grad[lay.head.clone()], 1.0, 1.0);
        gemm(r, v, d, &dlogits, false, &p[lay.head.clone()], true, &mut dzf, 1.0, 0.0);
        let drows = {
            let (dg, db) = split_two(grad, &lay.lnf_g, &lay.lnf_b);
            layer_norm_backward(&dzf, &lnf, r, d, &p[lay.lnf_g.clone()], dg, db)
        };
        let mut dh = vec![0.0; total * d];
        for (i, &(row, _)) in target_rows.iter().enumerate() {
            for k in 0..d {
                dh[row * d + k] += drows[i * d + k];
            }
        }

        for (bl, tape) in lay.blocks.iter().zip(&tapes).rev() {
            // MLP branch
            let dg_act = {
                let (dw, db) = split_two(grad, &bl.w_proj, &bl.b_proj);
                linear_backward(&tape.g, &dh, total, f, d, &p[bl.w_proj.clone()], dw, db)
            };
            let du: Vec<f64> = dg_act.iter().zip(&tape.u).map(|(g, &u)| g * gelu_grad(u)).collect();
            let dz = {
                let (dw, db) = split_two(grad, &bl.w_fc, &bl.b_fc);
                linear_backward(&tape.z, &du, total, d, f, &p[bl.w_fc.clone()], dw, db)
            };
            let dmid = {
                let (dgain, dbias) = split_two(grad, &bl.ln2_g, &bl.ln2_b);
                layer_norm_backward(&dz, &tape.ln2, total, d, &p[bl.ln2_g.clone()], dgain, dbias)
            };
            dh.iter_mut().zip(&dmid).for_each(|(a, b)| *a += b);

            // attention branch
            let datt = {
                let (dw, db) = split_two(grad, &bl.w_o, &bl.b_o);
                linear_backward(&tape.att, &dh, total, d, d, &p[bl.w_o.clone()], dw, db)
            };
            let mut dqkv = vec![0.0; total * 3 * d];
            for ((seq, &s), probs) in batch.iter().zip(&starts).zip(&tape.probs) {
                let n = seq.tokens.len();
                let g = causal_attention_backward(
                    &datt[s * d..(s + n) * d],
                    &tape.qkv[s * 3 * d..(s + n) * 3 * d],
                    probs,
                    n,
                    d,
                    heads,
                );
                dqkv[s * 3 * d..(s + n) * 3 * d].copy_from_slice(&g);
            }
            let da = {
                let (dw, db) = split_two(grad, &bl.w_qkv, &bl.b_qkv);
                linear_backward(&tape.a, &dqkv, total, d, 3 * d, &p[bl.w_qkv.clone()], dw, db)
            };
            let dres = {
                let (dgain, dbias) = split_two(grad, &bl.ln1_g, &bl.ln1_b);
                layer_norm_backward(&da, &tape.ln1, total, d, &p[bl.ln1_g.clone()], dgain, dbias)
            };
            dh.iter_mut().zip(&dres).for_each(|(a, b)| *a += b);
        }

        for (seq, &s) in batch.iter().zip(&starts) {
            for (j, &t) in seq.tokens.iter().enumerate() {
                let row = &dh[(s + j) * d..(s + j + 1) * d];
                let te = lay.tok_emb.start + t * d;
                let pe = lay.pos_emb.start + (seq.offset + j) * d;
                let keep = !seq.masked.contains(&j);
                for k in 0..d {
                    if keep {
                        grad[te + k] += row[k];
                    }
                    grad[pe + k] += row[k];
                }
            }
        }
        Ok(loss)
    }
}

/// Two disjoint mutable views into the gradient buffer. `a` must precede `b`.
fn split_two<'g>(
    grad: &'g mut [f64],
    a: &std::ops::Range<usize>,
    b: &std::ops::Range<usize>,
) -> (&'g mut [f64], &'g mut [f64]) {
    debug_assert!(a.end <= b.start);
    let (lo, hi) = grad.split_at_mut(b.start);
    (&mut lo[a.clone()], &mut hi[..b.len()])
}
