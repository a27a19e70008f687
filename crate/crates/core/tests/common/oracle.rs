// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent reference forward pass over named parameter blocks.

use recall_lab::model::{Model, ModelConfig};

struct Naive<'a> {
    params: &'a [f64],
    specs: Vec<(String, usize, Vec<usize>)>,
}

impl<'a> Naive<'a> {
    fn new(model: &'a Model) -> Self {
        let specs = model.layout().specs.iter().map(|s| (s.name.clone(), s.offset, s.shape.clone())).collect();
        Self { params: model.params(), specs }
    }

    fn t(&self, name: &str) -> &[f64] {
        let (_, off, shape) = self.specs.iter().find(|s| s.0 == name).unwrap_or_else(|| panic!("{name}"));
        &self.params[*off..off + shape.iter().product::<usize>()]
    }

    /// `x [d_in] * W [d_in, d_out] + b`.
    fn affine(&self, x: &[f64], w: &str, b: Option<&str>, d_out: usize) -> Vec<f64> {
        let w = self.t(w);
        (0..d_out)
            .map(|o| {
                let mut s = b.map_or(0.0, |b| self.t(b)[o]);
                for (i, xi) in x.iter().enumerate() {
                    s += xi * w[i * d_out + o];
                }
                s
            })
            .collect()
    }

    fn norm(&self, x: &[f64], g: &str, b: &str, eps: f64) -> Vec<f64> {
        let n = x.len() as f64;
        let mu = x.iter().sum::<f64>() / n;
        let var = x.iter().map(|v| (v - mu).powi(2)).sum::<f64>() / n;
        let (g, b) = (self.t(g), self.t(b));
        x.iter().enumerate().map(|(i, v)| (v - mu) / (var + eps).sqrt() * g[i] + b[i]).collect()
    }
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh())
}

/// Residual stream `h[layer][position]` and the final next-token distribution.
pub fn naive_forward(model: &Model, tokens: &[usize]) -> (Vec<Vec<Vec<f64>>>, Vec<f64>) {
    let c = model.config().clone();
    let nv = Naive::new(model);
    let (d, heads) = (c.d_model, c.heads);
    let dh = d / heads;
    let n = tokens.len();
    let tok = nv.t("tok_emb");
    let pos = nv.t("pos_emb");
    let mut h: Vec<Vec<f64>> =
        (0..n).map(|j| (0..d).map(|i| tok[tokens[j] * d + i] + pos[j * d + i]).collect()).collect();
    let mut layers = vec![h.clone()];
    for b in 0..c.layers - 1 {
        let p = |s: &str| format!("blocks.{b}.{s}");
        let qkv: Vec<Vec<f64>> = h
            .iter()
            .map(|x| nv.affine(&nv.norm(x, &p("ln1.g"), &p("ln1.b"), c.ln_eps), &p("attn.w_qkv"), Some(&p("attn.b_qkv")), 3 * d))
            .collect();
        let mut att = vec![vec![0.0; d]; n];
        for hd in 0..heads {
            for i in 0..n {
                let score = |j: usize| {
                    (0..dh).map(|k| qkv[i][hd * dh + k] * qkv[j][d + hd * dh + k]).sum::<f64>() / (dh as f64).sqrt()
                };
                let s: Vec<f64> = (0..=i).map(score).collect();
                let m = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let z: f64 = s.iter().map(|v| (v - m).exp()).sum();
                for j in 0..=i {
                    let w = (s[j] - m).exp() / z;
                    for k in 0..dh {
                        att[i][hd * dh + k] += w * qkv[j][2 * d + hd * dh + k];
                    }
                }
            }
        }
        for i in 0..n {
            let o = nv.affine(&att[i], &p("attn.w_o"), Some(&p("attn.b_o")), d);
            h[i].iter_mut().zip(&o).for_each(|(a, b)| *a += b);
            let z = nv.norm(&h[i], &p("ln2.g"), &p("ln2.b"), c.ln_eps);
            let u: Vec<f64> = nv.affine(&z, &p("mlp.w_fc"), Some(&p("mlp.b_fc")), c.d_ff).into_iter().map(gelu).collect();
            let m = nv.affine(&u, &p("mlp.w_proj"), Some(&p("mlp.b_proj")), d);
            h[i].iter_mut().zip(&m).for_each(|(a, b)| *a += b);
        }
        layers.push(h.clone());
    }
    let z = nv.norm(&h[n - 1], "ln_f.g", "ln_f.b", c.ln_eps);
    let logits = nv.affine(&z, "head", None, c.vocab_size);
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let s: f64 = e.iter().sum();
    (layers, e.into_iter().map(|x| x / s).collect())
}

/// Deterministic hand-set weights: every parameter is a fixed trigonometric
/// function of its index, with norm gains near one.
pub fn hand_weighted(config: ModelConfig) -> Model {
    let probe = Model::init(config.clone(), 0).unwrap();
    let mut params: Vec<f64> = (0..probe.params().len()).map(|i| 0.3 * ((i as f64) * 0.7311).sin()).collect();
    for s in &probe.layout().specs {
        if s.name.ends_with(".g") {
            for (k, x) in params[s.range()].iter_mut().enumerate() {
                *x = 1.0 + 0.1 * ((k as f64) * 1.3).cos();
            }
        }
    }
    Model::from_params(config, params).unwrap()
}
