// SPDX-License-Identifier: MIT OR Apache-2.0

//! Independent reference forward pass and finite-difference gradients.

mod common;

use common::oracle::{hand_weighted, naive_forward};
use recall_lab::model::backprop::TrainSequence;
use recall_lab::model::{Model, ModelConfig, PatchPlan};
use recall_lab::trainer::{gradient_check, GradCheckConfig, ModelObjective};

#[test]
fn one_block_forward_matches_naive_oracle() {
    let config = ModelConfig { layers: 2, d_model: 8, heads: 2, d_ff: 16, vocab_size: 13, max_seq_len: 10, ln_eps: 1e-5 };
    let model = hand_weighted(config);
    for tokens in [vec![3usize], vec![1, 7, 12, 0, 5], vec![4, 4, 9, 2, 11, 6, 8, 1, 10, 3]] {
        let out = model.forward(&tokens, &PatchPlan::new()).unwrap();
        let (h, probs) = naive_forward(&model, &tokens);
        for (a, b) in out.dist.probs.iter().zip(&probs) {
            assert!((a - b).abs() <= 1e-10, "prob {a} vs {b}");
        }
        for (l, layer) in h.iter().enumerate() {
            for (j, row) in layer.iter().enumerate() {
                for (a, b) in out.cache.read(l, j).unwrap().iter().zip(row) {
                    assert!((a - b).abs() <= 1e-10, "h[{l}][{j}] {a} vs {b}");
                }
            }
        }
    }
}

#[test]
fn deeper_model_matches_naive_oracle() {
    let config = ModelConfig { layers: 4, d_model: 12, heads: 3, d_ff: 20, vocab_size: 9, max_seq_len: 8, ln_eps: 1e-5 };
    let model = Model::init(config, 5).unwrap();
    let tokens = [2usize, 8, 0, 5, 5, 1];
    let out = model.forward(&tokens, &PatchPlan::new()).unwrap();
    let (_, probs) = naive_forward(&model, &tokens);
    let diff = out.dist.probs.iter().zip(&probs).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-10, "{diff}");
}

#[test]
fn gradient_check_at_width_16() {
    let config = ModelConfig { layers: 3, d_model: 16, heads: 2, d_ff: 32, vocab_size: 11, max_seq_len: 8, ln_eps: 1e-5 };
    let model = hand_weighted(config);
    let batch = vec![
        TrainSequence { tokens: vec![1, 2, 3, 4], offset: 0, targets: vec![(3, 5), (1, 7)], masked: vec![] },
        TrainSequence { tokens: vec![9, 0, 6], offset: 0, targets: vec![(2, 10)], masked: vec![1] },
    ];
    let mut obj = ModelObjective { model, batch: &batch };
    let report = gradient_check(&mut obj, &GradCheckConfig { samples_per_group: 6, ..Default::default() }).unwrap();
    assert!(report.passes(1e-4), "max relative error {}", report.max_rel_error);
}
