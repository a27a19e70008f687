// SPDX-License-Identifier: MIT OR Apache-2.0

use std::ffi::{c_char, CString};
use std::ptr;

use recall_lab::corpus::{generate_world, WorldConfig};
use recall_lab::model::{Model, ModelCheckpoint, ModelConfig, PatchPlan, TrainingMeta};
use recall_lab_ffi::*;

fn info() -> RlModelInfo {
    RlModelInfo { layers: 4, d_model: 16, heads: 2, d_ff: 32, vocab_size: 11, max_seq_len: 12 }
}

fn init() -> *mut RlModel {
    let mut m = ptr::null_mut();
    assert_eq!(unsafe { rl_model_init(&info(), 7, &mut m) }, RlStatus::Ok);
    m
}

fn last_error() -> String {
    let mut buf = vec![0 as c_char; 256];
    let n = unsafe { rl_last_error(buf.as_mut_ptr(), buf.len()) };
    let bytes: Vec<u8> = buf[..n.min(255)].iter().map(|&c| c as u8).collect();
    String::from_utf8(bytes).unwrap()
}

#[test]
fn forward_matches_rust_engine() {
    let m = init();
    let tokens = [1usize, 4, 2, 9];
    let mut probs = vec![0.0; 11];
    let st = unsafe { rl_forward(m, tokens.as_ptr(), 4, ptr::null(), probs.as_mut_ptr(), 11, ptr::null_mut(), 0) };
    assert_eq!(st, RlStatus::Ok);
    let config = ModelConfig { layers: 4, d_model: 16, heads: 2, d_ff: 32, vocab_size: 11, max_seq_len: 12, ..Default::default() };
    let rust = Model::init(config, 7).unwrap().probe(&tokens, &PatchPlan::new()).unwrap();
    assert_eq!(probs, rust.probs);
    assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    unsafe { rl_model_free(m) };
}

#[test]
fn self_patch_is_a_no_op_through_the_c_abi() {
    let m = init();
    let tokens = [3usize, 5, 8];
    let (l, n, d) = (4, 3, 16);
    let mut clean = vec![0.0; 11];
    let mut cache = vec![0.0; l * n * d];
    let st = unsafe { rl_forward(m, tokens.as_ptr(), n, ptr::null(), clean.as_mut_ptr(), 11, cache.as_mut_ptr(), cache.len()) };
    assert_eq!(st, RlStatus::Ok);
    let plan = rl_plan_new();
    for layer in 0..l {
        for pos in 0..n {
            let v = &cache[(layer * n + pos) * d..(layer * n + pos + 1) * d];
            assert_eq!(unsafe { rl_plan_push(plan, layer, pos, v.as_ptr(), d) }, RlStatus::Ok);
        }
    }
    assert_eq!(unsafe { rl_plan_len(plan) }, l * n);
    let mut patched = vec![0.0; 11];
    let st = unsafe { rl_forward(m, tokens.as_ptr(), n, plan, patched.as_mut_ptr(), 11, ptr::null_mut(), 0) };
    assert_eq!(st, RlStatus::Ok);
    let diff = clean.iter().zip(&patched).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(diff <= 1e-9, "{diff}");
    unsafe {
        rl_plan_free(plan);
        rl_model_free(m);
    }
}

#[test]
fn errors_map_to_status_codes() {
    let m = init();
    let mut probs = vec![0.0; 11];
    let bad = [1usize, 99];
    let st = unsafe { rl_forward(m, bad.as_ptr(), 2, ptr::null(), probs.as_mut_ptr(), 11, ptr::null_mut(), 0) };
    assert_eq!(st, RlStatus::OutOfRange);
    assert!(last_error().contains("99"));

    let ok = [1usize, 2];
    let st = unsafe { rl_forward(m, ok.as_ptr(), 2, ptr::null(), probs.as_mut_ptr(), 5, ptr::null_mut(), 0) };
    assert_eq!(st, RlStatus::BufferTooSmall);

    let plan = rl_plan_new();
    let v = [0.0; 3];
    assert_eq!(unsafe { rl_plan_push(plan, 0, 0, v.as_ptr(), 3) }, RlStatus::Ok);
    let st = unsafe { rl_forward(m, ok.as_ptr(), 2, plan, probs.as_mut_ptr(), 11, ptr::null_mut(), 0) };
    assert_eq!(st, RlStatus::InvalidPlan);

    assert_eq!(unsafe { rl_forward(ptr::null(), ok.as_ptr(), 2, ptr::null(), probs.as_mut_ptr(), 11, ptr::null_mut(), 0) }, RlStatus::NullPointer);
    let missing = CString::new("/nonexistent/checkpoint.bin").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { rl_model_load(missing.as_ptr(), &mut out) }, RlStatus::Io);
    assert!(out.is_null());
    unsafe {
        rl_plan_free(plan);
        rl_model_free(m);
        rl_model_free(ptr::null_mut());
    }
}

#[test]
fn score_grid_over_loaded_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let world = generate_world(&WorldConfig { subjects: 5, relations: 2, triples: 6, objects_per_relation: 3, ..Default::default() }, 2).unwrap();
    let wp = dir.path().join("world.json");
    std::fs::write(&wp, world.to_json().unwrap()).unwrap();
    let config = ModelConfig { layers: 4, d_model: 16, heads: 2, d_ff: 32, vocab_size: world.vocabulary.len(), max_seq_len: 24, ..Default::default() };
    let model = Model::init(config, 3).unwrap();
    let cp = dir.path().join("checkpoint.bin");
    let meta = TrainingMeta { steps: 0, initial_loss: 0.0, final_loss: 0.0, world_seed: 2, train_seed: 0 };
    ModelCheckpoint::new(model, meta).save(&cp).unwrap();

    let (mut m, mut w) = (ptr::null_mut(), ptr::null_mut());
    let cps = CString::new(cp.to_str().unwrap()).unwrap();
    let wps = CString::new(wp.to_str().unwrap()).unwrap();
    unsafe {
        assert_eq!(rl_model_load(cps.as_ptr(), &mut m), RlStatus::Ok);
        assert_eq!(rl_world_load(wps.as_ptr(), &mut w), RlStatus::Ok);
        assert_eq!(rl_world_triple_count(w), 6);
        let mut toks = vec![0usize; 24];
        let mut n = 0;
        assert_eq!(rl_world_query(w, 0, RlTemplate::Decl1, toks.as_mut_ptr(), toks.len(), &mut n), RlStatus::Ok);
        let mut gi = RlGridInfo::default();
        let mut scores = vec![0.0; 4 * n];
        let noise = RlNoise { scale: 5.0, samples: 1, seed: 0 };
        let st = rl_score_grid(m, w, 0, RlTemplate::Decl1, RlAblation::Subject, &noise, scores.as_mut_ptr(), scores.len(), &mut gi);
        assert_eq!(st, RlStatus::Ok, "{}", last_error());
        assert_eq!((gi.layers, gi.positions), (4, n));
        assert_eq!(gi.forward_passes, 2 + 4 * n);
        assert_eq!(rl_world_query(w, 99, RlTemplate::Qa, toks.as_mut_ptr(), toks.len(), &mut n), RlStatus::OutOfRange);
        rl_world_free(w);
        rl_model_free(m);
    }
}

#[test]
fn header_declares_the_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/recall_lab.h")).unwrap();
    for name in [
        "rl_version",
        "rl_last_error",
        "rl_model_load",
        "rl_model_init",
        "rl_model_free",
        "rl_forward",
        "rl_plan_new",
        "rl_plan_push",
        "rl_score_grid",
        "typedef struct RlModel RlModel",
        "RL_STATUS_OK",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn version_is_nul_terminated() {
    let v = unsafe { std::ffi::CStr::from_ptr(rl_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}
