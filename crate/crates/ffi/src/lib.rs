// SPDX-License-Identifier: MIT OR Apache-2.0

//! C ABI over the model, patch engine and score grids.
//!
//! Objects cross the boundary as opaque handles created by `*_load`,
//! `*_init` or `*_new` and released by the matching `*_free`. Every fallible
//! call returns an [`RlStatus`]; the message of the most recent failure on
//! the calling thread is available from [`rl_last_error`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use recall_lab::corpus::{KnowledgeWorld, Renderer, TemplateId};
use recall_lab::model::{Model, ModelCheckpoint, ModelConfig, PatchPlan};
use recall_lab::scoring::{score_grid, AblationKind, NoiseConfig};
use recall_lab::LabError;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    OutOfRange = 3,
    InvalidPlan = 4,
    BufferTooSmall = 5,
    Io = 6,
    Corrupt = 7,
    Numerical = 8,
    Panic = 9,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlTemplate {
    Decl1 = 0,
    Decl2 = 1,
    Qa = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RlAblation {
    Subject = 0,
    Relation = 1,
    Object = 2,
}

/// Trained or freshly initialised model.
pub struct RlModel {
    inner: Model,
}

/// Synthetic knowledge world.
pub struct RlWorld {
    inner: KnowledgeWorld,
}

/// Ordered set of activation replacements.
pub struct RlPatchPlan {
    inner: PatchPlan,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RlModelInfo {
    /// Residual layers including the embedding layer.
    pub layers: usize,
    pub d_model: usize,
    pub heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RlNoise {
    /// Noise standard deviation in units of the embedding standard deviation.
    pub scale: f64,
    pub samples: usize,
    pub seed: u64,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct RlGridInfo {
    pub layers: usize,
    pub positions: usize,
    pub clean_p: f64,
    pub corrupted_p: f64,
    pub forward_passes: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &LabError) -> RlStatus {
    match e {
        LabError::TokenOutOfRange { .. } | LabError::IndexOutOfRange(_) | LabError::LayerOutsideBand { .. } => {
            RlStatus::OutOfRange
        }
        LabError::InvalidPlan(_) => RlStatus::InvalidPlan,
        LabError::Io(_) => RlStatus::Io,
        LabError::Corrupt { .. } | LabError::Json(_) | LabError::Csv(_) => RlStatus::Corrupt,
        LabError::Diverged { .. } => RlStatus::Numerical,
        _ => RlStatus::InvalidArgument,
    }
}

/// Run `f`, recording failures and converting panics.
fn guard<F: FnOnce() -> Result<(), (RlStatus, String)>>(f: F) -> RlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => RlStatus::Ok,
        Ok(Err((status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("panic inside recall-lab");
            RlStatus::Panic
        }
    }
}

fn lab<T>(r: recall_lab::Result<T>) -> Result<T, (RlStatus, String)> {
    r.map_err(|e| (status_of(&e), e.to_string()))
}

fn null(what: &str) -> (RlStatus, String) {
    (RlStatus::NullPointer, format!("{what} is null"))
}

unsafe fn path_arg<'a>(path: *const c_char) -> Result<&'a Path, (RlStatus, String)> {
    if path.is_null() {
        return Err(null("path"));
    }
    let s = CStr::from_ptr(path).to_str().map_err(|_| (RlStatus::InvalidArgument, "path is not UTF-8".into()))?;
    Ok(Path::new(s))
}

unsafe fn slice_arg<'a, T>(ptr: *const T, len: usize, what: &str) -> Result<&'a [T], (RlStatus, String)> {
    if len == 0 {
        return Ok(&[]);
    }
    if ptr.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(ptr, len))
}

unsafe fn out_slice<'a, T>(ptr: *mut T, len: usize, need: usize, what: &str) -> Result<&'a mut [T], (RlStatus, String)> {
    if ptr.is_null() {
        return Err(null(what));
    }
    if len < need {
        return Err((RlStatus::BufferTooSmall, format!("{what} holds {len} values, {need} needed")));
    }
    Ok(std::slice::from_raw_parts_mut(ptr, need))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `cap`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `cap` bytes.
#[no_mangle]
pub unsafe extern "C" fn rl_last_error(buf: *mut c_char, cap: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && cap > 0 {
            let n = msg.len().min(cap - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Load a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_model_load(path: *const c_char, out: *mut *mut RlModel) -> RlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let ck = lab(ModelCheckpoint::load(path_arg(path)?))?;
        *out = Box::into_raw(Box::new(RlModel { inner: ck.model }));
        Ok(())
    })
}

/// Randomly initialise a model.
///
/// # Safety
/// `info` must point to a readable struct; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_model_init(info: *const RlModelInfo, seed: u64, out: *mut *mut RlModel) -> RlStatus {
    guard(|| {
        if info.is_null() {
            return Err(null("info"));
        }
        if out.is_null() {
            return Err(null("out"));
        }
        let i = &*info;
        let config = ModelConfig {
            layers: i.layers,
            d_model: i.d_model,
            heads: i.heads,
            d_ff: i.d_ff,
            vocab_size: i.vocab_size,
            max_seq_len: i.max_seq_len,
            ..ModelConfig::default()
        };
        let model = lab(Model::init(config, seed))?;
        *out = Box::into_raw(Box::new(RlModel { inner: model }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from `rl_model_load`/`rl_model_init`
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_model_free(model: *mut RlModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_model_info(model: *const RlModel, out: *mut RlModelInfo) -> RlStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let c = m.inner.config();
        *out = RlModelInfo {
            layers: c.layers,
            d_model: c.d_model,
            heads: c.heads,
            d_ff: c.d_ff,
            vocab_size: c.vocab_size,
            max_seq_len: c.max_seq_len,
        };
        Ok(())
    })
}

#[no_mangle]
pub extern "C" fn rl_plan_new() -> *mut RlPatchPlan {
    Box::into_raw(Box::new(RlPatchPlan { inner: PatchPlan::new() }))
}

/// # Safety
/// `plan` must be null or a handle from `rl_plan_new` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_plan_free(plan: *mut RlPatchPlan) {
    if !plan.is_null() {
        drop(Box::from_raw(plan));
    }
}

/// Append `do(h[layer][position] = vector)`. Shape checks happen when the
/// plan is used.
///
/// # Safety
/// `plan` must be a live handle; `vector` must hold `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn rl_plan_push(
    plan: *mut RlPatchPlan,
    layer: usize,
    position: usize,
    vector: *const f64,
    len: usize,
) -> RlStatus {
    guard(|| {
        let p = plan.as_mut().ok_or_else(|| null("plan"))?;
        let v = slice_arg(vector, len, "vector")?;
        p.inner.push(layer, position, v.to_vec());
        Ok(())
    })
}

/// Number of directives in the plan, 0 for null.
///
/// # Safety
/// `plan` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rl_plan_len(plan: *const RlPatchPlan) -> usize {
    plan.as_ref().map_or(0, |p| p.inner.directives.len())
}

/// Forward `tokens` under `plan` (null for a clean run). Writes the
/// next-token distribution at the last position into `probs`
/// (`vocab_size` values) and, when `cache` is non-null, every residual
/// activation in layer-major order (`layers * n * d_model` values).
///
/// # Safety
/// Pointers must be null where allowed or valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rl_forward(
    model: *const RlModel,
    tokens: *const usize,
    n: usize,
    plan: *const RlPatchPlan,
    probs: *mut f64,
    probs_len: usize,
    cache: *mut f64,
    cache_len: usize,
) -> RlStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let toks = slice_arg(tokens, n, "tokens")?;
        let empty = PatchPlan::new();
        let plan = plan.as_ref().map_or(&empty, |p| &p.inner);
        let c = m.config();
        let probs = out_slice(probs, probs_len, c.vocab_size, "probs")?;
        if cache.is_null() {
            let dist = lab(m.probe(toks, plan))?;
            probs.copy_from_slice(&dist.probs);
        } else {
            let need = c.layers * n * c.d_model;
            let cache = out_slice(cache, cache_len, need, "cache")?;
            let out = lab(m.forward(toks, plan))?;
            probs.copy_from_slice(&out.dist.probs);
            for l in 0..c.layers {
                let layer = lab(out.cache.layer(l))?;
                cache[l * n * c.d_model..(l + 1) * n * c.d_model].copy_from_slice(layer);
            }
        }
        Ok(())
    })
}

/// Load a world JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_world_load(path: *const c_char, out: *mut *mut RlWorld) -> RlStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let text = lab(std::fs::read_to_string(path_arg(path)?).map_err(LabError::from))?;
        let w = lab(KnowledgeWorld::from_json(&text))?;
        *out = Box::into_raw(Box::new(RlWorld { inner: w }));
        Ok(())
    })
}

/// # Safety
/// `world` must be null or a handle from `rl_world_load` not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rl_world_free(world: *mut RlWorld) {
    if !world.is_null() {
        drop(Box::from_raw(world));
    }
}

/// Number of triples in the world, 0 for null.
///
/// # Safety
/// `world` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn rl_world_triple_count(world: *const RlWorld) -> usize {
    world.as_ref().map_or(0, |w| w.inner.triples.len())
}

/// Render triple `index` as a query under `template`, writing its token ids
/// to `tokens` and the count to `n`.
///
/// # Safety
/// `tokens` must be valid for `cap` values; `n` must be writable.
#[no_mangle]
pub unsafe extern "C" fn rl_world_query(
    world: *const RlWorld,
    index: usize,
    template: RlTemplate,
    tokens: *mut usize,
    cap: usize,
    n: *mut usize,
) -> RlStatus {
    guard(|| {
        let w = &world.as_ref().ok_or_else(|| null("world"))?.inner;
        if n.is_null() {
            return Err(null("n"));
        }
        let t = w
            .triples
            .get(index)
            .ok_or_else(|| (RlStatus::OutOfRange, format!("triple {index} of {}", w.triples.len())))?;
        let p = lab(Renderer::new(&w.vocabulary).query(t, w.template(template_id(template))))?;
        *n = p.tokens.len();
        out_slice(tokens, cap, p.tokens.len(), "tokens")?.copy_from_slice(&p.tokens);
        Ok(())
    })
}

fn template_id(t: RlTemplate) -> TemplateId {
    match t {
        RlTemplate::Decl1 => TemplateId::Decl1,
        RlTemplate::Decl2 => TemplateId::Decl2,
        RlTemplate::Qa => TemplateId::Qa,
    }
}

fn ablation_kind(k: RlAblation) -> AblationKind {
    match k {
        RlAblation::Subject => AblationKind::Subject,
        RlAblation::Relation => AblationKind::Relation,
        RlAblation::Object => AblationKind::Object,
    }
}

/// Score grid of triple `index` under `template` for one ablation kind.
/// Writes `layers * positions` scores (layer-major) into `scores` and the
/// grid's shape and reference probabilities into `info`. A null `noise`
/// selects the defaults.
///
/// # Safety
/// Pointers must be live handles or valid for their stated lengths.
#[no_mangle]
pub unsafe extern "C" fn rl_score_grid(
    model: *const RlModel,
    world: *const RlWorld,
    index: usize,
    template: RlTemplate,
    kind: RlAblation,
    noise: *const RlNoise,
    scores: *mut f64,
    scores_len: usize,
    info: *mut RlGridInfo,
) -> RlStatus {
    guard(|| {
        let m = &model.as_ref().ok_or_else(|| null("model"))?.inner;
        let w = &world.as_ref().ok_or_else(|| null("world"))?.inner;
        if info.is_null() {
            return Err(null("info"));
        }
        let noise = match noise.as_ref() {
            Some(n) => NoiseConfig { scale: n.scale, samples: n.samples, seed: n.seed },
            None => NoiseConfig::default(),
        };
        let t = w
            .triples
            .get(index)
            .ok_or_else(|| (RlStatus::OutOfRange, format!("triple {index} of {}", w.triples.len())))?;
        let prompt = lab(Renderer::new(&w.vocabulary).query(t, w.template(template_id(template))))?;
        let target = lab(w.vocabulary.id(&t.object))?;
        let grid = lab(score_grid(m, &prompt, target, ablation_kind(kind), &noise))?;
        out_slice(scores, scores_len, grid.scores.len(), "scores")?.copy_from_slice(&grid.scores);
        *info = RlGridInfo {
            layers: grid.layers,
            positions: grid.positions,
            clean_p: grid.clean_p,
            corrupted_p: grid.corrupted_p,
            forward_passes: grid.forward_passes,
        };
        Ok(())
    })
}
