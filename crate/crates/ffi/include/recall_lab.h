/* SPDX-License-Identifier: MIT OR Apache-2.0 */

#ifndef RECALL_LAB_H
#define RECALL_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum RlStatus {
  RL_STATUS_OK = 0,
  RL_STATUS_NULL_POINTER = 1,
  RL_STATUS_INVALID_ARGUMENT = 2,
  RL_STATUS_OUT_OF_RANGE = 3,
  RL_STATUS_INVALID_PLAN = 4,
  RL_STATUS_BUFFER_TOO_SMALL = 5,
  RL_STATUS_IO = 6,
  RL_STATUS_CORRUPT = 7,
  RL_STATUS_NUMERICAL = 8,
  RL_STATUS_PANIC = 9,
} RlStatus;

typedef enum RlTemplate {
  RL_TEMPLATE_DECL1 = 0,
  RL_TEMPLATE_DECL2 = 1,
  RL_TEMPLATE_QA = 2,
} RlTemplate;

typedef enum RlAblation {
  RL_ABLATION_SUBJECT = 0,
  RL_ABLATION_RELATION = 1,
  RL_ABLATION_OBJECT = 2,
} RlAblation;

// Trained or freshly initialised model.
typedef struct RlModel RlModel;

// Ordered set of activation replacements.
typedef struct RlPatchPlan RlPatchPlan;

// Synthetic knowledge world.
typedef struct RlWorld RlWorld;

typedef struct RlModelInfo {
  // Residual layers including the embedding layer.
  uintptr_t layers;
  uintptr_t d_model;
  uintptr_t heads;
  uintptr_t d_ff;
  uintptr_t vocab_size;
  uintptr_t max_seq_len;
} RlModelInfo;

typedef struct RlNoise {
  // Noise standard deviation in units of the embedding standard deviation.
  double scale;
  uintptr_t samples;
  uint64_t seed;
} RlNoise;

typedef struct RlGridInfo {
  uintptr_t layers;
  uintptr_t positions;
  double clean_p;
  double corrupted_p;
  uintptr_t forward_passes;
} RlGridInfo;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Library version as a static NUL-terminated string.
const char *rl_version(void);

// Copy the calling thread's last error message into `buf` (NUL-terminated,
// truncated to `cap`). Returns the full message length without the NUL.
//
// # Safety
// `buf` must be null or valid for `cap` bytes.
uintptr_t rl_last_error(char *buf, uintptr_t cap);

// Load a checkpoint file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum RlStatus rl_model_load(const char *path, struct RlModel **out);

// Randomly initialise a model.
//
// # Safety
// `info` must point to a readable struct; `out` must be writable.
enum RlStatus rl_model_init(const struct RlModelInfo *info, uint64_t seed, struct RlModel **out);

// # Safety
// `model` must be null or a handle from `rl_model_load`/`rl_model_init`
// not yet freed.
void rl_model_free(struct RlModel *model);

// # Safety
// `model` must be a live handle; `out` must be writable.
enum RlStatus rl_model_info(const struct RlModel *model, struct RlModelInfo *out);

struct RlPatchPlan *rl_plan_new(void);

// # Safety
// `plan` must be null or a handle from `rl_plan_new` not yet freed.
void rl_plan_free(struct RlPatchPlan *plan);

// Append `do(h[layer][position] = vector)`. Shape checks happen when the
// plan is used.
//
// # Safety
// `plan` must be a live handle; `vector` must hold `len` doubles.
enum RlStatus rl_plan_push(struct RlPatchPlan *plan,
                           uintptr_t layer,
                           uintptr_t position,
                           const double *vector,
                           uintptr_t len);

// Number of directives in the plan, 0 for null.
//
// # Safety
// `plan` must be null or a live handle.
uintptr_t rl_plan_len(const struct RlPatchPlan *plan);

// Forward `tokens` under `plan` (null for a clean run). Writes the
// next-token distribution at the last position into `probs`
// (`vocab_size` values) and, when `cache` is non-null, every residual
// activation in layer-major order (`layers * n * d_model` values).
//
// # Safety
// Pointers must be null where allowed or valid for their stated lengths.
enum RlStatus rl_forward(const struct RlModel *model,
                         const uintptr_t *tokens,
                         uintptr_t n,
                         const struct RlPatchPlan *plan,
                         double *probs,
                         uintptr_t probs_len,
                         double *cache,
                         uintptr_t cache_len);

// Load a world JSON file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum RlStatus rl_world_load(const char *path, struct RlWorld **out);

// # Safety
// `world` must be null or a handle from `rl_world_load` not yet freed.
void rl_world_free(struct RlWorld *world);

// Number of triples in the world, 0 for null.
//
// # Safety
// `world` must be null or a live handle.
uintptr_t rl_world_triple_count(const struct RlWorld *world);

// Render triple `index` as a query under `template`, writing its token ids
// to `tokens` and the count to `n`.
//
// # Safety
// `tokens` must be valid for `cap` values; `n` must be writable.
enum RlStatus rl_world_query(const struct RlWorld *world,
                             uintptr_t index,
                             enum RlTemplate template_,
                             uintptr_t *tokens,
                             uintptr_t cap,
                             uintptr_t *n);

// Score grid of triple `index` under `template` for one ablation kind.
// Writes `layers * positions` scores (layer-major) into `scores` and the
// grid's shape and reference probabilities into `info`. A null `noise`
// selects the defaults.
//
// # Safety
// Pointers must be live handles or valid for their stated lengths.
enum RlStatus rl_score_grid(const struct RlModel *model,
                            const struct RlWorld *world,
                            uintptr_t index,
                            enum RlTemplate template_,
                            enum RlAblation kind,
                            const struct RlNoise *noise,
                            double *scores,
                            uintptr_t scores_len,
                            struct RlGridInfo *info);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RECALL_LAB_H */
