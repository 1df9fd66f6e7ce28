#ifndef ATTACKNET_H
#define ATTACKNET_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AtnStatus {
  ATN_STATUS_OK = 0,
  ATN_STATUS_NULL_POINTER = 1,
  ATN_STATUS_INVALID_ARGUMENT = 2,
  ATN_STATUS_SHAPE = 3,
  ATN_STATUS_CONFIG = 4,
  ATN_STATUS_IO = 5,
  ATN_STATUS_DECODE = 6,
  ATN_STATUS_CHECKPOINT = 7,
  ATN_STATUS_DATASET = 8,
  ATN_STATUS_UNDEFINED = 9,
  ATN_STATUS_PANIC = 10,
} AtnStatus;

/**
 * Opaque model handle.
 */
typedef struct AtnModel AtnModel;

/**
 * Metrics derived from confusion counts; bonafide is the positive class.
 */
typedef struct AtnMetrics {
  float precision_bonafide;
  float recall_bonafide;
  float f1_bonafide;
  float precision_attack;
  float recall_attack;
  float f1_attack;
  float far;
  float frr;
  float hter;
} AtnMetrics;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Static name of a status code.
 */
const char *atn_status_name(enum AtnStatus status);

/**
 * Copies the calling thread's last error message into `buf` (NUL
 * terminated, truncated to `len`). Returns the full message length
 * excluding the terminator.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t atn_last_error_message(char *buf, size_t len);

/**
 * Builds a freshly initialized model. `config` is key=value text or null
 * for the defaults; `seed` drives the initialization.
 *
 * # Safety
 * `config` must be null or a NUL-terminated string; `out` must be valid
 * for writing a pointer.
 */
enum AtnStatus atn_model_new(const char *config, uint64_t seed, struct AtnModel **out);

/**
 * Loads a checkpoint file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be valid for writing.
 */
enum AtnStatus atn_model_load(const char *path, struct AtnModel **out);

/**
 * Writes a checkpoint file.
 *
 * # Safety
 * `model` must come from this library; `path` must be NUL-terminated.
 */
enum AtnStatus atn_model_save(const struct AtnModel *model, const char *path);

/**
 * Releases a model; null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void atn_model_free(struct AtnModel *model);

/**
 * Expected input image extents.
 *
 * # Safety
 * All pointers must be valid.
 */
enum AtnStatus atn_model_input_shape(const struct AtnModel *model,
                                     size_t *channels,
                                     size_t *height,
                                     size_t *width);

/**
 * Number of trainable scalars.
 *
 * # Safety
 * `model` and `out` must be valid.
 */
enum AtnStatus atn_model_param_count(const struct AtnModel *model, uint64_t *out);

/**
 * Forward-pass FLOPs of the convolution and dense layers.
 *
 * # Safety
 * `model` and `out` must be valid.
 */
enum AtnStatus atn_model_flop_count(const struct AtnModel *model, uint64_t *out);

/**
 * Inference-mode class probabilities. Writes `n_images × 2` floats
 * (bonafide, attack) to `probs`.
 *
 * # Safety
 * `pixels` must hold `n_images × 3 × H × W` floats and `probs` have room
 * for `n_images × 2`.
 */
enum AtnStatus atn_model_predict(const struct AtnModel *model,
                                 const float *pixels,
                                 size_t n_images,
                                 float *probs);

/**
 * Grad-CAM map of one image for `target` (0 bonafide, 1 attack),
 * upsampled to `H × W` and written to `map`.
 *
 * # Safety
 * `pixels` must hold `3 × H × W` floats and `map` have room for `H × W`.
 */
enum AtnStatus atn_model_gradcam(const struct AtnModel *model,
                                 const float *pixels,
                                 uint32_t target,
                                 float *map);

/**
 * Precision, recall, F1, FAR, FRR and HTER from confusion counts.
 * Fails with `UNDEFINED` when either actual class is empty.
 *
 * # Safety
 * `out` must be valid for writing.
 */
enum AtnStatus atn_metrics_from_counts(uint64_t tp,
                                       uint64_t fn_,
                                       uint64_t fp,
                                       uint64_t tn,
                                       struct AtnMetrics *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ATTACKNET_H */
