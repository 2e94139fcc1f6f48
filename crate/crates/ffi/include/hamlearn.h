#ifndef HAMLEARN_H
#define HAMLEARN_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. Zero is success.
 */
typedef enum HlStatus {
  HL_STATUS_OK = 0,
  HL_STATUS_NULL_POINTER = 1,
  HL_STATUS_INVALID_ARGUMENT = 2,
  HL_STATUS_BUFFER_TOO_SMALL = 3,
  HL_STATUS_IO = 4,
  HL_STATUS_CORRUPT = 5,
  HL_STATUS_SCHEMA_VERSION = 6,
  HL_STATUS_NUMERICAL = 7,
  HL_STATUS_PANIC = 8,
} HlStatus;

/**
 * Opaque trained model.
 */
typedef struct HlModel HlModel;

/**
 * Result of a Choi-matrix test.
 */
typedef struct HlCptpReport {
  bool is_cptp;
  double min_choi_eig;
  double trace_dev;
} HlCptpReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Load a model file. On success `*out` receives a handle to free with
 * `hl_model_free`.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HlStatus hl_model_load(const char *path, struct HlModel **out);

/**
 * Parse a model from JSON text.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a writable pointer.
 */
enum HlStatus hl_model_load_json(const char *json, struct HlModel **out);

/**
 * Release a handle. NULL is ignored.
 *
 * # Safety
 * `model` must be NULL or a handle not yet freed.
 */
void hl_model_free(struct HlModel *model);

/**
 * Number of series dimensions of the model (0 for a NULL handle).
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t hl_model_num_dims(const struct HlModel *model);

/**
 * Number of symbols of dimension `d` (0 when out of range).
 *
 * # Safety
 * `model` must be NULL or a live handle.
 */
size_t hl_model_num_symbols(const struct HlModel *model, size_t d);

/**
 * Distribution over symbols of dimension `d` after evolving symbol `i` for
 * time `t`. `out` must hold at least `hl_model_num_symbols(model, d)` values.
 *
 * # Safety
 * `model` must be a live handle; `out` must point to `out_len` writable doubles.
 */
enum HlStatus hl_forward_prob(const struct HlModel *model,
                              size_t d,
                              size_t i,
                              double t,
                              double *out,
                              size_t out_len);

/**
 * Sample one trajectory of `horizon` steps. Symbols are written time-major:
 * `out[(t − 1)·dims + d]` for `t = 1..=horizon`. `mode` is 0 for from-origin
 * sampling and 1 for chained sampling. The draw is determined by
 * `(seed, stream)`.
 *
 * # Safety
 * `model` must be a live handle; `out` must point to `out_len` writable values.
 */
enum HlStatus hl_generate(const struct HlModel *model,
                          size_t horizon,
                          uint32_t mode,
                          uint64_t seed,
                          uint64_t stream,
                          uint32_t *out,
                          size_t out_len);

/**
 * CPTP test of the map the model induces on dimension `keep` at lag `k`.
 *
 * # Safety
 * `model` must be a live handle and `out` writable.
 */
enum HlStatus hl_check_cptp(const struct HlModel *model,
                            size_t keep,
                            size_t k,
                            struct HlCptpReport *out);

/**
 * Message for the last failed call on this thread, or NULL. Valid until the
 * next call into this library from the same thread.
 */
const char *hl_last_error_message(void);

/**
 * Library version, static storage.
 */
const char *hl_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* HAMLEARN_H */
