#ifndef SIAMESE_NAS_H
#define SIAMESE_NAS_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SnStatus {
  SN_STATUS_OK = 0,
  SN_STATUS_NULL_ARGUMENT = 1,
  SN_STATUS_INVALID_UTF8 = 2,
  SN_STATUS_IO = 3,
  SN_STATUS_PARSE = 4,
  SN_STATUS_VALIDATION = 5,
  SN_STATUS_CONTRACT = 6,
  SN_STATUS_MISSING_DATA = 7,
  SN_STATUS_TRAINING = 8,
  SN_STATUS_CONFIG = 9,
  SN_STATUS_CORRELATION = 10,
  SN_STATUS_OUT_OF_RANGE = 11,
  SN_STATUS_PANIC = 12,
} SnStatus;

/**
 * A trained predictor with its code normalizer.
 */
typedef struct SnPredictor SnPredictor;

/**
 * One dataset of a store, encoded for prediction.
 */
typedef struct SnSpace SnSpace;

/**
 * A loaded benchmark.
 */
typedef struct SnStore SnStore;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or NULL after a success.
 * Valid until the next call into this library from the same thread.
 */
const char *sn_last_error(void);

/**
 * Frees a string returned by this library. NULL is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void sn_string_free(char *s);

/**
 * Loads a JSONL benchmark.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum SnStatus sn_store_load(const char *path, struct SnStore **out);

/**
 * Generates a synthetic benchmark.
 *
 * # Safety
 * `out` must be writable.
 */
enum SnStatus sn_store_gen_synthetic(uint64_t seed,
                                     size_t size,
                                     size_t nodes,
                                     size_t vocab,
                                     struct SnStore **out);

/**
 * # Safety
 * `store` must be a live handle; `path` a NUL-terminated string.
 */
enum SnStatus sn_store_save(const struct SnStore *store, const char *path);

/**
 * Records with FLOPs strictly below `max_flops_m`, as a new store.
 *
 * # Safety
 * `store` must be a live handle; `out` must be writable.
 */
enum SnStatus sn_store_subset(const struct SnStore *store,
                              double max_flops_m,
                              struct SnStore **out);

/**
 * Record count; 0 for NULL.
 *
 * # Safety
 * `store` must be NULL or a live handle.
 */
size_t sn_store_len(const struct SnStore *store);

/**
 * # Safety
 * `store` must be NULL or a handle not yet freed.
 */
void sn_store_free(struct SnStore *store);

/**
 * Encodes one dataset of `store`. The space does not borrow the store.
 *
 * # Safety
 * `store` must be a live handle, `dataset` a NUL-terminated string and `out` writable.
 */
enum SnStatus sn_space_new(const struct SnStore *store, const char *dataset, struct SnSpace **out);

/**
 * # Safety
 * `space` must be NULL or a live handle.
 */
size_t sn_space_len(const struct SnSpace *space);

/**
 * Ground-truth accuracy of record `index`.
 *
 * # Safety
 * `space` must be a live handle; `out` writable.
 */
enum SnStatus sn_space_accuracy(const struct SnSpace *space, size_t index, double *out);

/**
 * # Safety
 * `space` must be NULL or a handle not yet freed.
 */
void sn_space_free(struct SnSpace *space);

/**
 * Runs the full search protocol. `config_json` uses the CLI's run-config keys
 * (`bench`, `dataset` and `out_dir` are ignored) and may be NULL for defaults.
 * The report is written to `*report_json`.
 *
 * # Safety
 * `space` must be a live handle, `config_json` NULL or NUL-terminated, `report_json` writable.
 */
enum SnStatus sn_search_run(const struct SnSpace *space,
                            const char *config_json,
                            size_t workers,
                            char **report_json);

/**
 * Trains one predictor with Batch Top Sampling and returns it.
 *
 * # Safety
 * `space` must be a live handle, `config_json` NULL or NUL-terminated, `out` writable.
 */
enum SnStatus sn_predictor_train(const struct SnSpace *space,
                                 const char *config_json,
                                 uint64_t seed,
                                 struct SnPredictor **out);

/**
 * Predicted accuracy of record `index`: basic branch when `use_code` is 0,
 * estimation branch (using the record's Estimation Code) otherwise.
 *
 * # Safety
 * `predictor` and `space` must be live handles; `out` writable.
 */
enum SnStatus sn_predictor_predict(const struct SnPredictor *predictor,
                                   const struct SnSpace *space,
                                   size_t index,
                                   int32_t use_code,
                                   double *out);

/**
 * # Safety
 * `predictor` must be NULL or a handle not yet freed.
 */
void sn_predictor_free(struct SnPredictor *predictor);

/**
 * Tie-corrected Kendall τ-b of two length-`n` arrays.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `out` writable.
 */
enum SnStatus sn_kendall_tau(const double *x, const double *y, size_t n, double *out);

/**
 * Spearman ρ with average ranks for ties.
 *
 * # Safety
 * `x` and `y` must point to `n` doubles; `out` writable.
 */
enum SnStatus sn_spearman_rho(const double *x, const double *y, size_t n, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SIAMESE_NAS_H */
