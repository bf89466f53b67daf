/* C interface of the rugwarn rug-pull early-warning toolkit. */

#ifndef RUGWARN_H
#define RUGWARN_H

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call; anything other than OK leaves a message in
 * `rugwarn_last_error`.
 */
typedef enum rugwarn_status {
  /**
   * The call succeeded.
   */
  RUGWARN_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  RUGWARN_STATUS_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  RUGWARN_STATUS_INVALID_UTF8 = 2,
  /**
   * The file could not be read or written.
   */
  RUGWARN_STATUS_IO = 3,
  /**
   * The file exists but its contents are malformed.
   */
  RUGWARN_STATUS_PARSE = 4,
  /**
   * The computation rejected the inputs.
   */
  RUGWARN_STATUS_COMPUTE = 5,
} rugwarn_status;

/**
 * Opaque handle to one token's ordered transfer records.
 */
typedef struct rugwarn_dataset rugwarn_dataset;

/**
 * Opaque handle to a trained classifier artifact.
 */
typedef struct rugwarn_model rugwarn_model;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *rugwarn_version(void);

/**
 * Message of the most recent failure on the calling thread; empty when none.
 * The pointer stays valid until the next failing call on the same thread.
 */
const char *rugwarn_last_error(void);

/**
 * Opens one token's transfer CSV (canonical `token_address,tx_hash,from,to,
 * quantity,timestamp` header) and merges, dedups, orders, and caps its
 * records. `cap` 0 selects the default per-token cap. On success `*out` owns
 * the handle; release it with `rugwarn_dataset_free`.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable storage
 * for one pointer.
 */
enum rugwarn_status rugwarn_dataset_open(const char *path,
                                         uintptr_t cap,
                                         struct rugwarn_dataset **out);

/**
 * Record count of the dataset; 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle from `rugwarn_dataset_open`.
 */
uintptr_t rugwarn_dataset_len(const struct rugwarn_dataset *dataset);

/**
 * Computes the base risk features in canonical order into `out[0..len)`;
 * `len` must equal the base feature count (12).
 *
 * # Safety
 * `dataset` must be a live handle and `out` writable for `len` doubles.
 */
enum rugwarn_status rugwarn_dataset_features(const struct rugwarn_dataset *dataset,
                                             double *out,
                                             uintptr_t len);

/**
 * Scores the three wash-trading patterns of the dataset: self trades,
 * matched back-and-forth trades within the minute window, and bounded
 * simple-cycle trades.
 *
 * # Safety
 * `dataset` must be a live handle; the three out pointers must be writable.
 */
enum rugwarn_status rugwarn_dataset_pattern_scores(const struct rugwarn_dataset *dataset,
                                                   uint32_t window_minutes,
                                                   uintptr_t max_cycle_len,
                                                   double *out_self,
                                                   double *out_matched,
                                                   double *out_circular);

/**
 * Releases a dataset handle; a null pointer is ignored.
 *
 * # Safety
 * `dataset` must be null or a live handle, and must not be used afterwards.
 */
void rugwarn_dataset_free(struct rugwarn_dataset *dataset);

/**
 * Loads a trained model artifact (JSON). On success `*out` owns the handle;
 * release it with `rugwarn_model_free`.
 *
 * # Safety
 * `path` must point to a NUL-terminated string and `out` to writable storage
 * for one pointer.
 */
enum rugwarn_status rugwarn_model_load(const char *path, struct rugwarn_model **out);

/**
 * Number of feature values the model expects per row; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle from `rugwarn_model_load`.
 */
uintptr_t rugwarn_model_feature_count(const struct rugwarn_model *model);

/**
 * Scores one feature row (in the model's column order) and writes the
 * positive-class probability to `out_score`.
 *
 * # Safety
 * `model` must be a live handle, `features` readable for `len` doubles, and
 * `out_score` writable.
 */
enum rugwarn_status rugwarn_model_score(const struct rugwarn_model *model,
                                        const double *features,
                                        uintptr_t len,
                                        double *out_score);

/**
 * Extracts the dataset's features and scores them with the model in one
 * call. Fails when the model needs a column the base extractor does not
 * produce.
 *
 * # Safety
 * `model` and `dataset` must be live handles and `out_score` writable.
 */
enum rugwarn_status rugwarn_model_score_dataset(const struct rugwarn_model *model,
                                                const struct rugwarn_dataset *dataset,
                                                double *out_score);

/**
 * Warning decision at the model's own threshold: 1 when `score` is strictly
 * above it, 0 otherwise, -1 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle from `rugwarn_model_load`.
 */
int32_t rugwarn_model_warn(const struct rugwarn_model *model, double score);

/**
 * Releases a model handle; a null pointer is ignored.
 *
 * # Safety
 * `model` must be null or a live handle, and must not be used afterwards.
 */
void rugwarn_model_free(struct rugwarn_model *model);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RUGWARN_H */
