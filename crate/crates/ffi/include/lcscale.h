#ifndef LCSCALE_H
#define LCSCALE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LcsStatus {
  LCS_STATUS_OK = 0,
  LCS_STATUS_NULL_POINTER = 1,
  LCS_STATUS_INVALID_UTF8 = 2,
  LCS_STATUS_CONFIG = 3,
  LCS_STATUS_DATA = 4,
  LCS_STATUS_NUMERIC = 5,
  LCS_STATUS_PANIC = 6,
} LcsStatus;

typedef enum LcsModelKind {
  LCS_MODEL_KIND_MAGP = 0,
  LCS_MODEL_KIND_DHGP = 1,
} LcsModelKind;

/**
 * Opaque dataset handle.
 */
typedef struct LcsDataset LcsDataset;

/**
 * Opaque fitted-model handle.
 */
typedef struct LcsModel LcsModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t lcs_last_error(char *buf, size_t len);

/**
 * Loads a dataset from a JSON file.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LcsStatus lcs_dataset_load(const char *path, struct LcsDataset **out);

/**
 * Parses a dataset from a JSON string.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` must be writable.
 */
enum LcsStatus lcs_dataset_from_json(const char *json, struct LcsDataset **out);

/**
 * Number of curves in the dataset, 0 for a null handle.
 *
 * # Safety
 * `ds` must be null or a live handle.
 */
size_t lcs_dataset_len(const struct LcsDataset *ds);

/**
 * # Safety
 * `ds` must be null or a handle not yet freed.
 */
void lcs_dataset_free(struct LcsDataset *ds);

/**
 * Fits a hierarchical GP to every curve of `ds`. `max_iters` of 0 keeps the
 * library default.
 *
 * # Safety
 * `ds` must be a live handle; `out` must be writable.
 */
enum LcsStatus lcs_model_fit(const struct LcsDataset *ds,
                             enum LcsModelKind kind,
                             uint64_t seed,
                             size_t max_iters,
                             struct LcsModel **out);

/**
 * Predictive mean and variance for curve `(task, within)` at `n` inputs.
 *
 * # Safety
 * `x`, `mean` and `variance` must each hold `n` doubles.
 */
enum LcsStatus lcs_model_predict(const struct LcsModel *model,
                                 const char *task,
                                 const char *within,
                                 const double *x,
                                 size_t n,
                                 double *mean,
                                 double *variance);

/**
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void lcs_model_free(struct LcsModel *model);

/**
 * Area between two log-log lines over `[lo, hi]` in log10 compute.
 *
 * # Safety
 * `out` must be writable.
 */
enum LcsStatus lcs_abc_lines(double beta0_a,
                             double beta1_a,
                             double beta0_b,
                             double beta1_b,
                             double lo,
                             double hi,
                             double *out);

/**
 * Least-squares line through `(log10 compute, log10 loss)`.
 *
 * # Safety
 * `compute` and `loss` must hold `n` doubles; `beta0`, `beta1` writable.
 */
enum LcsStatus lcs_fit_loglog(const double *compute,
                              const double *loss,
                              size_t n,
                              double *beta0,
                              double *beta1);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LCSCALE_H */
