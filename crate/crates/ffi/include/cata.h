#ifndef CATA_H
#define CATA_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result code of every fallible call.
 */
typedef enum {
  CATA_STATUS_OK = 0,
  /**
   * File could not be read or written.
   */
  CATA_STATUS_IO = 1,
  /**
   * Malformed dataset, model or JSON input.
   */
  CATA_STATUS_PARSE = 2,
  /**
   * Argument or record outside its declared range.
   */
  CATA_STATUS_INVALID = 3,
  /**
   * Training produced a non-finite objective.
   */
  CATA_STATUS_DIVERGED = 4,
  /**
   * A required pointer was null.
   */
  CATA_STATUS_NULL_POINTER = 5,
  /**
   * Internal panic; the handle arguments should be considered unusable.
   */
  CATA_STATUS_PANIC = 6,
} CataStatus;

typedef enum {
  /**
   * Squared Frobenius penalty on the linear weights.
   */
  CATA_VARIANT_CATA = 0,
  /**
   * Group l1 penalty on per-category, per-view blocks of the linear weights.
   */
  CATA_VARIANT_CATA_G = 1,
} CataVariant;

/**
 * Opaque dataset.
 */
typedef struct CataDatasetHandle CataDatasetHandle;

/**
 * Opaque trained model.
 */
typedef struct CataModelHandle CataModelHandle;

/**
 * Training options. Fill with [`cata_train_config_default`] and override
 * fields as needed. With `ranks` null every mode gets rank 5; otherwise it
 * points at `num_ranks` values, category mode first.
 */
typedef struct {
  const size_t *ranks;
  size_t num_ranks;
  double alpha;
  double beta;
  double eta;
  size_t max_iters;
  double tol;
  uint64_t seed;
  double init_sigma;
  CataVariant variant;
  bool line_search;
} CataTrainConfig;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *cata_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *cata_version(void);

/**
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
CataStatus cata_model_load(const char *path, CataModelHandle **out);

/**
 * # Safety
 * `model` must come from this library and `path` be NUL-terminated.
 */
CataStatus cata_model_save(const CataModelHandle *model, const char *path);

/**
 * # Safety
 * `model` must be null or a handle from this library that has not been freed.
 */
void cata_model_free(CataModelHandle *model);

/**
 * Number of views and categories of a model.
 *
 * # Safety
 * All pointers must be valid.
 */
CataStatus cata_model_dims(const CataModelHandle *model, size_t *num_views, size_t *num_categories);

/**
 * Feature count of one view.
 *
 * # Safety
 * All pointers must be valid.
 */
CataStatus cata_model_view_dim(const CataModelHandle *model, size_t view, size_t *dim);

/**
 * Predicts one rating. Sparse features are passed per view: view `v` owns
 * the next `nnz_per_view[v]` entries of `indices` and `values`, with
 * strictly increasing indices.
 *
 * # Safety
 * `nnz_per_view` must hold one count per view and `indices` / `values` the
 * sum of those counts.
 */
CataStatus cata_model_predict(const CataModelHandle *model,
                              size_t category,
                              const size_t *nnz_per_view,
                              const size_t *indices,
                              const double *values,
                              double *out);

/**
 * Predicts every record of a dataset into `out`, which must hold
 * `out_len == cata_dataset_len(dataset)` values.
 *
 * # Safety
 * Handles must be valid and `out` must point at `out_len` doubles.
 */
CataStatus cata_predict_dataset(const CataModelHandle *model,
                                const CataDatasetHandle *dataset,
                                double *out,
                                size_t out_len);

/**
 * # Safety
 * `path` must be NUL-terminated and `out` valid.
 */
CataStatus cata_dataset_load(const char *path, CataDatasetHandle **out);

/**
 * Number of records, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a valid handle.
 */
size_t cata_dataset_len(const CataDatasetHandle *dataset);

/**
 * # Safety
 * `dataset` must be null or a handle from this library that has not been freed.
 */
void cata_dataset_free(CataDatasetHandle *dataset);

/**
 * Library defaults: rank 5 on every mode, alpha = beta = 1e-4, eta 0.1,
 * 400 iterations, tol 1e-5, seed 0, init sigma 0.01, CATA, line search on.
 *
 * # Safety
 * `out` must be valid.
 */
CataStatus cata_train_config_default(CataTrainConfig *out);

/**
 * Trains a model on a dataset. On success `*out` owns a new model handle
 * and `final_objective` (if not null) receives the last objective value.
 *
 * # Safety
 * Handles and pointers must be valid; `final_objective` may be null.
 */
CataStatus cata_train(const CataDatasetHandle *dataset,
                      const CataTrainConfig *config,
                      CataModelHandle **out,
                      double *final_objective);

/**
 * Overall MAE and RMSE of a model on a dataset.
 *
 * # Safety
 * All pointers must be valid.
 */
CataStatus cata_evaluate(const CataModelHandle *model,
                         const CataDatasetHandle *dataset,
                         double *mae,
                         double *rmse);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CATA_H */
