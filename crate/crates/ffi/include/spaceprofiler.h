#ifndef SPACEPROFILER_H
#define SPACEPROFILER_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stddef.h>
#include <stdint.h>

/**
 * Result code of every fallible call.
 */
typedef enum SpStatus {
  SP_STATUS_OK = 0,
  SP_STATUS_NULL_POINTER = 1,
  SP_STATUS_INVALID_ARGUMENT = 2,
  SP_STATUS_PARSE = 3,
  SP_STATUS_DOMAIN = 4,
  SP_STATUS_DIMENSION = 5,
  SP_STATUS_ALIGNMENT = 6,
  SP_STATUS_CONFIG = 7,
  SP_STATUS_INSUFFICIENT_DATA = 8,
  SP_STATUS_ISOLATED_NODE = 9,
  SP_STATUS_NUMERIC = 10,
  SP_STATUS_SCHEMA = 11,
  SP_STATUS_MISSING_ARTIFACTS = 12,
  SP_STATUS_IO = 13,
  SP_STATUS_PANIC = 14,
} SpStatus;

/**
 * Distance kernel selector for [`sp_similarity`].
 */
typedef enum SpKernel {
  /**
   * `param` is the window in bins.
   */
  SP_KERNEL_WIED = 0,
  SP_KERNEL_EUCLIDEAN = 1,
  SP_KERNEL_MANHATTAN = 2,
  /**
   * `param` is the order p.
   */
  SP_KERNEL_MINKOWSKI = 3,
} SpKernel;

/**
 * Generic day type selector.
 */
typedef enum SpDayType {
  SP_DAY_TYPE_WEEKDAY = 0,
  SP_DAY_TYPE_WEEKEND = 1,
  SP_DAY_TYPE_SCHOOL_HOLIDAY = 2,
} SpDayType;

/**
 * Spectral clustering result for one affinity matrix.
 */
typedef struct SpClusterModel SpClusterModel;

/**
 * Outcome of a full pipeline run, with its report serialized as JSON.
 */
typedef struct SpReport SpReport;

/**
 * Message of the last failure on this thread, or null. The pointer stays
 * valid until the next call into this library from the same thread.
 */
const char *sp_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sp_version(void);

/**
 * Windowed distance between two profiles of `len` bins.
 *
 * # Safety
 * `a` and `b` must point to `len` doubles; `out` must be writable.
 */
enum SpStatus sp_wied_distance(const double *a,
                               const double *b,
                               size_t len,
                               size_t window,
                               double *out);

/**
 * Similarity `1 / (1 + d)` under the chosen kernel.
 *
 * # Safety
 * `a` and `b` must point to `len` doubles; `out` must be writable.
 */
enum SpStatus sp_similarity(enum SpKernel kernel,
                            double param,
                            const double *a,
                            const double *b,
                            size_t len,
                            double *out);

/**
 * Activeness category (1 most active, 5 least) of a cluster mean under
 * the default bounds.
 *
 * # Safety
 * `out` must be writable.
 */
enum SpStatus sp_categorize(double mean, uint8_t *out);

/**
 * Writes 1 to `active` when at least two of the categories are 3 or better.
 *
 * # Safety
 * `active` must be writable.
 */
enum SpStatus sp_classify(uint8_t weekday,
                          uint8_t weekend,
                          uint8_t school_holiday,
                          int32_t *active);

/**
 * Spectral clustering of a row-major `n × n` affinity matrix.
 *
 * # Safety
 * `values` must point to `n * n` doubles; `out` must be writable. On
 * success `*out` owns a handle to release with [`sp_cluster_model_free`].
 */
enum SpStatus sp_cluster_affinity(const double *values,
                                  size_t n,
                                  size_t k_min,
                                  size_t k_max,
                                  uint64_t seed,
                                  struct SpClusterModel **out);

/**
 * Selected number of clusters, or 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t sp_cluster_model_k(const struct SpClusterModel *model);

/**
 * Copies up to `len` cluster indices (row order) into `out` and returns
 * the number of rows in the model.
 *
 * # Safety
 * `model` must be a live handle; `out` must hold `len` entries or be null.
 */
size_t sp_cluster_model_assignments(const struct SpClusterModel *model, size_t *out, size_t len);

/**
 * Copies up to `len` ascending eigenvalues into `out` and returns how many
 * the model holds.
 *
 * # Safety
 * `model` must be a live handle; `out` must hold `len` entries or be null.
 */
size_t sp_cluster_model_eigenvalues(const struct SpClusterModel *model, double *out, size_t len);

/**
 * Releases a cluster model. Null is ignored.
 *
 * # Safety
 * `model` must be null or a handle not yet freed.
 */
void sp_cluster_model_free(struct SpClusterModel *model);

/**
 * Runs the pipeline described by a TOML config and writes the bundle to
 * `out_dir`.
 *
 * # Safety
 * Both strings must be NUL-terminated; `out` must be writable. On success
 * `*out` owns a handle to release with [`sp_report_free`].
 */
enum SpStatus sp_pipeline_run(const char *config_path, const char *out_dir, struct SpReport **out);

/**
 * The report as JSON, owned by the handle.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
const char *sp_report_json(const struct SpReport *report);

/**
 * Cluster count chosen for a day type, or 0 when unavailable.
 *
 * # Safety
 * `report` must be null or a live handle.
 */
size_t sp_report_k(const struct SpReport *report, enum SpDayType day);

/**
 * Releases a report. Null is ignored.
 *
 * # Safety
 * `report` must be null or a handle not yet freed.
 */
void sp_report_free(struct SpReport *report);

#endif  /* SPACEPROFILER_H */
