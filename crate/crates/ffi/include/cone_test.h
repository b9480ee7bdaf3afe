#ifndef CONE_TEST_H
#define CONE_TEST_H

/* Generated by cbindgen from src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes. The nonzero error classes match the CLI exit codes.
 */
typedef enum CtStatus {
  CT_STATUS_OK = 0,
  CT_STATUS_NULL_POINTER = 1,
  CT_STATUS_USAGE = 2,
  CT_STATUS_DATA = 3,
  CT_STATUS_NUMERICAL = 4,
  CT_STATUS_PANIC = 5,
} CtStatus;

/**
 * Calibration method for [`ct_test`].
 */
typedef enum CtMethod {
  CT_METHOD_GAUSSIAN = 0,
  CT_METHOD_SPECTRAL = 1,
  CT_METHOD_PERMUTATION = 2,
} CtMethod;

/**
 * Opaque sample of SPD matrices.
 */
typedef struct CtSample CtSample;

/**
 * Summary of one calibrated test.
 */
typedef struct CtTestResult {
  double statistic;
  double statistic_raw;
  double p_value;
  double b1;
  double b2;
} CtTestResult;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Build a sample from `n` row-major `dim x dim` matrices stored back to back.
 *
 * # Safety
 * `entries` must point to `n * dim * dim` readable doubles and `out` must be
 * writable. The handle written to `out` is released with [`ct_sample_free`].
 */
enum CtStatus ct_sample_new(size_t dim, size_t n, const double *entries, struct CtSample **out);

/**
 * Release a sample. Null is ignored.
 *
 * # Safety
 * `sample` must be null or a handle from [`ct_sample_new`] not yet freed.
 */
void ct_sample_free(struct CtSample *sample);

/**
 * Number of matrices in a sample, or 0 for null.
 *
 * # Safety
 * `sample` must be null or a live handle.
 */
size_t ct_sample_len(const struct CtSample *sample);

/**
 * Matrix dimension of a sample, or 0 for null.
 *
 * # Safety
 * `sample` must be null or a live handle.
 */
size_t ct_sample_dim(const struct CtSample *sample);

/**
 * Clamped statistic T for bandwidths `b1`, `b2`.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum CtStatus ct_statistic(const struct CtSample *sample1,
                           const struct CtSample *sample2,
                           double b1,
                           double b2,
                           double *out);

/**
 * Run one calibrated test.
 *
 * `resamples` is the number of weighted chi-square draws for the spectral
 * method, the number of permutations for the permutation method, and is
 * ignored by the Gaussian method. `seed` is ignored by the Gaussian method.
 *
 * # Safety
 * Handles must be live and `out` writable.
 */
enum CtStatus ct_test(const struct CtSample *sample1,
                      const struct CtSample *sample2,
                      enum CtMethod method,
                      double b1,
                      double b2,
                      size_t resamples,
                      uint64_t seed,
                      struct CtTestResult *out);

/**
 * Least-squares cross-validated bandwidth over `grid`. A null grid or zero
 * length selects the default log-spaced grid.
 *
 * # Safety
 * `grid` must be null or point to `grid_len` doubles; `out` must be writable.
 */
enum CtStatus ct_lscv_bandwidth(const struct CtSample *sample,
                                const double *grid,
                                size_t grid_len,
                                double *out);

/**
 * Message for the last failed call on this thread, or null. The pointer is
 * valid until the next `ct_` call on the same thread.
 */
const char *ct_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *ct_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONE_TEST_H */
