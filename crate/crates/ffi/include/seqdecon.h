#ifndef SEQDECON_H
#define SEQDECON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum SdStatus {
  SD_STATUS_OK = 0,
  SD_STATUS_NULL_POINTER = 1,
  SD_STATUS_DIMENSION = 2,
  SD_STATUS_NON_FINITE = 3,
  SD_STATUS_INVALID_PARAMETER = 4,
  SD_STATUS_INVALID_INPUT = 5,
  /**
   * No component identified yet, or nothing to estimate from.
   */
  SD_STATUS_DEGENERATE = 6,
  SD_STATUS_PANIC = 7,
} SdStatus;

/**
 * Estimator family for [`sd_stat_estimate`].
 */
typedef enum SdEstimator {
  SD_ESTIMATOR_MAIN = 0,
  SD_ESTIMATOR_SOFT = 1,
  /**
   * Tikhonov-Phillips; `param` is γ, NaN to tune it.
   */
  SD_ESTIMATOR_TIKHONOV_PHILLIPS = 2,
  /**
   * Landweber; `param` is the iteration count, NaN to tune it.
   */
  SD_ESTIMATOR_LANDWEBER = 3,
  SD_ESTIMATOR_MONOTONE = 4,
} SdEstimator;

/**
 * Opaque running sums for the averaged-model ridge baseline.
 */
typedef struct SdAveraged SdAveraged;

/**
 * Opaque streaming sufficient statistic.
 */
typedef struct SdStat SdStat;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread; empty after a success.
 * Valid until the next call on this thread.
 */
const char *sd_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *sd_version(void);

/**
 * Create an empty statistic for signals of shape `h × w` (`h = 1` for 1D).
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum SdStatus sd_stat_new(size_t h, size_t w, struct SdStat **out);

/**
 * # Safety
 * `stat` must be null or a handle from [`sd_stat_new`]/[`sd_stat_from_json`]
 * not yet freed.
 */
void sd_stat_free(struct SdStat *stat);

/**
 * Signal length `p`, or 0 for a null handle.
 *
 * # Safety
 * `stat` must be null or a live handle.
 */
size_t sd_stat_len(const struct SdStat *stat);

/**
 * Observations folded in so far, or 0 for a null handle.
 *
 * # Safety
 * `stat` must be null or a live handle.
 */
uint64_t sd_stat_count(const struct SdStat *stat);

/**
 * Fold in one observation `y` (signal space) blurred by convolution taps
 * `kernel`; both have length `len = p`.
 *
 * # Safety
 * `stat` must be a live handle; `kernel` and `y` must point to `len`
 * readable doubles.
 */
enum SdStatus sd_stat_update(struct SdStat *stat,
                             const double *kernel,
                             const double *y,
                             size_t len);

/**
 * Fold in one observation already in the spectral basis: eigenvalues
 * `d_re + i d_im` and rotated data `x_re + i x_im`, each of length `len`.
 *
 * # Safety
 * `stat` must be a live handle; the four arrays must hold `len` doubles.
 */
enum SdStatus sd_stat_update_spectral(struct SdStat *stat,
                                      const double *d_re,
                                      const double *d_im,
                                      const double *x_re,
                                      const double *x_im,
                                      size_t len);

/**
 * `dst ← dst ⊕ src`; equivalent to having streamed both inputs into `dst`.
 *
 * # Safety
 * Both must be live handles; they may not alias.
 */
enum SdStatus sd_stat_merge(struct SdStat *dst, const struct SdStat *src);

/**
 * Write the estimate `θ̂` (length `len = p`) into `theta_out`. `param` is
 * the family's tuning value (see [`SdEstimator`]); NaN selects it by
 * minimizing the risk estimate. Returns [`SdStatus::Degenerate`] when no
 * component has been observed.
 *
 * # Safety
 * `stat` must be a live handle and `theta_out` must hold `len` doubles.
 */
enum SdStatus sd_stat_estimate(const struct SdStat *stat,
                               enum SdEstimator family,
                               double param,
                               double epsilon,
                               double *theta_out,
                               size_t len);

/**
 * Serialize the statistic to a JSON string; free it with
 * [`sd_string_free`].
 *
 * # Safety
 * `stat` must be a live handle and `out` valid for one pointer write.
 */
enum SdStatus sd_stat_to_json(const struct SdStat *stat, char **out);

/**
 * Restore a statistic from [`sd_stat_to_json`] output.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` valid for one pointer write.
 */
enum SdStatus sd_stat_from_json(const char *json, struct SdStat **out);

/**
 * # Safety
 * `s` must be null or a string returned by this library, not yet freed.
 */
void sd_string_free(char *s);

/**
 * Create empty averaged-model sums for shape `h × w` (`h = 1` for 1D).
 *
 * # Safety
 * `out` must be valid for one pointer write.
 */
enum SdStatus sd_averaged_new(size_t h, size_t w, struct SdAveraged **out);

/**
 * # Safety
 * `avg` must be null or a live handle.
 */
void sd_averaged_free(struct SdAveraged *avg);

/**
 * Same contract as [`sd_stat_update`].
 *
 * # Safety
 * As for [`sd_stat_update`].
 */
enum SdStatus sd_averaged_update(struct SdAveraged *avg,
                                 const double *kernel,
                                 const double *y,
                                 size_t len);

/**
 * Ridge estimate on the averaged model with penalty `tau` (NaN: chosen by
 * generalized cross validation). The penalty used is written to `tau_out`
 * when it is non-null.
 *
 * # Safety
 * `avg` must be a live handle, `theta_out` must hold `len` doubles and
 * `tau_out` must be null or writable.
 */
enum SdStatus sd_averaged_ridge(const struct SdAveraged *avg,
                                double tau,
                                double *theta_out,
                                size_t len,
                                double *tau_out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEQDECON_H */
