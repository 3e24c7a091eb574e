#ifndef MODELMAP_H
#define MODELMAP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  MM_STATUS_OK = 0,
  MM_STATUS_NULL_POINTER = 1,
  MM_STATUS_IO = 2,
  MM_STATUS_DATA = 3,
  MM_STATUS_INVALID_ARGUMENT = 4,
  MM_STATUS_ANALYSIS = 5,
  MM_STATUS_CONFIG = 6,
  MM_STATUS_PANIC = 7,
} MmStatus;

/**
 * Values accepted by the `format` argument of [`mm_matrix_load`].
 */
typedef enum {
  /**
   * Inferred from the file extension.
   */
  MM_FORMAT_AUTO = 0,
  MM_FORMAT_BINARY = 1,
  MM_FORMAT_CSV = 2,
} MmFormat;

/**
 * Double-centered coordinates, raw nats or bits/byte.
 */
typedef struct MmCenteredMap MmCenteredMap;

/**
 * Log-likelihood matrix, `K` models by `N` texts.
 */
typedef struct MmMatrix MmMatrix;

/**
 * Result of a power-law fit of squared displacement against lag.
 */
typedef struct {
  double c;
  double log_intercept;
  double r_squared;
  size_t n_points;
  size_t dropped;
} MmScalingFit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *mm_version(void);

/**
 * Message for the last failed call on this thread, or null if the last call
 * succeeded. The pointer stays valid until the next call on this thread.
 */
const char *mm_last_error(void);

/**
 * Loads a matrix (binary or CSV, plus optional `.meta.json` sidecar).
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
MmStatus mm_matrix_load(const char *path, uint32_t format, MmMatrix **out);

/**
 * Builds a matrix from `k * n` row-major values in nats. `byte_lengths`
 * (length `n`) may be null, in which case every text counts as one byte.
 *
 * # Safety
 * `values` must point to `k * n` doubles, `byte_lengths` to `n` integers or
 * be null, and `out` must be a valid pointer.
 */
MmStatus mm_matrix_from_values(const double *values,
                               size_t k,
                               size_t n,
                               const uint64_t *byte_lengths,
                               MmMatrix **out);

/**
 * # Safety
 * `m` must come from this library and not be used afterwards. Null is a no-op.
 */
void mm_matrix_free(MmMatrix *m);

/**
 * # Safety
 * `m` must be a live handle; `k` and `n` valid pointers.
 */
MmStatus mm_matrix_dims(const MmMatrix *m, size_t *k, size_t *n);

/**
 * Copies the `k * n` row-major values into `buf`.
 *
 * # Safety
 * `m` must be a live handle and `buf` must have room for `len` doubles.
 */
MmStatus mm_matrix_values(const MmMatrix *m, double *buf, size_t len);

/**
 * New matrix with every value below the `q` quantile raised to it.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
MmStatus mm_matrix_clip(const MmMatrix *m, double q, MmMatrix **out);

/**
 * Double-centers the matrix; coordinates are in raw nats.
 *
 * # Safety
 * `m` must be a live handle and `out` a valid pointer.
 */
MmStatus mm_matrix_double_center(const MmMatrix *m, MmCenteredMap **out);

/**
 * New map rescaled so squared distances read in bits/byte.
 *
 * # Safety
 * `c` must be a live handle and `out` a valid pointer.
 */
MmStatus mm_centered_rescale_bits_per_byte(const MmCenteredMap *c, MmCenteredMap **out);

/**
 * # Safety
 * `c` must come from this library and not be used afterwards. Null is a no-op.
 */
void mm_centered_free(MmCenteredMap *c);

/**
 * # Safety
 * `c` must be a live handle; `k` and `n` valid pointers.
 */
MmStatus mm_centered_dims(const MmCenteredMap *c, size_t *k, size_t *n);

/**
 * Copies the `k * n` row-major coordinates into `buf`.
 *
 * # Safety
 * `c` must be a live handle and `buf` must have room for `len` doubles.
 */
MmStatus mm_centered_coords(const MmCenteredMap *c, double *buf, size_t len);

/**
 * KL estimate between rows `i` and `j` and its standard error, in the map's
 * units. `std_error` may be null.
 *
 * # Safety
 * `c` must be a live handle, `value` a valid pointer, `std_error` valid or null.
 */
MmStatus mm_kl_pair(const MmCenteredMap *c, size_t i, size_t j, double *value, double *std_error);

/**
 * Full `k x k` KL matrix, row-major. `std_errors` may be null; otherwise it
 * also holds `len` values.
 *
 * # Safety
 * `c` must be a live handle; `values` (and `std_errors` if non-null) must
 * have room for `len` doubles.
 */
MmStatus mm_kl_matrix(const MmCenteredMap *c, double *values, double *std_errors, size_t len);

/**
 * Minimum over models of the negative mean log-likelihood in bits/byte.
 * `model_index` may be null.
 *
 * # Safety
 * `m` must be a live handle, `bits_per_byte` valid, `model_index` valid or null.
 */
MmStatus mm_entropy_upper_bound(const MmMatrix *m, double *bits_per_byte, size_t *model_index);

/**
 * Least-squares fit of `ln disp` on `ln lag`.
 *
 * # Safety
 * `lags` and `disps` must each hold `len` doubles; `fit` must be valid.
 */
MmStatus mm_fit_exponent(const double *lags, const double *disps, size_t len, MmScalingFit *fit);

/**
 * `D = 2 / c`.
 *
 * # Safety
 * `dimension` must be a valid pointer.
 */
MmStatus mm_fractal_dimension(double c, double *dimension);

/**
 * `alpha = c_q / c_w`.
 *
 * # Safety
 * `alpha` must be a valid pointer.
 */
MmStatus mm_holder_exponent(double c_w, double c_q, double *alpha);

/**
 * Exact-covariance fBm path at steps `1..=n_steps`, written row-major as
 * `n_steps x dim` into `buf`.
 *
 * # Safety
 * `buf` must have room for `len` doubles.
 */
MmStatus mm_fbm_generate(double hurst,
                         size_t n_steps,
                         size_t dim,
                         uint64_t seed,
                         double *buf,
                         size_t len);

/**
 * Distance from `x` to the nearest integer.
 */
double mm_sawtooth(double x);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MODELMAP_H */
