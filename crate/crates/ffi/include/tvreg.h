#ifndef TVREG_H
#define TVREG_H

#include <stdbool.h>
#include <stddef.h>

// Result codes shared by every entry point.
typedef enum tvreg_status {
  TVREG_STATUS_OK = 0,
  TVREG_STATUS_NULL_POINTER = 1,
  TVREG_STATUS_INVALID_INPUT = 2,
  TVREG_STATUS_DOMAIN = 3,
  TVREG_STATUS_NUMERICAL = 4,
  TVREG_STATUS_UNSTABLE = 5,
  TVREG_STATUS_PARSE = 6,
  TVREG_STATUS_IO = 7,
  // A Rust panic was caught at the boundary.
  TVREG_STATUS_INTERNAL = 8,
} tvreg_status;

// Kernel selector for [`tvreg_fit_new`] and the analysis calls.
typedef enum tvreg_kernel {
  TVREG_KERNEL_EPANECHNIKOV = 0,
  TVREG_KERNEL_BARTLETT = 1,
} tvreg_kernel;

// Regression data: a response and an `n × p` design.
typedef struct tvreg_data tvreg_data;

// A local linear fit evaluated on a grid.
typedef struct tvreg_fit tvreg_fit;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the message of the last failure on this thread into `buf`,
// truncated and NUL-terminated. Returns the full message length in bytes
// excluding the terminator, or 0 if there is no message.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t tvreg_last_error(char *buf, size_t len);

// Builds data from a response of length `n` and a row-major `n × p` design.
// Columns are named `x1 … xp`.
//
// # Safety
// `y` must hold `n` values, `x` must hold `n * p` values and `out` must be
// writable.
enum tvreg_status tvreg_data_new(const double *y,
                                 const double *x,
                                 size_t n,
                                 size_t p,
                                 struct tvreg_data **out);

// Reads a header-first CSV file. The response column is `response`; every
// other column becomes a predictor.
//
// # Safety
// `path` and `response` must be NUL-terminated strings and `out` writable.
enum tvreg_status tvreg_data_from_csv(const char *path,
                                      const char *response,
                                      bool standardize,
                                      bool intercept,
                                      struct tvreg_data **out);

// # Safety
// `data` must be null or a handle from `tvreg_data_*` not yet freed.
void tvreg_data_free(struct tvreg_data *data);

// # Safety
// `data` must be a live handle; `n` and `p` must be writable.
enum tvreg_status tvreg_data_shape(const struct tvreg_data *data, size_t *n, size_t *p);

// Local linear fit on the uniform grid `k / grid_size`, `k = 1 … grid_size`,
// or on the observation times when `grid_size` is 0.
//
// # Safety
// `data` must be a live handle and `out` writable.
enum tvreg_status tvreg_fit_new(const struct tvreg_data *data,
                                enum tvreg_kernel kernel,
                                double bandwidth,
                                size_t grid_size,
                                struct tvreg_fit **out);

// # Safety
// `fit` must be null or a handle from `tvreg_fit_new` not yet freed.
void tvreg_fit_free(struct tvreg_fit *fit);

// # Safety
// `fit` must be a live handle; `grid_len` and `p` must be writable.
enum tvreg_status tvreg_fit_shape(const struct tvreg_fit *fit, size_t *grid_len, size_t *p);

// Copies the grid points into `out`, which must hold `grid_len` values.
//
// # Safety
// `fit` must be a live handle and `out` must point to `len` writable values.
enum tvreg_status tvreg_fit_grid(const struct tvreg_fit *fit, double *out, size_t len);

// Copies the coefficient curves, row-major `grid_len × p`, into `out`.
//
// # Safety
// `fit` must be a live handle and `out` must point to `len` writable values.
enum tvreg_status tvreg_fit_beta(const struct tvreg_fit *fit, double *out, size_t len);

// Residual sum of squares of the fit at the observation times.
//
// # Safety
// `fit` must be a live handle and `out` writable.
enum tvreg_status tvreg_fit_rss(const struct tvreg_fit *fit, double *out);

// Tests `H₀: A β(·) ≡ a` with the asymptotic normal calibration at level
// `alpha`, for all weight schemes. `a_matrix` is row-major `s × p`.
// `target` holds `s` values, or is null to test constancy against
// `â = ∫ A β̃`. `grid_size` 0 evaluates on the observation times.
//
// On success `*json_out` holds an object with the target used and, per
// scheme, the statistic components and the decision.
//
// # Safety
// `data` must be a live handle, `a_matrix` must hold `s * p` values,
// `target` must be null or hold `s` values, and `json_out` writable.
enum tvreg_status tvreg_test(const struct tvreg_data *data,
                             const double *a_matrix,
                             size_t s,
                             const double *target,
                             enum tvreg_kernel kernel,
                             double bandwidth,
                             size_t grid_size,
                             double alpha,
                             char **json_out);

// Variable selection by exhaustive VIC search at bandwidth `bandwidth`.
// A negative `chi` uses the default penalty `n^{-2/5}`.
//
// # Safety
// `data` must be a live handle and `json_out` writable.
enum tvreg_status tvreg_select(const struct tvreg_data *data,
                               enum tvreg_kernel kernel,
                               double bandwidth,
                               double chi,
                               char **json_out);

// Releases a string returned through a `json_out` parameter.
//
// # Safety
// `s` must be null or a string from this library not yet freed.
void tvreg_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TVREG_H */
