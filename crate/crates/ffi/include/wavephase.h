#ifndef WAVEPHASE_H
#define WAVEPHASE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Built-in foveal models.
typedef enum WpModel {
  WP_MODEL_A = 0,
  WP_MODEL_B = 1,
  WP_MODEL_C = 2,
  WP_MODEL_D = 3,
} WpModel;

// Status codes returned by every fallible call.
typedef enum WpStatus {
  WP_STATUS_OK = 0,
  WP_STATUS_NULL_POINTER = 1,
  WP_STATUS_CONFIG = 2,
  WP_STATUS_SHAPE = 3,
  WP_STATUS_DEGENERATE_CHANNEL = 4,
  WP_STATUS_NUMERICAL = 5,
  WP_STATUS_NON_CONVERGENCE = 6,
  WP_STATUS_IO = 7,
  WP_STATUS_FORMAT = 8,
  WP_STATUS_JSON = 9,
  WP_STATUS_PANIC = 10,
} WpStatus;

// Bump steerable wavelet bank.
typedef struct WpBank WpBank;

// Real or complex square field.
typedef struct WpField WpField;

// Fitted Gaussian maximum-entropy model.
typedef struct WpGaussian WpGaussian;

// Estimated covariance table.
typedef struct WpTable WpTable;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failure on this thread, or null. Valid until the
// next failing call on the same thread.
const char *wp_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *wp_version(void);

// Real field from `side * side` row-major values.
//
// # Safety
// `values` must point to `len` readable doubles; `out` must be writable.
enum WpStatus wp_field_from_real(size_t side,
                                 const double *values,
                                 size_t len,
                                 struct WpField **out);

// Real Gaussian white noise with standard deviation `sigma`.
//
// # Safety
// `out` must be writable.
enum WpStatus wp_field_white_noise(size_t side, double sigma, uint64_t seed, struct WpField **out);

// Reads a field file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum WpStatus wp_field_load(const char *path, struct WpField **out);

// Writes a field file.
//
// # Safety
// `field` must come from this library; `path` must be NUL-terminated.
enum WpStatus wp_field_save(const struct WpField *field, const char *path);

// Grid side, or 0 for a null handle.
//
// # Safety
// `field` must be null or come from this library.
size_t wp_field_side(const struct WpField *field);

// Copies the real part into `buf` (`side * side` doubles).
//
// # Safety
// `buf` must point to `len` writable doubles.
enum WpStatus wp_field_real(const struct WpField *field, double *buf, size_t len);

// # Safety
// `field` must be null or come from this library, and not be used again.
void wp_field_free(struct WpField *field);

// Bump steerable bank with `scales` scales and `angles` angles.
//
// # Safety
// `out` must be writable.
enum WpStatus wp_bank_bump(size_t side, size_t scales, size_t angles, struct WpBank **out);

// Number of channels including the lowpass, or 0 for a null handle.
//
// # Safety
// `bank` must be null or come from this library.
size_t wp_bank_num_channels(const struct WpBank *bank);

// Frame bounds of the bank.
//
// # Safety
// `lower` and `upper` must be writable.
enum WpStatus wp_bank_frame_bounds(const struct WpBank *bank, double *lower, double *upper);

// # Safety
// `bank` must be null or come from this library, and not be used again.
void wp_bank_free(struct WpBank *bank);

// Estimates the covariance table of a model preset on `field`.
//
// # Safety
// Handles must come from this library; `out` must be writable.
enum WpStatus wp_table_estimate(const struct WpField *field,
                                const struct WpBank *bank,
                                enum WpModel model,
                                struct WpTable **out);

// Number of stored edges, or 0 for a null handle.
//
// # Safety
// `table` must be null or come from this library.
size_t wp_table_num_edges(const struct WpTable *table);

// Writes the binary table file.
//
// # Safety
// `table` must come from this library; `path` must be NUL-terminated.
enum WpStatus wp_table_save(const struct WpTable *table, const char *path);

// # Safety
// `table` must be null or come from this library, and not be used again.
void wp_table_free(struct WpTable *table);

// Fits the Gaussian maximum-entropy model to a table.
//
// # Safety
// Handles must come from this library; `out` must be writable.
enum WpStatus wp_gaussian_fit(const struct WpTable *table,
                              const struct WpBank *bank,
                              double tol,
                              struct WpGaussian **out);

// Largest relative constraint error of the fit, NaN for a null handle.
//
// # Safety
// `model` must be null or come from this library.
double wp_gaussian_max_rel_error(const struct WpGaussian *model);

// Draws one sample with the given seed.
//
// # Safety
// `model` must come from this library; `out` must be writable.
enum WpStatus wp_gaussian_sample(const struct WpGaussian *model,
                                 uint64_t seed,
                                 struct WpField **out);

// # Safety
// `model` must be null or come from this library, and not be used again.
void wp_gaussian_free(struct WpGaussian *model);

// Microcanonical synthesis for models B, C or D. Returns the best restart
// and its final loss relative to its initial loss.
//
// # Safety
// Handles must come from this library; `out` and `relative_loss` must be
// writable (`relative_loss` may be null).
enum WpStatus wp_synthesize(const struct WpField *reference,
                            const struct WpBank *bank,
                            enum WpModel model,
                            size_t restarts,
                            size_t max_iter,
                            uint64_t seed,
                            struct WpField **out,
                            double *relative_loss);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WAVEPHASE_H */
