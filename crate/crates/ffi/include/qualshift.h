#ifndef QUALSHIFT_H
#define QUALSHIFT_H

/* Generated with cbindgen:0.29.4 */

/* Generated by cbindgen from crates/ffi. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result of every fallible call.
typedef enum QsStatus {
  QS_STATUS_OK = 0,
  QS_STATUS_NULL_POINTER = 1,
  // Bad argument: length mismatch, bad period code, invalid UTF-8.
  QS_STATUS_INVALID_ARGUMENT = 2,
  // The data do not fit the requested design.
  QS_STATUS_INVALID_INPUT = 3,
  // Estimation failed on valid input.
  QS_STATUS_ESTIMATION = 4,
  QS_STATUS_IO = 5,
  // A Rust panic was caught at the boundary.
  QS_STATUS_INTERNAL = 6,
} QsStatus;

typedef enum QsSimDesign {
  QS_SIM_DESIGN_SOO_RANDOMIZED = 0,
  QS_SIM_DESIGN_SOO_OBSERVATIONAL = 1,
  QS_SIM_DESIGN_IV = 2,
  QS_SIM_DESIGN_RD = 3,
  QS_SIM_DESIGN_DID = 4,
} QsSimDesign;

typedef enum QsOutcomeKind {
  QS_OUTCOME_KIND_MULTINOMIAL = 0,
  QS_OUTCOME_KIND_ORDERED = 1,
} QsOutcomeKind;

typedef enum QsDesign {
  QS_DESIGN_SOO = 0,
  QS_DESIGN_IV = 1,
  QS_DESIGN_RD = 2,
  QS_DESIGN_DID = 3,
} QsDesign;

typedef enum QsEstimand {
  QS_ESTIMAND_PS = 0,
  QS_ESTIMAND_PST = 1,
  QS_ESTIMAND_LPS = 2,
  QS_ESTIMAND_PSC = 3,
} QsEstimand;

// Opaque estimation result.
typedef struct QsEstimate QsEstimate;

// Opaque observation set.
typedef struct QsSample QsSample;

// Estimator settings. Start from [`qs_options_default`].
typedef struct QsOptions {
  enum QsDesign design;
  // `QS_ESTIMAND_PS` or `QS_ESTIMAND_PST` for selection on observables;
  // the other designs have a fixed estimand and ignore this field.
  enum QsEstimand estimand;
  size_t folds;
  uint64_t seed;
  double alpha;
  // Fixed RD bandwidth; zero selects it from the data.
  double bandwidth;
  bool bias_correction;
  bool homoskedastic;
} QsOptions;

// One category of an estimate.
typedef struct QsCategory {
  int64_t label;
  double point;
  double se;
  double ci_low;
  double ci_high;
} QsCategory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread; empty if none. The pointer
// stays valid until the next failing call on the same thread.
const char *qs_last_error_message(void);

// Library version as a static NUL-terminated string.
const char *qs_version(void);

// Creates a sample from `n` outcome labels and 0/1 treatments.
//
// # Safety
// `outcome` and `treatment` must point to `n` readable elements; `out` must be writable.
enum QsStatus qs_sample_new(const int64_t *outcome,
                            const uint8_t *treatment,
                            size_t n,
                            struct QsSample **out);

// Reads a sample from a CSV file with the CLI's column conventions.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum QsStatus qs_sample_read_csv(const char *path, struct QsSample **out);

// Draws a sample from one of the built-in simulation designs.
//
// # Safety
// `out` must be writable.
enum QsStatus qs_sample_simulate(enum QsSimDesign design,
                                 enum QsOutcomeKind outcome,
                                 size_t n,
                                 uint64_t seed,
                                 struct QsSample **out);

// Sets a row-major `n_rows × n_cols` covariate matrix.
//
// # Safety
// `data` must point to `n_rows * n_cols` readable doubles.
enum QsStatus qs_sample_set_covariates(struct QsSample *sample,
                                       const double *data,
                                       size_t n_rows,
                                       size_t n_cols);

// # Safety
// `z` must point to `n` readable bytes.
enum QsStatus qs_sample_set_instrument(struct QsSample *sample, const uint8_t *z, size_t n);

// Sets the running variable and the cutoff of a discontinuity design.
//
// # Safety
// `run` must point to `n` readable doubles.
enum QsStatus qs_sample_set_running_var(struct QsSample *sample,
                                        const double *run,
                                        size_t n,
                                        double cutoff);

// Sets periods: 0 = pre, 1 = post.
//
// # Safety
// `period` must point to `n` readable bytes.
enum QsStatus qs_sample_set_period(struct QsSample *sample, const uint8_t *period, size_t n);

// # Safety
// `unit_id` must point to `n` readable integers.
enum QsStatus qs_sample_set_unit_id(struct QsSample *sample, const uint64_t *unit_id, size_t n);

// Number of rows; 0 for a NULL handle.
//
// # Safety
// `sample` must be NULL or a live handle.
size_t qs_sample_len(const struct QsSample *sample);

// Releases a sample. NULL is ignored.
//
// # Safety
// `sample` must be NULL or a handle not yet freed.
void qs_sample_free(struct QsSample *sample);

// Defaults for `design`: PS, 5 folds, seed 42, alpha 0.05, automatic
// bandwidth with bias correction, robust IV standard errors.
struct QsOptions qs_options_default(enum QsDesign design);

// Runs the estimator for `opts.design`.
//
// # Safety
// `sample` and `opts` must be live pointers; `out` must be writable.
enum QsStatus qs_estimate(const struct QsSample *sample,
                          const struct QsOptions *opts,
                          struct QsEstimate **out);

// Number of outcome categories; 0 for a NULL handle.
//
// # Safety
// `estimate` must be NULL or a live handle.
size_t qs_estimate_n_categories(const struct QsEstimate *estimate);

// Copies category `index` (0-based) into `out`.
//
// # Safety
// `estimate` must be a live handle; `out` must be writable.
enum QsStatus qs_estimate_category(const struct QsEstimate *estimate,
                                   size_t index,
                                   struct QsCategory *out);

// The estimand that was estimated.
//
// # Safety
// `estimate` must be a live handle.
enum QsStatus qs_estimate_estimand(const struct QsEstimate *estimate, enum QsEstimand *out);

// The estimate as the JSON document the CLI prints. Release with
// [`qs_string_free`]. Returns NULL on a NULL handle.
//
// # Safety
// `estimate` must be NULL or a live handle.
char *qs_estimate_to_json(const struct QsEstimate *estimate);

// # Safety
// `s` must be NULL or a string returned by this library and not yet freed.
void qs_string_free(char *s);

// Releases an estimate. NULL is ignored.
//
// # Safety
// `estimate` must be NULL or a handle not yet freed.
void qs_estimate_free(struct QsEstimate *estimate);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QUALSHIFT_H */
