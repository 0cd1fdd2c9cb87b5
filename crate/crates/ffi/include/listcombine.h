#ifndef LISTCOMBINE_H
#define LISTCOMBINE_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Sentinel for a missing value in the integer input arrays.
 */
#define LC_MISSING INT32_MIN

/**
 * Bits of [`LcEstimate::diagnostics`] and [`LcPlacebo::diagnostics`].
 */
#define LC_DIAG_ESTIMATE_OUTSIDE_UNIT_INTERVAL (1 << 0)

#define LC_DIAG_CI_OUTSIDE_UNIT_INTERVAL (1 << 1)

#define LC_DIAG_DEGENERATE_CELL (1 << 2)

#define LC_DIAG_DIRECT_AT_BOUNDARY (1 << 3)

#define LC_DIAG_P_VALUE_FLOORED (1 << 4)

#define LC_DIAG_SMALL_SAMPLE (1 << 5)

typedef enum LcStatus {
  LC_STATUS_OK = 0,
  /**
   * A required pointer argument was null.
   */
  LC_STATUS_NULL_POINTER = 1,
  /**
   * An argument is outside its documented domain.
   */
  LC_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The data cannot support the requested computation (empty or
   * degenerate cells, every record excluded, ...).
   */
  LC_STATUS_DATA_ERROR = 3,
  /**
   * A file could not be read or parsed.
   */
  LC_STATUS_IO_ERROR = 4,
  /**
   * A bug in the library; the message carries the panic payload.
   */
  LC_STATUS_INTERNAL_ERROR = 5,
} LcStatus;

typedef enum LcMethod {
  LC_METHOD_DIRECT = 0,
  LC_METHOD_STANDARD_LIST = 1,
  LC_METHOD_COMBINED_LIST = 2,
} LcMethod;

typedef enum LcViolation {
  LC_VIOLATION_FALSE_CONFESSOR = 0,
  LC_VIOLATION_LIAR = 1,
  LC_VIOLATION_DESIGN_AFFECTED = 2,
} LcViolation;

/**
 * A validated dataset with its cell summary.
 */
typedef struct LcDataset LcDataset;

/**
 * Data-generating process parameters. Shares are fractions of the
 * "Yes"-answering stratum. `yes_count < 0` draws every respondent
 * independently; otherwise exactly `yes_count` respondents answer "Yes".
 */
typedef struct LcSimParams {
  double mu;
  double p_truthful;
  double gamma;
  uint32_t j_items;
  double w_success;
  double share_false_confessors;
  double share_liars;
  double share_design_affected;
  size_t n;
  int64_t yes_count;
} LcSimParams;

typedef struct LcEstimate {
  double estimate;
  double std_error;
  double ci_low;
  double ci_high;
  size_t n_used;
  uint32_t diagnostics;
} LcEstimate;

typedef struct LcPlacebo {
  /**
   * beta for Test I, delta for Test II.
   */
  double statistic;
  double std_error;
  double p_value;
  double null_value;
  size_t n_used;
  size_t n_treated;
  size_t n_control;
  uint32_t diagnostics;
} LcPlacebo;

typedef struct LcFisher {
  double statistic;
  uint32_t df;
  double p_value;
} LcFisher;

typedef struct LcPowerCell {
  size_t n_yes;
  double share_or_wsuccess;
  uint32_t replicates;
  double power;
  uint64_t seed;
} LcPowerCell;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Library version as a static NUL-terminated string.
 */
const char *lc_version(void);

/**
 * Message of the last failure on this thread, or null if none. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *lc_last_error_message(void);

/**
 * Builds a dataset from parallel arrays of direct answers, treatment
 * indicators and item counts. [`LC_MISSING`] marks a missing value; invalid
 * rows are excluded as by the CLI.
 *
 * # Safety
 * `y`, `z` and `v` must each point to `len` readable values; `out` must be
 * writable.
 */
enum LcStatus lc_dataset_from_arrays(const int32_t *y,
                                     const int32_t *z,
                                     const int32_t *v,
                                     size_t len,
                                     uint32_t j_items,
                                     struct LcDataset **out);

/**
 * Loads one question from a long-format CSV file. `question` may be null
 * when the file holds a single question (and study). `j_items = 0` infers
 * the list length from the counts.
 *
 * # Safety
 * `path` and a non-null `question` must be NUL-terminated strings; `out`
 * must be writable.
 */
enum LcStatus lc_dataset_from_csv(const char *path,
                                  const char *question,
                                  uint32_t j_items,
                                  struct LcDataset **out);

/**
 * Default parameters: compliant population, `gamma = 0.5`, `J = 4`,
 * `w_success = 0.4`, unconditional sampling.
 */
struct LcSimParams lc_sim_params_default(double mu, double p_truthful, size_t n);

/**
 * Generates a synthetic dataset; identical parameters and seed give an
 * identical dataset.
 *
 * # Safety
 * `params` must be readable and `out` writable.
 */
enum LcStatus lc_dataset_simulate(const struct LcSimParams *params,
                                  uint64_t seed,
                                  struct LcDataset **out);

/**
 * Releases a dataset. Null is ignored.
 *
 * # Safety
 * `ds` must come from an `lc_dataset_*` constructor and not be used again.
 */
void lc_dataset_free(struct LcDataset *ds);

/**
 * Number of retained and excluded records.
 *
 * # Safety
 * `ds` must be a live handle; the out-pointers must be writable.
 */
enum LcStatus lc_dataset_counts(const struct LcDataset *ds, size_t *retained, size_t *excluded);

/**
 * Point estimate, standard error and Wald interval at level `alpha`. The
 * combined estimator uses the default variance form.
 *
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum LcStatus lc_estimate(const struct LcDataset *ds,
                          enum LcMethod method,
                          double alpha_level,
                          struct LcEstimate *out);

/**
 * Share of the standard list estimator's sampling variance removed by the
 * combined estimator.
 *
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum LcStatus lc_variance_reduction(const struct LcDataset *ds, double *out);

/**
 * Placebo Test I: list difference among "Yes" respondents tested against 1.
 *
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum LcStatus lc_placebo_test_one(const struct LcDataset *ds, struct LcPlacebo *out);

/**
 * Placebo Test II: effect of the list treatment on direct answers.
 *
 * # Safety
 * `ds` must be a live handle and `out` writable.
 */
enum LcStatus lc_placebo_test_two(const struct LcDataset *ds, struct LcPlacebo *out);

/**
 * Fisher's combination of `len` independent p-values.
 *
 * # Safety
 * `p_values` must point to `len` readable doubles and `out` be writable.
 */
enum LcStatus lc_fisher_combine(const double *p_values, size_t len, struct LcFisher *out);

/**
 * Normal-approximation power of a two-sided two-sample proportion test.
 *
 * # Safety
 * `out` must be writable.
 */
enum LcStatus lc_two_prop_power(double p1,
                                double p0,
                                uint64_t n1,
                                uint64_t n0,
                                double alpha_level,
                                bool continuity_correction,
                                double *out);

/**
 * Simulated power of Placebo Test I for one grid cell: `n_yes` confessors
 * of which `share` commit `violation`, with control items drawn from
 * Binomial(4, `w_success`).
 *
 * # Safety
 * `out` must be writable.
 */
enum LcStatus lc_power_test_one_cell(size_t n_yes,
                                     enum LcViolation violation,
                                     double share,
                                     double w_success,
                                     uint32_t replicates,
                                     double alpha_level,
                                     uint64_t seed,
                                     struct LcPowerCell *out);

/**
 * Population value of the combined estimator's target: the prevalence when
 * no violations are active.
 *
 * # Safety
 * `params` must be readable and `out` writable.
 */
enum LcStatus lc_identification_oracle(const struct LcSimParams *params, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LISTCOMBINE_H */
