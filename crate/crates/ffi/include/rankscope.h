#ifndef RANKSCOPE_H
#define RANKSCOPE_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

/**
 * Status codes.
 */
typedef enum RsStatus {
  RS_STATUS_OK = 0,
  RS_STATUS_NULL_POINTER = 1,
  RS_STATUS_DIMENSION = 2,
  RS_STATUS_DUPLICATE_INDEX = 3,
  RS_STATUS_INDEX_OUT_OF_RANGE = 4,
  RS_STATUS_NUMERICAL_FAILURE = 5,
  RS_STATUS_INVALID_PARAMETER = 6,
  RS_STATUS_INFEASIBLE_CHAIN = 7,
  RS_STATUS_IO = 8,
  RS_STATUS_PARSE = 9,
  RS_STATUS_OTHER = 10,
  RS_STATUS_PANIC = 11,
} RsStatus;

/**
 * Result of a rank detector.
 */
typedef struct RsDecision RsDecision;

/**
 * Observed entries of a partially sampled matrix.
 */
typedef struct RsObservations RsObservations;

/**
 * Parameters of the variance-ratio detector. `b` is used when finite,
 * otherwise the threshold follows from `alpha`.
 */
typedef struct RsVarianceRatioParams {
  size_t r_max;
  size_t c;
  size_t steps;
  double b;
  double alpha;
  bool two_sided;
  bool rotate;
  size_t angles;
  uint64_t seed;
} RsVarianceRatioParams;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Owned by the
 * library; valid until the next call.
 */
const char *rs_last_error_message(void);

/**
 * Builds an observation set from `n` triplets (0-based indices).
 *
 * # Safety
 * The three arrays must hold `n` elements; `out` must be writable.
 */
enum RsStatus rs_observations_new(size_t rows,
                                  size_t cols,
                                  const size_t *row_idx,
                                  const size_t *col_idx,
                                  const double *values,
                                  size_t n,
                                  struct RsObservations **out);

/**
 * Reads an observations CSV (`# rows=R cols=C`, `i,j,value`).
 *
 * # Safety
 * `path` must be a nul-terminated string; `out` must be writable.
 */
enum RsStatus rs_observations_read(const char *path, struct RsObservations **out);

/**
 * Number of observed entries; 0 for a null handle.
 *
 * # Safety
 * `obs` must be null or a live handle.
 */
size_t rs_observations_len(const struct RsObservations *obs);

/**
 * # Safety
 * `obs` must be null or a handle not yet freed.
 */
void rs_observations_free(struct RsObservations *obs);

/**
 * Zero-filled SVD baseline with cumulative-fraction threshold `b`.
 *
 * # Safety
 * `obs` must be a live handle; `out` must be writable.
 */
enum RsStatus rs_detect_baseline(const struct RsObservations *obs,
                                 double b,
                                 struct RsDecision **out);

/**
 * Spectra averaged over `angles` rotations, top `n` values, threshold `b`.
 *
 * # Safety
 * `obs` must be a live handle; `out` must be writable.
 */
enum RsStatus rs_detect_averaged_rotations(const struct RsObservations *obs,
                                           size_t n,
                                           size_t angles,
                                           double b,
                                           struct RsDecision **out);

/**
 * Defaults: r_max 4, c 2, L 750, alpha 0.05, 20 angles, no rotation.
 */
struct RsVarianceRatioParams rs_variance_ratio_params_default(void);

/**
 * Variance-ratio rank test.
 *
 * # Safety
 * `obs` and `params` must be valid; `out` must be writable.
 */
enum RsStatus rs_detect_variance_ratio(const struct RsObservations *obs,
                                       const struct RsVarianceRatioParams *params,
                                       struct RsDecision **out);

/**
 * Estimated rank; 0 for a null handle.
 *
 * # Safety
 * `d` must be null or a live handle.
 */
size_t rs_decision_r_hat(const struct RsDecision *d);

/**
 * # Safety
 * `d` must be null or a live handle.
 */
bool rs_decision_inconclusive(const struct RsDecision *d);

/**
 * # Safety
 * `d` must be null or a live handle.
 */
double rs_decision_threshold(const struct RsDecision *d);

/**
 * Decision as JSON; free with `rs_string_free`. Null on failure.
 *
 * # Safety
 * `d` must be null or a live handle.
 */
char *rs_decision_json(const struct RsDecision *d);

/**
 * # Safety
 * `s` must be null or returned by `rs_decision_json`.
 */
void rs_string_free(char *s);

/**
 * # Safety
 * `d` must be null or a handle not yet freed.
 */
void rs_decision_free(struct RsDecision *d);

/**
 * Upper critical value `1 + z_{1-alpha} sqrt((c+2)/(2cL))`.
 *
 * # Safety
 * `out` must be writable.
 */
enum RsStatus rs_threshold(size_t c, size_t steps, double alpha, double *out);

/**
 * Macro-F1 over `f1_classes` from a confusion matrix with one row per true
 * count (`counts` is `n_true x n_classes`, row-major). `trials[i]` is the
 * row total including inconclusive trials.
 *
 * # Safety
 * Arrays must hold the stated number of elements; `out` must be writable.
 */
enum RsStatus rs_macro_f1(const size_t *true_counts,
                          size_t n_true,
                          const size_t *classes,
                          size_t n_classes,
                          const uint64_t *counts,
                          const uint64_t *trials,
                          const size_t *f1_classes,
                          size_t n_f1,
                          double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RANKSCOPE_H */
