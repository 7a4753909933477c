#ifndef EDSL_H
#define EDSL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Schedule selector for `EdslRunSettings::schedule`.
 */
#define EDSL_SCHEDULE_PRACTICAL 0

#define EDSL_SCHEDULE_FIXED 1

/**
 * Outcome of a call. Nonzero values match the command-line exit codes.
 */
typedef enum EdslStatus {
  EDSL_OK = 0,
  EDSL_NULL_POINTER = 1,
  EDSL_CONFIG_ERROR = 2,
  EDSL_DATA_ERROR = 3,
  EDSL_NUMERIC_ERROR = 4,
  EDSL_TRANSPORT_ERROR = 5,
  EDSL_PANIC = 6,
} EdslStatus;

/**
 * Shards plus, for generated data, the true parameter.
 */
typedef struct EdslDataset EdslDataset;

/**
 * Per-round iterates and costs of a run.
 */
typedef struct EdslTrace EdslTrace;

typedef struct EdslRunSettings {
  /**
   * `EDSL_SCHEDULE_PRACTICAL` or `EDSL_SCHEDULE_FIXED`.
   */
  uint32_t schedule;
  /**
   * Practical scale; a value <= 0 selects twice the estimated noise level.
   */
  double c;
  /**
   * Practical decay in (0, 1].
   */
  double decay;
  /**
   * Level for the fixed schedule.
   */
  double lambda;
  double tol;
  size_t max_iter;
} EdslRunSettings;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer
 * stays valid until the next failing call on the same thread.
 */
const char *edsl_last_error(void);

/**
 * Synthetic data with a Toeplitz design (`ill` != 0 selects the slowly
 * decaying covariance).
 */
enum EdslStatus edsl_dataset_generate(size_t n_per_machine,
                                      size_t p,
                                      size_t m,
                                      size_t s,
                                      int32_t ill,
                                      int32_t classification,
                                      double noise_sigma,
                                      uint64_t seed,
                                      struct EdslDataset **out);

/**
 * Builds a dataset from caller memory: `xs` holds `m * n * p` values,
 * machine by machine, each machine's rows in row-major order; `ys` holds
 * `m * n` responses in the same order.
 *
 * # Safety
 * `xs` and `ys` must point to at least `m * n * p` and `m * n` readable doubles.
 */
enum EdslStatus edsl_dataset_from_arrays(const double *xs,
                                         const double *ys,
                                         size_t m,
                                         size_t n,
                                         size_t p,
                                         int32_t classification,
                                         struct EdslDataset **out);

/**
 * # Safety
 * `dataset` must be null or a handle from this library not yet freed.
 */
void edsl_dataset_free(struct EdslDataset *dataset);

/**
 * Number of machines, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t edsl_dataset_machines(const struct EdslDataset *dataset);

/**
 * Dimension p, or 0 for a null handle.
 *
 * # Safety
 * `dataset` must be null or a live handle.
 */
size_t edsl_dataset_dim(const struct EdslDataset *dataset);

/**
 * Copies the true parameter into `out` (`len` must equal p). Fails for
 * datasets built from arrays.
 *
 * # Safety
 * `dataset` must be a live handle and `out` must hold `len` writable doubles.
 */
enum EdslStatus edsl_dataset_truth(const struct EdslDataset *dataset, double *out, size_t len);

/**
 * Practical schedule with automatic scale, default solver tolerances.
 */
struct EdslRunSettings edsl_settings_default(void);

/**
 * Runs `rounds` rounds of the protocol with workers on local threads.
 *
 * # Safety
 * `dataset` must be a live handle, `settings` readable, `out` writable.
 */
enum EdslStatus edsl_run(const struct EdslDataset *dataset,
                         const struct EdslRunSettings *settings,
                         uint32_t rounds,
                         struct EdslTrace **out);

/**
 * # Safety
 * `trace` must be null or a handle from this library not yet freed.
 */
void edsl_trace_free(struct EdslTrace *trace);

/**
 * Number of recorded rounds (round 0 included), or 0 for a null handle.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
size_t edsl_trace_len(const struct EdslTrace *trace);

/**
 * Copies the iterate of `round` into `out` (`len` must equal p).
 *
 * # Safety
 * `trace` must be a live handle and `out` must hold `len` writable doubles.
 */
enum EdslStatus edsl_trace_beta(const struct EdslTrace *trace,
                                size_t round,
                                double *out,
                                size_t len);

/**
 * Regularization level used in `round`; NaN if unavailable.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
double edsl_trace_lambda(const struct EdslTrace *trace, size_t round);

/**
 * l2 distance to the truth after `round`; NaN when unknown.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
double edsl_trace_l2_error(const struct EdslTrace *trace, size_t round);

/**
 * l1 distance to the truth after `round`; NaN when unknown.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
double edsl_trace_l1_error(const struct EdslTrace *trace, size_t round);

/**
 * Payload bytes exchanged in `round`; 0 if unavailable.
 *
 * # Safety
 * `trace` must be null or a live handle.
 */
uint64_t edsl_trace_payload_bytes(const struct EdslTrace *trace, size_t round);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* EDSL_H */
