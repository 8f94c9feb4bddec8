#ifndef NETRECON_H
#define NETRECON_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of a fallible call.
 */
typedef enum {
  NR_STATUS_OK = 0,
  NR_STATUS_PARSE = 1,
  NR_STATUS_DOMAIN = 2,
  NR_STATUS_SHAPE = 3,
  NR_STATUS_UNSUPPORTED = 4,
  NR_STATUS_MODEL = 5,
  NR_STATUS_CONFIG = 6,
  NR_STATUS_DEGENERATE_LIKELIHOOD = 7,
  NR_STATUS_SAMPLER = 8,
  NR_STATUS_IO = 9,
  NR_STATUS_NULL_POINTER = 10,
  NR_STATUS_INVALID_ARGUMENT = 11,
  NR_STATUS_BUFFER_TOO_SMALL = 12,
  NR_STATUS_PANIC = 13,
} NrStatus;

/**
 * Parsed pair measurements.
 */
typedef struct NrData NrData;

/**
 * Posterior parameter draws.
 */
typedef struct NrDraws NrDraws;

/**
 * A model bound to the node set of an `NrData`.
 */
typedef struct NrModel NrModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the most recent failure on this thread; empty if none. Valid until the next
 * failing call on the same thread.
 */
const char *nr_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *nr_version(void);

/**
 * Parses `label_i,label_j,count[,reverse][,trials]` text (comma or whitespace delimited).
 *
 * # Safety
 * `text` must be a NUL-terminated string; `out` must be writable.
 */
NrStatus nr_data_parse(const char *text, bool directed, bool trials, NrData **out);

/**
 * # Safety
 * `data` must be null or a handle from [`nr_data_parse`] not yet freed.
 */
void nr_data_free(NrData *data);

/**
 * Number of nodes; 0 for a null handle.
 *
 * # Safety
 * `data` must be null or a live handle.
 */
size_t nr_data_node_count(const NrData *data);

/**
 * Builds a model from a JSON specification, e.g. `{"data":"poisson","edge_types":3}`.
 *
 * # Safety
 * `spec_json` must be NUL-terminated; `data` a live handle; `out` writable.
 */
NrStatus nr_model_new(const char *spec_json, const NrData *data, NrModel **out);

/**
 * # Safety
 * `model` must be null or a live handle.
 */
void nr_model_free(NrModel *model);

/**
 * Length of the flat parameter vector; 0 for a null handle.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
size_t nr_model_param_count(const NrModel *model);

/**
 * Name of parameter `index`, owned by the model; null when out of range.
 *
 * # Safety
 * `model` must be null or a live handle.
 */
const char *nr_model_param_name(const NrModel *model, size_t index);

/**
 * `log P(theta) + Σ_pairs log Σ_k mu nu`; `-inf` outside the domain.
 *
 * # Safety
 * Handles must be live; `theta` must point to `len` values; `out` writable.
 */
NrStatus nr_log_marginal_posterior(const NrModel *model,
                                   const NrData *data,
                                   const double *theta,
                                   size_t len,
                                   double *out);

/**
 * `Q_ij(k | theta)` for `k = 0..K-1` into `out` (length >= K).
 *
 * # Safety
 * Handles must be live; `theta` must point to `len` values; `out` to `out_len` values.
 */
NrStatus nr_edge_posterior(const NrModel *model,
                           const NrData *data,
                           const double *theta_values,
                           size_t len,
                           size_t i,
                           size_t j,
                           double *out,
                           size_t out_len);

/**
 * Samples parameters. `settings_json` may be null for defaults, e.g. `{"chains":2,"seed":7}`.
 *
 * # Safety
 * Handles must be live; `settings_json` null or NUL-terminated; `out` writable.
 */
NrStatus nr_sample(const NrModel *model,
                   const NrData *data,
                   const char *settings_json,
                   NrDraws **out);

/**
 * # Safety
 * `draws` must be null or a live handle.
 */
void nr_draws_free(NrDraws *draws);

/**
 * Number of retained draws over all chains; 0 for a null handle.
 *
 * # Safety
 * `draws` must be null or a live handle.
 */
size_t nr_draws_len(const NrDraws *draws);

/**
 * Parameter values of draw `index` (chain-major order).
 *
 * # Safety
 * `draws` must be live; `out` must point to `out_len` values.
 */
NrStatus nr_draws_values(const NrDraws *draws, size_t index, double *out, size_t out_len);

/**
 * Posterior mean of every parameter.
 *
 * # Safety
 * `draws` must be live; `out` must point to `out_len` values.
 */
NrStatus nr_draws_mean(const NrDraws *draws, double *out, size_t out_len);

/**
 * Posterior edge-type probabilities: `n(n-1)/2 * K` values, pairs in row-major order.
 *
 * # Safety
 * Handles must be live; `out` must point to `out_len` values.
 */
NrStatus nr_edge_probabilities(const NrModel *model,
                               const NrData *data,
                               const NrDraws *draws,
                               double *out,
                               size_t out_len);

/**
 * Posterior-predictive p-value and R². `r_squared` is NaN for constant data.
 *
 * # Safety
 * Handles must be live; `p_value` and `r_squared` writable.
 */
NrStatus nr_ppc(const NrModel *model,
                const NrData *data,
                const NrDraws *draws,
                uint64_t seed,
                double *p_value,
                double *r_squared);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* NETRECON_H */
