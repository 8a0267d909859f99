#ifndef CAUSAL_ADAPT_H
#define CAUSAL_ADAPT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CaStatus {
  CA_STATUS_OK = 0,
  CA_STATUS_NULL_POINTER = 1,
  CA_STATUS_INVALID_INPUT = 2,
  CA_STATUS_DOMAIN = 3,
  CA_STATUS_DIVERGED = 4,
  CA_STATUS_IO = 5,
  /**
   * Output buffer too small; the required length was written back.
   */
  CA_STATUS_BUFFER_TOO_SMALL = 6,
  CA_STATUS_PANIC = 7,
} CaStatus;

typedef enum CaInterventionKind {
  CA_INTERVENTION_KIND_BIAS = 0,
  CA_INTERVENTION_KIND_CAUSE = 1,
  CA_INTERVENTION_KIND_BIAS_AND_CAUSE = 2,
  CA_INTERVENTION_KIND_EFFECT = 3,
} CaInterventionKind;

typedef struct CaAntiCausalParams CaAntiCausalParams;

typedef struct CaCausalParams CaCausalParams;

typedef struct CaRandomSource CaRandomSource;

typedef struct CaTransferPair CaTransferPair;

typedef struct CaAdaptationConfig {
  size_t steps;
  double learning_rate;
  size_t batch_size;
  size_t kl_every;
} CaAdaptationConfig;

typedef struct CaPropositionReport {
  size_t trials;
  size_t violations;
  double max_violation;
  double closed_form_max_residual;
  size_t anticausal_closer;
  size_t causal_closer;
  bool formula_discrepancy;
} CaPropositionReport;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread, NUL-terminated and
 * truncated to `capacity`. Returns the full message length (without NUL),
 * or 0 when there is none.
 *
 * # Safety
 * `buf` must be valid for `capacity` bytes or null.
 */
size_t ca_last_error_message(char *buf, size_t capacity);

/**
 * # Safety
 * `out` must be a valid pointer.
 */
enum CaStatus ca_random_source_new(uint64_t seed, uint64_t stream, struct CaRandomSource **out);

/**
 * # Safety
 * `rng` must come from `ca_random_source_new` or be null.
 */
void ca_random_source_free(struct CaRandomSource *rng);

/**
 * Softmax of `k` scores into `out`.
 *
 * # Safety
 * `scores` and `out` must hold `k` doubles.
 */
enum CaStatus ca_softmax(const double *scores, size_t k, double *out);

/**
 * `KL(p || q)` of two categorical laws over `k` classes.
 *
 * # Safety
 * `p` and `q` must hold `k` doubles; `out` must be valid.
 */
enum CaStatus ca_kl_categorical(const double *p, const double *q, size_t k, double *out);

/**
 * `KL(p* || q)` of two joint tables of `k^3` entries indexed `(a*k + x)*k + y`.
 *
 * # Safety
 * `p_star` and `q` must hold `k^3` doubles; `out` must be valid.
 */
enum CaStatus ca_kl_joint(const double *p_star, const double *q, size_t k, double *out);

/**
 * Synthetic Dirichlet(1) causal prior.
 *
 * # Safety
 * `rng` must be a live handle; `out` must be valid.
 */
enum CaStatus ca_synthetic_prior(size_t k, struct CaRandomSource *rng, struct CaCausalParams **out);

/**
 * Causal parameters from conditional probability tables: `root` holds `k`,
 * `mid` holds `k*k` (`p(x|a)` at `a*k + x`), `leaf` holds `k^3`
 * (`p(y|a,x)` at `(a*k + x)*k + y`).
 *
 * # Safety
 * Buffers must hold the stated number of doubles; `out` must be valid.
 */
enum CaStatus ca_causal_params_from_probabilities(size_t k,
                                                  const double *root,
                                                  const double *mid,
                                                  const double *leaf,
                                                  struct CaCausalParams **out);

/**
 * # Safety
 * `params` must be a live handle or null.
 */
size_t ca_causal_params_k(const struct CaCausalParams *params);

/**
 * # Safety
 * `params` must come from this library or be null.
 */
void ca_causal_params_free(struct CaCausalParams *params);

/**
 * # Safety
 * `params` must come from this library or be null.
 */
void ca_anticausal_params_free(struct CaAntiCausalParams *params);

/**
 * Anti-causal parameters describing the same joint.
 *
 * # Safety
 * `params` must be a live handle; `out` must be valid.
 */
enum CaStatus ca_reverse_factorization(const struct CaCausalParams *params,
                                       struct CaAntiCausalParams **out);

/**
 * Writes the `k^3` joint table into `out` and its length into `required`.
 *
 * # Safety
 * `out` must hold `capacity` doubles; `required` may be null.
 */
enum CaStatus ca_causal_assemble(const struct CaCausalParams *params,
                                 double *out,
                                 size_t capacity,
                                 size_t *required);

/**
 * # Safety
 * As for [`ca_causal_assemble`].
 */
enum CaStatus ca_anticausal_assemble(const struct CaAntiCausalParams *params,
                                     double *out,
                                     size_t capacity,
                                     size_t *required);

/**
 * Draws replacement marginals from `rng` and builds the matched
 * reference/transfer pair.
 *
 * # Safety
 * `reference` and `rng` must be live handles; `out` must be valid.
 */
enum CaStatus ca_transfer_pair_new(enum CaInterventionKind kind,
                                   const struct CaCausalParams *reference,
                                   struct CaRandomSource *rng,
                                   struct CaTransferPair **out);

/**
 * # Safety
 * `pair` must come from this library or be null.
 */
void ca_transfer_pair_free(struct CaTransferPair *pair);

/**
 * Initial squared score distances of both models.
 *
 * # Safety
 * `pair` must be a live handle; outputs must be valid.
 */
enum CaStatus ca_transfer_pair_deltas(const struct CaTransferPair *pair,
                                      double *delta_causal,
                                      double *delta_anticausal);

/**
 * Adapts both models of `pair`. KL at every recorded step is written to
 * `kl_causal` and `kl_anticausal`; `required` receives the step count.
 *
 * # Safety
 * `pair` and `rng` must be live handles; buffers must hold `capacity`
 * doubles; `required` may be null.
 */
enum CaStatus ca_adapt_pair(const struct CaTransferPair *pair,
                            struct CaAdaptationConfig config,
                            const struct CaRandomSource *rng,
                            double *kl_causal,
                            double *kl_anticausal,
                            size_t capacity,
                            size_t *required);

/**
 * Runs the distance-relation check for `kind` over `trials` synthetic trials.
 *
 * # Safety
 * `out` must be valid.
 */
enum CaStatus ca_check_proposition(enum CaInterventionKind kind,
                                   size_t trials,
                                   size_t k,
                                   uint64_t seed,
                                   struct CaPropositionReport *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CAUSAL_ADAPT_H */
