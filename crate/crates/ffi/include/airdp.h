#ifndef AIRDP_H
#define AIRDP_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AirdpStatus {
  AIRDP_STATUS_OK = 0,
  AIRDP_STATUS_NULL_POINTER = 1,
  AIRDP_STATUS_INVALID_ARGUMENT = 2,
  /**
   * The participant count cannot be concentrated at the requested delta'.
   */
  AIRDP_STATUS_INFEASIBLE = 3,
  AIRDP_STATUS_CONFIG = 4,
  /**
   * The trainer has already run every configured round.
   */
  AIRDP_STATUS_DONE = 5,
  AIRDP_STATUS_INTERNAL = 6,
} AirdpStatus;

/**
 * Opaque training run.
 */
typedef struct AirdpTrainer AirdpTrainer;

/**
 * Per-user mechanism parameters.
 */
typedef struct AirdpMechanism {
  double lipschitz;
  double sigma_min;
  double delta_local;
  double n0;
} AirdpMechanism;

typedef struct AirdpBudget {
  double epsilon;
  double delta;
} AirdpBudget;

typedef struct AirdpProblem {
  double strong_convexity;
  double smoothness;
  double lipschitz;
  size_t dimension;
  double noise_var_max;
  double n0;
} AirdpProblem;

/**
 * One training-trace row.
 */
typedef struct AirdpTraceRow {
  size_t t;
  double loss;
  double gap;
  double eps_local_max;
  double eps_central;
  double eps_central_total;
  double delta_central_total;
  size_t participants;
  double effective_noise_var;
} AirdpTraceRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. Valid until the next call.
 */
const char *airdp_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *airdp_version(void);

/**
 * Central budget of one round when all `users` sample with probability `p`.
 */
enum AirdpStatus airdp_central_epsilon_uniform(double p,
                                               size_t users,
                                               const struct AirdpMechanism *mech,
                                               double delta_prime,
                                               struct AirdpBudget *result);

/**
 * Central budget of one round for per-user probabilities `p[0..users]`.
 */
enum AirdpStatus airdp_central_epsilon_nonuniform(const double *p,
                                                  size_t users,
                                                  const struct AirdpMechanism *mech,
                                                  double delta_prime,
                                                  struct AirdpBudget *result);

/**
 * Per-user local epsilon for a given amplification count `kappa`; negative kappa is clamped to 0.
 */
enum AirdpStatus airdp_local_epsilon(const struct AirdpMechanism *mech,
                                     double kappa,
                                     bool include_n0,
                                     double *epsilon);

enum AirdpStatus airdp_optimal_sampling_probability(size_t users, double delta_prime, double *p);

/**
 * Composition of `rounds` identical per-round budgets.
 */
enum AirdpStatus airdp_compose_homogeneous(struct AirdpBudget round,
                                           size_t rounds,
                                           double delta_tilde,
                                           struct AirdpBudget *result);

/**
 * Convergence bound for uniform participation; `known_set` selects the
 * known-participant estimator (exact inverse moments).
 */
enum AirdpStatus airdp_convergence_bound(const struct AirdpProblem *problem,
                                         size_t users,
                                         double p,
                                         size_t rounds,
                                         bool known_set,
                                         double *bound);

/**
 * Creates a trainer from a JSON training configuration for trial `trial`.
 */
enum AirdpStatus airdp_trainer_new(const char *config_json,
                                   uint64_t trial,
                                   struct AirdpTrainer **trainer);

/**
 * Runs one round. Returns `AIRDP_STATUS_DONE` once every configured round has run.
 */
enum AirdpStatus airdp_trainer_step(struct AirdpTrainer *trainer, struct AirdpTraceRow *row);

/**
 * Copies the current model into `weights[0..len]`; `needed` receives the model dimension.
 * With a too-small buffer nothing is copied and `AIRDP_STATUS_INVALID_ARGUMENT` is returned.
 */
enum AirdpStatus airdp_trainer_weights(const struct AirdpTrainer *trainer,
                                       double *weights,
                                       size_t len,
                                       size_t *needed);

void airdp_trainer_free(struct AirdpTrainer *trainer);

/**
 * Runs a CLI subcommand in memory and returns its primary CSV table.
 *
 * `config_json` and `preset` may each be NULL, but not both. The CSV is
 * returned in `*csv` and must be released with [`airdp_string_free`].
 * An all-infeasible sweep still yields the CSV but returns `AIRDP_STATUS_INFEASIBLE`.
 */
enum AirdpStatus airdp_run_experiment(const char *command,
                                      const char *config_json,
                                      const char *preset,
                                      const uint64_t *seed,
                                      char **csv);

/**
 * Releases a string returned by this library. NULL is ignored.
 */
void airdp_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AIRDP_H */
