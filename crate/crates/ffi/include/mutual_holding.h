#ifndef MUTUAL_HOLDING_H
#define MUTUAL_HOLDING_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum MhEnsembleKind {
  MH_ENSEMBLE_KIND_EQUILIBRIUM = 0,
  MH_ENSEMBLE_KIND_PROVISIONS = 1,
  MH_ENSEMBLE_KIND_N_PLAYER = 2,
} MhEnsembleKind;

typedef enum MhStatus {
  MH_STATUS_OK = 0,
  MH_STATUS_NULL_POINTER = 1,
  MH_STATUS_INVALID_ARGUMENT = 2,
  MH_STATUS_NUMERICAL = 3,
  MH_STATUS_PANIC = 4,
} MhStatus;

/**
 * Opaque simulated ensemble.
 */
typedef struct MhEnsemble MhEnsemble;

/**
 * Opaque provisions model.
 */
typedef struct MhModel MhModel;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread (empty after a success).
 * The pointer stays valid until the next call into this library.
 */
const char *mh_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *mh_version(void);

/**
 * OU provisions `b = theta (mbar - x)`, `sigma = sigbar`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum MhStatus mh_model_ou(double theta, double mbar, double sigbar, struct MhModel **out);

/**
 * Constant drift `b0` and volatility `sig0`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum MhStatus mh_model_constant(double b0, double sig0, struct MhModel **out);

/**
 * Declares `|b| <= bound` on the model.
 *
 * # Safety
 * `model` must come from a `mh_model_*` constructor.
 */
enum MhStatus mh_model_set_drift_bound(struct MhModel *model, double bound);

/**
 * # Safety
 * `model` must come from a `mh_model_*` constructor, or be null.
 */
void mh_model_free(struct MhModel *model);

/**
 * Threshold for drift values `b` with weights `w` (uniform when null).
 *
 * # Safety
 * `b` (and `w` when non-null) must point to `n` doubles.
 */
enum MhStatus mh_solve_threshold(const double *b,
                                 const double *w,
                                 size_t n,
                                 double tol,
                                 double *out_c,
                                 double *out_residual);

/**
 * Threshold for an OU model started from `N(mu_mean, mu_var)`.
 *
 * # Safety
 * `out_c` must be a valid pointer.
 */
enum MhStatus mh_solve_threshold_gaussian_ou(double theta,
                                             double mbar,
                                             double mu_mean,
                                             double mu_var,
                                             double tol,
                                             double *out_c);

/**
 * Equilibrium fields on the atoms of a measure. `weights` may be null.
 * `out_drift`, `out_vol` and `out_holding` receive `n` entries each.
 *
 * # Safety
 * All non-null array pointers must hold `n` elements.
 */
enum MhStatus mh_equilibrium_fields(const struct MhModel *model,
                                    double t,
                                    const double *atoms,
                                    const double *weights,
                                    size_t n,
                                    double tol,
                                    double *out_c,
                                    double *out_drift,
                                    double *out_vol,
                                    uint8_t *out_holding);

/**
 * W2 distance between two atomic measures; null weights mean uniform.
 *
 * # Safety
 * Arrays must hold `n1` and `n2` elements respectively.
 */
enum MhStatus mh_wasserstein2(const double *atoms1,
                              const double *weights1,
                              size_t n1,
                              const double *atoms2,
                              const double *weights2,
                              size_t n2,
                              double *out);

/**
 * Simulates an ensemble started from `N(initial_mean, initial_var)`, or
 * from a point mass when `initial_var <= 0`. `threads = 0` uses the
 * default pool; results do not depend on it.
 *
 * # Safety
 * `model` must be a live handle and `out` a valid handle slot.
 */
enum MhStatus mh_simulate(const struct MhModel *model,
                          enum MhEnsembleKind kind,
                          size_t n_particles,
                          size_t n_steps,
                          double horizon,
                          uint64_t seed,
                          double initial_mean,
                          double initial_var,
                          size_t threads,
                          struct MhEnsemble **out);

/**
 * # Safety
 * `ensemble` must be a live handle; output pointers valid.
 */
enum MhStatus mh_ensemble_dims(const struct MhEnsemble *ensemble,
                               size_t *out_particles,
                               size_t *out_steps);

/**
 * Copies the cross-section at time index `k` (0..=steps) into `out`,
 * which must hold `n_particles` doubles.
 *
 * # Safety
 * `ensemble` must be a live handle and `out` hold `len` doubles.
 */
enum MhStatus mh_ensemble_states(const struct MhEnsemble *ensemble,
                                 size_t k,
                                 double *out,
                                 size_t len);

/**
 * Per-step thresholds; `out` must hold `steps` doubles. Provisions
 * ensembles have none and report `*out_len = 0`.
 *
 * # Safety
 * `ensemble` must be a live handle and `out` hold `len` doubles.
 */
enum MhStatus mh_ensemble_thresholds(const struct MhEnsemble *ensemble,
                                     double *out,
                                     size_t len,
                                     size_t *out_len);

/**
 * # Safety
 * `ensemble` must be a live handle or null.
 */
void mh_ensemble_free(struct MhEnsemble *ensemble);

/**
 * Finite-N coefficients for the row-major holding matrix `gamma` (`n*n`).
 * `out_drift` receives `n` entries, `out_diffusion` `n*n` row-major.
 *
 * # Safety
 * Array pointers must hold the stated number of elements.
 */
enum MhStatus mh_game_coefficients(const double *gamma,
                                   size_t n,
                                   const double *b,
                                   const double *sigma,
                                   double *out_drift,
                                   double *out_diffusion);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MUTUAL_HOLDING_H */
