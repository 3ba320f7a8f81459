#ifndef COCYCLE_LAB_H
#define COCYCLE_LAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum CocycleStatus {
  COCYCLE_STATUS_OK = 0,
  COCYCLE_STATUS_NULL_POINTER = 1,
  COCYCLE_STATUS_INVALID_ARGUMENT = 2,
  COCYCLE_STATUS_DOMAIN = 3,
  COCYCLE_STATUS_UNSUPPORTED = 4,
  COCYCLE_STATUS_PRECONDITION = 5,
  COCYCLE_STATUS_NUMERICAL = 6,
  COCYCLE_STATUS_PANIC = 7,
} CocycleStatus;

/**
 * A rotation frequency.
 */
typedef struct CocycleFrequency CocycleFrequency;

/**
 * A potential on the circle.
 */
typedef struct CocyclePotential CocyclePotential;

/**
 * Result of the reduction pipeline.
 */
typedef struct CocycleReduction CocycleReduction;

/**
 * Lyapunov exponent with its dispersion.
 */
typedef struct CocycleLe {
  double value;
  double std_error;
  double convergence_gap;
} CocycleLe;

/**
 * One row of the reduction ledger.
 */
typedef struct CocycleLedgerRow {
  size_t step;
  double norm_phi_drift;
  double norm_z;
  double norm_f;
  double residual;
} CocycleLedgerRow;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or NULL. The pointer is
 * valid until the next call into this library on the same thread.
 */
const char *cocycle_last_error(void);

/**
 * `K / (1 + 4 lambda sin^2(pi x))`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CocycleStatus cocycle_potential_new_poisson_peak(double height,
                                                      double lambda,
                                                      struct CocyclePotential **out);

/**
 * Smooth bump of height `K` supported on `(lo, hi)`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CocycleStatus cocycle_potential_new_peaky_bump(double lo,
                                                    double hi,
                                                    double height,
                                                    double sharpness,
                                                    struct CocyclePotential **out);

/**
 * Constant potential; `0` gives the free cocycle.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CocycleStatus cocycle_potential_new_constant(double value, struct CocyclePotential **out);

/**
 * Value of the potential at `x`.
 *
 * # Safety
 * `v` must be a live handle; `out` must be writable.
 */
enum CocycleStatus cocycle_potential_eval(const struct CocyclePotential *v, double x, double *out);

/**
 * # Safety
 * `v` must be NULL or a handle not yet freed.
 */
void cocycle_potential_free(struct CocyclePotential *v);

/**
 * Reduced fraction `p/q`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CocycleStatus cocycle_frequency_new_rational(uint64_t p,
                                                  uint64_t q,
                                                  struct CocycleFrequency **out);

/**
 * Irrational frequency with continued-fraction denominators up to `cap`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CocycleStatus cocycle_frequency_new_irrational(double value,
                                                    uint64_t cap,
                                                    struct CocycleFrequency **out);

/**
 * `(sqrt(5) - 1)/2`.
 *
 * # Safety
 * `out` must be a valid pointer to writable storage for one handle.
 */
enum CocycleStatus cocycle_frequency_new_golden(struct CocycleFrequency **out);

/**
 * # Safety
 * `f` must be NULL or a handle not yet freed.
 */
void cocycle_frequency_free(struct CocycleFrequency *f);

/**
 * Lyapunov exponent of `(alpha, S_{E - V})` on the circle `Im x = nu`.
 *
 * # Safety
 * `v` and `alpha` must be live handles; `out` must be writable.
 */
enum CocycleStatus cocycle_le_estimate(const struct CocyclePotential *v,
                                       double energy,
                                       double nu,
                                       const struct CocycleFrequency *alpha,
                                       size_t n,
                                       size_t phases,
                                       uint64_t seed,
                                       struct CocycleLe *out);

/**
 * Fibered rotation number in `[0, 1/2]`.
 *
 * # Safety
 * `v` and `alpha` must be live handles; `out` must be writable.
 */
enum CocycleStatus cocycle_rotation_number(const struct CocyclePotential *v,
                                           double energy,
                                           const struct CocycleFrequency *alpha,
                                           size_t n,
                                           double *out);

/**
 * Subharmonic lower bound on the exponent of the analytic peak, `|E| > 2`.
 *
 * # Safety
 * `out` must be writable.
 */
enum CocycleStatus cocycle_herman_bound(double height, double lambda, double energy, double *out);

/**
 * Closed-form trace of the q-step product at a rational frequency.
 *
 * # Safety
 * `v` must be a live handle; `out` must be writable.
 */
enum CocycleStatus cocycle_qstep_trace(const struct CocyclePotential *v,
                                       double energy,
                                       uint64_t q,
                                       double x,
                                       double *out);

/**
 * Whether `|alpha - k/l| >= eta / l^sigma` holds for all `l <= cap`.
 *
 * # Safety
 * `alpha` must be a live handle; `out` must be writable.
 */
enum CocycleStatus cocycle_dc1_member(const struct CocycleFrequency *alpha,
                                      double eta,
                                      double sigma,
                                      uint64_t cap,
                                      bool *out);

/**
 * Conjugates `(alpha, S_{E - V})` towards a constant rotation using the
 * exact normal form at `p/q`, `j_max` inductive steps and default options.
 *
 * # Safety
 * `v` and `alpha` must be live handles; `out` must be writable.
 */
enum CocycleStatus cocycle_reduce(const struct CocyclePotential *v,
                                  double energy,
                                  const struct CocycleFrequency *alpha,
                                  uint64_t p,
                                  uint64_t q,
                                  size_t j_max,
                                  double tolerance,
                                  struct CocycleReduction **out);

/**
 * Final conjugacy residual on the construction grid.
 *
 * # Safety
 * `r` must be a live handle; `out` must be writable.
 */
enum CocycleStatus cocycle_reduction_residual(const struct CocycleReduction *r, double *out);

/**
 * Angle of the constant rotation reached.
 *
 * # Safety
 * `r` must be a live handle; `out` must be writable.
 */
enum CocycleStatus cocycle_reduction_angle(const struct CocycleReduction *r, double *out);

/**
 * Number of ledger rows (initial state plus one per step).
 *
 * # Safety
 * `r` must be NULL or a live handle.
 */
size_t cocycle_reduction_ledger_len(const struct CocycleReduction *r);

/**
 * # Safety
 * `r` must be a live handle; `out` must be writable.
 */
enum CocycleStatus cocycle_reduction_ledger_row(const struct CocycleReduction *r,
                                                size_t index,
                                                struct CocycleLedgerRow *out);

/**
 * # Safety
 * `r` must be NULL or a handle not yet freed.
 */
void cocycle_reduction_free(struct CocycleReduction *r);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* COCYCLE_LAB_H */
