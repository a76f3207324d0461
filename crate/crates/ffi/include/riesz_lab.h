#ifndef RIESZ_LAB_H
#define RIESZ_LAB_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes.
 */
typedef enum RlStatus {
  RL_STATUS_OK = 0,
  RL_STATUS_PARAMETER = 1,
  RL_STATUS_REGIME = 2,
  RL_STATUS_SINGULAR = 3,
  RL_STATUS_DOMAIN = 4,
  RL_STATUS_RESOLUTION = 5,
  RL_STATUS_RANGE = 6,
  RL_STATUS_WINDOW = 7,
  RL_STATUS_COVERAGE = 8,
  RL_STATUS_CONVERGENCE = 9,
  RL_STATUS_REPLICA = 10,
  RL_STATUS_CONFIG = 11,
  RL_STATUS_IO = 12,
  RL_STATUS_NULL_POINTER = 13,
  RL_STATUS_PANIC = 14,
} RlStatus;

/**
 * Opaque path handle.
 */
typedef struct RlPath RlPath;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or point to `len` writable bytes.
 */
size_t rl_last_error_message(char *buf, size_t len);

/**
 * Samples a path on `n` uniform steps of `[0, t]` from lane `(seed, stream)`.
 *
 * # Safety
 * `out` must be a valid pointer to a handle slot.
 */
enum RlStatus rl_path_sample(size_t d,
                             double beta,
                             double t,
                             size_t n,
                             uint64_t seed,
                             uint64_t stream,
                             struct RlPath **out);

/**
 * Releases a path handle; null is ignored.
 *
 * # Safety
 * `path` must come from [`rl_path_sample`] and not be used afterwards.
 */
void rl_path_free(struct RlPath *path);

/**
 * Number of steps of a path (0 for null).
 *
 * # Safety
 * `path` must be null or a live handle.
 */
size_t rl_path_steps(const struct RlPath *path);

/**
 * Copies coordinate `axis` of the `steps + 1` samples into `buf`.
 *
 * # Safety
 * `path` must be a live handle and `buf` must hold `len` doubles.
 */
enum RlStatus rl_path_coordinates(const struct RlPath *path, size_t axis, double *buf, size_t len);

/**
 * Riemann estimate of `η([0,t]²_<)` on the path.
 *
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum RlStatus rl_eta(const struct RlPath *path, double sigma, bool mean_correction, double *out);

/**
 * Exact `E η([0,t]²_<)`.
 *
 * # Safety
 * `out` must be writable.
 */
enum RlStatus rl_mean_eta(size_t d, double beta, double sigma, double t, double *out);

/**
 * `C_{d,σ}`.
 *
 * # Safety
 * `out` must be writable.
 */
enum RlStatus rl_c_d_sigma(size_t d, double sigma, double *out);

/**
 * The composition constant C.
 *
 * # Safety
 * `out` must be writable.
 */
enum RlStatus rl_composition_constant(size_t d, double sigma, double *out);

/**
 * Solves the lattice problem at period `m`; writes `ρ_{α,ε,M}` and
 * `(2π/M)^d ρ_{α,ε,M}`.
 *
 * # Safety
 * Both output pointers must be writable.
 */
enum RlStatus rl_solve_lattice(size_t d,
                               double beta,
                               double sigma,
                               double alpha,
                               double epsilon,
                               double m,
                               size_t restarts,
                               uint64_t seed,
                               double *out_value,
                               double *out_continuum);

/**
 * Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
 *
 * # Safety
 * `a` and `b` must point to `na` and `nb` doubles; outputs writable.
 */
enum RlStatus rl_ks_two_sample(const double *a,
                               size_t na,
                               const double *b,
                               size_t nb,
                               double *out_statistic,
                               double *out_p_value);

/**
 * Large-deviation rate constant of η.
 *
 * # Safety
 * `out` must be writable.
 */
enum RlStatus rl_ldp_rate_constant(double beta, double sigma, double rho, double *out);

/**
 * Growth constant of the self-attracting polymer.
 *
 * # Safety
 * `out` must be writable.
 */
enum RlStatus rl_polymer_growth_constant(double beta, double sigma, double rho, double *out);

/**
 * Law of the iterated logarithm constant.
 *
 * # Safety
 * `out` must be writable.
 */
enum RlStatus rl_lil_constant(double beta, double sigma, double rho, double *out);

/**
 * Collapse time `1/ρ`.
 *
 * # Safety
 * `out` must be writable.
 */
enum RlStatus rl_collapse_time(double rho, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RIESZ_LAB_H */
