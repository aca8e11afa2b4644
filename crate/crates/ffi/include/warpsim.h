#ifndef WARPSIM_H
#define WARPSIM_H

/* Generated by cbindgen from crates/ffi/src/lib.rs. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result codes.
 */
typedef enum WarpsimStatus {
  WARPSIM_STATUS_OK = 0,
  WARPSIM_STATUS_NULL_POINTER = 1,
  WARPSIM_STATUS_INVALID_ARGUMENT = 2,
  WARPSIM_STATUS_DOMAIN = 3,
  WARPSIM_STATUS_UNSUPPORTED = 4,
  WARPSIM_STATUS_SAMPLING = 5,
  WARPSIM_STATUS_NUMERICAL = 6,
  WARPSIM_STATUS_IO = 7,
  WARPSIM_STATUS_BUFFER_TOO_SMALL = 8,
  WARPSIM_STATUS_PANIC = 9,
} WarpsimStatus;

/**
 * Piecewise-linear warp path.
 */
typedef struct WarpsimPath WarpsimPath;

/**
 * Seeded random stream.
 */
typedef struct WarpsimRng WarpsimRng;

/**
 * Target warping function.
 */
typedef struct WarpsimTarget WarpsimTarget;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread; empty if none. Owned by the
 * library and valid until the next failing call on the same thread.
 */
const char *warpsim_last_error_message(void);

/**
 * Library version, a static NUL-terminated string.
 */
const char *warpsim_version(void);

/**
 * # Safety
 * `out` must be a valid pointer to writable storage for a handle.
 */
enum WarpsimStatus warpsim_rng_new(uint64_t seed, uint64_t stream_id, struct WarpsimRng **out);

/**
 * # Safety
 * `rng` must be null or a handle from [`warpsim_rng_new`] not yet freed.
 */
void warpsim_rng_free(struct WarpsimRng *rng);

/**
 * Uniform draw on [0,1).
 *
 * # Safety
 * `rng` must be a live handle and `out` writable.
 */
enum WarpsimStatus warpsim_rng_uniform(struct WarpsimRng *rng, double *out);

/**
 * Built-in target by name: "phi1", "phi2" or "phi3".
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` writable.
 */
enum WarpsimStatus warpsim_target_builtin(const char *name, struct WarpsimTarget **out);

/**
 * # Safety
 * `target` must be null or a live handle.
 */
void warpsim_target_free(struct WarpsimTarget *target);

/**
 * # Safety
 * `target` must be a live handle and `out` writable.
 */
enum WarpsimStatus warpsim_target_eval(const struct WarpsimTarget *target, double t, double *out);

/**
 * Path with n equispaced knots and Dirichlet(theta) increments.
 *
 * # Safety
 * `rng` must be a live handle and `out` writable.
 */
enum WarpsimStatus warpsim_simulate_cdh(size_t n,
                                        double theta,
                                        struct WarpsimRng *rng,
                                        struct WarpsimPath **out);

/**
 * # Safety
 * `target` and `rng` must be live handles and `out` writable.
 */
enum WarpsimStatus warpsim_simulate_bk(const struct WarpsimTarget *target,
                                       size_t n,
                                       double theta,
                                       struct WarpsimRng *rng,
                                       struct WarpsimPath **out);

/**
 * # Safety
 * `target` and `rng` must be live handles and `out` writable.
 */
enum WarpsimStatus warpsim_simulate_cdf(const struct WarpsimTarget *target,
                                        size_t n,
                                        double theta,
                                        double p,
                                        struct WarpsimRng *rng,
                                        struct WarpsimPath **out);

/**
 * Expansion sampler with m modes, variances 1/i^2 and Gaussian scores.
 *
 * # Safety
 * `target` and `rng` must be live handles and `out` writable.
 */
enum WarpsimStatus warpsim_simulate_mzw(const struct WarpsimTarget *target,
                                        size_t m,
                                        double theta,
                                        struct WarpsimRng *rng,
                                        struct WarpsimPath **out);

/**
 * # Safety
 * `path` must be null or a live handle.
 */
void warpsim_path_free(struct WarpsimPath *path);

/**
 * Number of knots, 0 for a null handle.
 *
 * # Safety
 * `path` must be null or a live handle.
 */
size_t warpsim_path_len(const struct WarpsimPath *path);

/**
 * Copies the knots into `xs` and `ys`, each of capacity `cap`.
 *
 * # Safety
 * `path` must be a live handle; `xs` and `ys` must point to `cap` writable doubles.
 */
enum WarpsimStatus warpsim_path_knots(const struct WarpsimPath *path,
                                      double *xs,
                                      double *ys,
                                      size_t cap);

/**
 * # Safety
 * `path` must be a live handle and `out` writable.
 */
enum WarpsimStatus warpsim_path_eval(const struct WarpsimPath *path, double t, double *out);

/**
 * Exact mean and variance at t of the BK path (1 <= n <= 128).
 *
 * # Safety
 * `target` must be a live handle; `mean` and `variance` writable.
 */
enum WarpsimStatus warpsim_bk_moments_exact(const struct WarpsimTarget *target,
                                            double t,
                                            size_t n,
                                            double theta,
                                            double *mean,
                                            double *variance);

/**
 * Exact mean and variance at t of the polygonal CDF path (1 <= n <= 128).
 *
 * # Safety
 * `target` must be a live handle; `mean` and `variance` writable.
 */
enum WarpsimStatus warpsim_cdf_moments_exact(const struct WarpsimTarget *target,
                                             double t,
                                             size_t n,
                                             double theta,
                                             double p,
                                             double *mean,
                                             double *variance);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* WARPSIM_H */
