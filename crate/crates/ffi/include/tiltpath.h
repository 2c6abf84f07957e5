#ifndef TILTPATH_H
#define TILTPATH_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum TpStatus {
  TP_STATUS_OK = 0,
  TP_STATUS_NULL_POINTER = 1,
  TP_STATUS_INVALID_ARGUMENT = 2,
  TP_STATUS_CONFIG = 3,
  TP_STATUS_SOLVER = 4,
  TP_STATUS_IO = 5,
  TP_STATUS_PANIC = 6,
} TpStatus;

/**
 * Solved control problem (potential and tilt).
 */
typedef struct TpControl TpControl;

/**
 * Validated experiment: path, collocation grid, kernel and samples.
 */
typedef struct TpExperiment TpExperiment;

/**
 * Gaussian mixture.
 */
typedef struct TpMixture TpMixture;

/**
 * Solved reference potential.
 */
typedef struct TpReference TpReference;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length without the NUL.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t tp_last_error(char *buf, size_t len);

/**
 * # Safety
 * The three arrays must hold `n` values; `out` must be writable.
 */
enum TpStatus tp_mixture_new(const double *weights,
                             const double *means,
                             const double *stds,
                             size_t n,
                             struct TpMixture **out);

/**
 * # Safety
 * `m` must be null or a handle from [`tp_mixture_new`] not yet freed.
 */
void tp_mixture_free(struct TpMixture *m);

/**
 * # Safety
 * `m` must be a live handle; `out` writable.
 */
enum TpStatus tp_mixture_pdf(const struct TpMixture *m, double x, double *out);

/**
 * # Safety
 * `m` must be a live handle; `out` writable.
 */
enum TpStatus tp_mixture_cdf(const struct TpMixture *m, double x, double *out);

/**
 * # Safety
 * `m` must be a live handle; `out` writable.
 */
enum TpStatus tp_mixture_quantile(const struct TpMixture *m, double p, double *out);

/**
 * Fills `out[0..n]` with draws seeded by `seed`.
 *
 * # Safety
 * `m` must be a live handle; `out` valid for `n` values.
 */
enum TpStatus tp_mixture_sample(const struct TpMixture *m, size_t n, uint64_t seed, double *out);

/**
 * Monotone map pushing `eta` to `pi`.
 *
 * # Safety
 * Both handles live; `out` writable.
 */
enum TpStatus tp_mccann_map(const struct TpMixture *eta,
                            const struct TpMixture *pi,
                            double x,
                            double *out);

/**
 * Parses and validates a JSON experiment configuration. Missing keys take
 * the default two-mode experiment values.
 *
 * # Safety
 * `json` must be a NUL-terminated string; `out` writable.
 */
enum TpStatus tp_experiment_from_json(const char *json, struct TpExperiment **out);

/**
 * # Safety
 * `e` must be null or a live experiment handle.
 */
void tp_experiment_free(struct TpExperiment *e);

/**
 * Number of initial particles drawn from the reference.
 *
 * # Safety
 * `e` live; `out` writable.
 */
enum TpStatus tp_experiment_n_particles(const struct TpExperiment *e, size_t *out);

/**
 * # Safety
 * `e` live; `out` writable.
 */
enum TpStatus tp_reference_solve(const struct TpExperiment *e, struct TpReference **out);

/**
 * # Safety
 * `r` must be null or a live reference handle.
 */
void tp_reference_free(struct TpReference *r);

/**
 * `u(x, t)` and the velocity `du/dx(x, t)`.
 *
 * # Safety
 * `r` live; outputs writable.
 */
enum TpStatus tp_reference_eval(const struct TpReference *r,
                                double x,
                                double t,
                                double *u,
                                double *du);

/**
 * Space-time RKHS norm of the potential.
 *
 * # Safety
 * `r` live; `out` writable.
 */
enum TpStatus tp_reference_norm(const struct TpReference *r, double *out);

/**
 * # Safety
 * `e` live; `out` writable.
 */
enum TpStatus tp_control_solve(const struct TpExperiment *e, struct TpControl **out);

/**
 * # Safety
 * `c` must be null or a live control handle.
 */
void tp_control_free(struct TpControl *c);

/**
 * `u(x, t)`, `du/dx(x, t)` and the tilt `g(x, t)`.
 *
 * # Safety
 * `c` live; outputs writable.
 */
enum TpStatus tp_control_eval(const struct TpControl *c,
                              double x,
                              double t,
                              double *u,
                              double *du,
                              double *g);

/**
 * Space-time RKHS norms of `u` and `g`, LM iterations, and whether the
 * solver stopped before the iteration cap.
 *
 * # Safety
 * `c` live; outputs writable.
 */
enum TpStatus tp_control_summary(const struct TpControl *c,
                                 double *norm_u,
                                 double *norm_g,
                                 size_t *iterations,
                                 bool *converged);

/**
 * Forward-Euler transport of `n` particles under the reference velocity;
 * terminal positions go to `out`.
 *
 * # Safety
 * `r` live; `init` and `out` valid for `n` values.
 */
enum TpStatus tp_reference_transport(const struct TpReference *r,
                                     const double *init,
                                     size_t n,
                                     double dt,
                                     double *out);

/**
 * As [`tp_reference_transport`] with the learned velocity.
 *
 * # Safety
 * `c` live; `init` and `out` valid for `n` values.
 */
enum TpStatus tp_control_transport(const struct TpControl *c,
                                   const double *init,
                                   size_t n,
                                   double dt,
                                   double *out);

/**
 * Runs a CLI command (`reference`, `learn`, `mccann` or `all`) with the
 * configuration file at `config_path`, writing into `out_dir`.
 *
 * # Safety
 * All strings NUL-terminated.
 */
enum TpStatus tp_run(const char *command, const char *config_path, const char *out_dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* TILTPATH_H */
