#ifndef KERRPHASE_H
#define KERRPHASE_H

/* Generated by cbindgen. Do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call. Codes 2 to 4 match the CLI exit codes.
 */
typedef enum {
  KP_STATUS_OK = 0,
  /**
   * Null pointer, bad UTF-8 or a buffer of the wrong length.
   */
  KP_STATUS_INVALID_ARGUMENT = 1,
  KP_STATUS_CONFIG = 2,
  KP_STATUS_SOLVER = 3,
  KP_STATUS_VALIDATION = 4,
  /**
   * The library panicked. The handle arguments should be considered lost.
   */
  KP_STATUS_INTERNAL = 5,
} KpStatus;

/**
 * Which reference run the nonlinear phase is measured against.
 */
typedef enum {
  KP_BASELINE_HARMONIC = 0,
  KP_BASELINE_WEAK = 1,
} KpBaseline;

/**
 * Opaque system configuration.
 */
typedef struct KpConfig KpConfig;

/**
 * Opaque mean-field trajectory.
 */
typedef struct KpTrajectory KpTrajectory;

/**
 * Message for the most recent failure on this thread, or null after a
 * successful call. The pointer stays valid until the next call on the thread.
 */
const char *kp_last_error_message(void);

/**
 * Parses a TOML system description.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out_config` writable.
 */
KpStatus kp_config_from_toml(const char *toml, KpConfig **out_config);

/**
 * `n` identical wells driven by a Gaussian pulse at `omega0`.
 * Rates in rad/ps, times in ps. `sqrt_n_g` is the collective coupling √N·g.
 *
 * # Safety
 * `out_config` must be writable.
 */
KpStatus kp_config_homogeneous(size_t n,
                               double omega0,
                               double kappa,
                               double gamma,
                               double anharmonicity,
                               double sqrt_n_g,
                               double amplitude,
                               double center,
                               double duration,
                               KpConfig **out_config);

/**
 * Sets one parameter by dotted key, e.g. `dipoles[1].gamma`.
 * On failure the configuration is unchanged.
 *
 * # Safety
 * `config` must come from this library; `key` must be NUL-terminated.
 */
KpStatus kp_config_set(KpConfig *config, const char *key, double value);

/**
 * Number of dipoles in the configuration, or 0 for a null handle.
 *
 * # Safety
 * `config` must be null or come from this library.
 */
size_t kp_config_well_count(const KpConfig *config);

/**
 * # Safety
 * `config` must be null or come from this library, and not be used afterwards.
 */
void kp_config_free(KpConfig *config);

/**
 * Integrates the mean-field equations with default options.
 *
 * # Safety
 * `config` must come from this library and `out_trajectory` be writable.
 */
KpStatus kp_simulate_meanfield(const KpConfig *config, KpTrajectory **out_trajectory);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `trajectory` must be null or come from this library.
 */
size_t kp_trajectory_len(const KpTrajectory *trajectory);

/**
 * Copies sample times (ps) into `times`, which must hold exactly
 * `kp_trajectory_len` values.
 *
 * # Safety
 * `times` must point to `len` writable doubles.
 */
KpStatus kp_trajectory_times(const KpTrajectory *trajectory, double *times, size_t len);

/**
 * Copies the cavity amplitude ⟨a⟩ in the rotating frame as separate real
 * and imaginary parts.
 *
 * # Safety
 * `re` and `im` must each point to `len` writable doubles.
 */
KpStatus kp_trajectory_field(const KpTrajectory *trajectory, double *re, double *im, size_t len);

/**
 * # Safety
 * `trajectory` must be null or come from this library, and not be used afterwards.
 */
void kp_trajectory_free(KpTrajectory *trajectory);

/**
 * Mean-field nonlinear phase at the reference well frequency, read from the
 * cavity and dipole decays (rad).
 *
 * # Safety
 * `config` must come from this library; the output pointers must be writable.
 */
KpStatus kp_nonlinear_phase(const KpConfig *config,
                            KpBaseline baseline,
                            double *out_cavity,
                            double *out_dipole);

#endif  /* KERRPHASE_H */
