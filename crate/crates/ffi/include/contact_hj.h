#ifndef CONTACT_HJ_H
#define CONTACT_HJ_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum {
  CHJ_STATUS_OK = 0,
  CHJ_STATUS_NULL_POINTER = 1,
  CHJ_STATUS_INVALID_ARGUMENT = 2,
  /**
   * Unparsable expression or configuration.
   */
  CHJ_STATUS_CONFIG = 3,
  /**
   * Singular system or solver without convergence.
   */
  CHJ_STATUS_NUMERICAL = 4,
  CHJ_STATUS_IO = 5,
  /**
   * Output buffer shorter than the result.
   */
  CHJ_STATUS_BUFFER_TOO_SMALL = 6,
  /**
   * A Rust panic was caught at the boundary.
   */
  CHJ_STATUS_PANIC = 7,
} ChjStatus;

/**
 * A contact Hamiltonian system in Darboux coordinates.
 */
typedef struct ChjSystem ChjSystem;

/**
 * A sampled trajectory: increasing times and one phase point per time.
 */
typedef struct ChjTrajectory ChjTrajectory;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copy the last error message of this thread into `buf` (NUL-terminated,
 * truncated to `len`). Returns the full message length in bytes.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t chj_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *chj_version(void);

/**
 * Build a system from a Hamiltonian over `x1..xn, y1..yn, z` with `η = y_i dx^i + dz`.
 *
 * # Safety
 * `hamiltonian` must be a NUL-terminated string and `out` a valid pointer.
 */
ChjStatus chj_system_new(size_t n, const char *hamiltonian, ChjSystem **out);

/**
 * Rescale the contact form to `gη` with `g` given over the chart coordinates.
 *
 * # Safety
 * `system` must come from `chj_system_new`; `g` must be NUL-terminated.
 */
ChjStatus chj_system_set_conformal(ChjSystem *system, const char *factor);

/**
 * # Safety
 * `system` must be null or come from `chj_system_new`, and not be used afterwards.
 */
void chj_system_free(ChjSystem *system);

/**
 * Phase-space dimension `2n + 1`, or 0 for a null handle.
 *
 * # Safety
 * `system` must be null or a live handle.
 */
size_t chj_system_dim(const ChjSystem *system);

/**
 * Contact Hamiltonian field at `point` (length `dim`) into `out`.
 *
 * # Safety
 * `point` must hold `len` values and `out` room for `out_len`.
 */
ChjStatus chj_contact_field(const ChjSystem *system,
                            const double *point,
                            size_t len,
                            double *out,
                            size_t out_len);

/**
 * Reeb field of the (possibly rescaled) contact form at `point`.
 *
 * # Safety
 * As for `chj_contact_field`.
 */
ChjStatus chj_reeb_field(const ChjSystem *system,
                         const double *point,
                         size_t len,
                         double *out,
                         size_t out_len);

/**
 * Largest residual of the defining identities of the contact and Reeb fields at `point`.
 *
 * # Safety
 * `point` must hold `len` values and `out` be a valid pointer.
 */
ChjStatus chj_identity_residual(const ChjSystem *system,
                                const double *point,
                                size_t len,
                                double *out);

/**
 * Fixed-step RK4 trajectory of the contact field from `start` over `[0, t_end]`.
 *
 * # Safety
 * `start` must hold `len` values and `out` be a valid pointer.
 */
ChjStatus chj_rk4(const ChjSystem *system,
                  const double *start,
                  size_t len,
                  double t_end,
                  double step,
                  ChjTrajectory **out);

/**
 * # Safety
 * `trajectory` must be null or a live handle, and not be used afterwards.
 */
void chj_trajectory_free(ChjTrajectory *trajectory);

/**
 * Number of samples, or 0 for a null handle.
 *
 * # Safety
 * `trajectory` must be null or a live handle.
 */
size_t chj_trajectory_len(const ChjTrajectory *trajectory);

/**
 * Phase dimension of the samples, or 0 for a null handle.
 *
 * # Safety
 * `trajectory` must be null or a live handle.
 */
size_t chj_trajectory_dim(const ChjTrajectory *trajectory);

/**
 * Time and phase point of sample `index`.
 *
 * # Safety
 * `time` must be valid and `out` hold `out_len` values.
 */
ChjStatus chj_trajectory_sample(const ChjTrajectory *trajectory,
                                size_t index,
                                double *time,
                                double *out,
                                size_t out_len);

/**
 * Largest componentwise distance between two trajectories, resampling `second` onto `first`.
 *
 * # Safety
 * Both handles must be live and `max_abs` valid.
 */
ChjStatus chj_trajectory_compare(const ChjTrajectory *first,
                                 const ChjTrajectory *second,
                                 double *max_abs);

/**
 * Run a TOML configuration like the command line does. `out_dir` may be null
 * to keep the configured directory; `exit_code` receives the command's exit code.
 *
 * # Safety
 * `config_path` must be NUL-terminated, `out_dir` null or NUL-terminated, and
 * `exit_code` valid.
 */
ChjStatus chj_run_config(const char *config_path, const char *out_dir, int32_t *exit_code);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* CONTACT_HJ_H */
