#ifndef VOIGT_H
#define VOIGT_H

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status codes returned by every fallible function.
 */
typedef enum VoigtStatus {
  VOIGT_STATUS_OK = 0,
  VOIGT_STATUS_NULL_POINTER = 1,
  VOIGT_STATUS_INVALID_UTF8 = 2,
  VOIGT_STATUS_CONFIG = 3,
  VOIGT_STATUS_VALIDATION = 4,
  VOIGT_STATUS_CFL = 5,
  VOIGT_STATUS_DEGENERATE = 6,
  VOIGT_STATUS_NON_FINITE = 7,
  VOIGT_STATUS_IO = 8,
  VOIGT_STATUS_BUFFER_TOO_SMALL = 9,
  VOIGT_STATUS_SOLVER = 10,
  VOIGT_STATUS_PANIC = 11,
} VoigtStatus;

/**
 * Opaque simulation handle.
 */
typedef struct VoigtSim VoigtSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Builds a simulation from a TOML config. `base_dir` (nullable) resolves
 * relative file paths such as tabulated forcing. On success `*out` owns a
 * handle to release with `voigt_sim_free`.
 *
 * # Safety
 * `config_toml` and a non-null `base_dir` must be NUL-terminated strings;
 * `out` must be valid for writes.
 */
enum VoigtStatus voigt_sim_new(const char *config_toml,
                               const char *base_dir,
                               struct VoigtSim **out);

/**
 * Releases a handle. Null is ignored.
 *
 * # Safety
 * `sim` must come from `voigt_sim_new` and not be used afterwards.
 */
void voigt_sim_free(struct VoigtSim *sim);

/**
 * Advances `steps` steps of the configured `dt`. On error the state is left
 * at the last successful step.
 *
 * # Safety
 * `sim` must be a live handle.
 */
enum VoigtStatus voigt_sim_step(struct VoigtSim *sim, size_t steps);

/**
 * # Safety
 * `sim` must be a live handle and `out` valid for writes.
 */
enum VoigtStatus voigt_sim_time(const struct VoigtSim *sim, double *out);

/**
 * Number of Galerkin coefficients.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for writes.
 */
enum VoigtStatus voigt_sim_mode_count(const struct VoigtSim *sim, size_t *out);

/**
 * Number of grid nodes, the length of the density buffer.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for writes.
 */
enum VoigtStatus voigt_sim_node_count(const struct VoigtSim *sim, size_t *out);

/**
 * Copies the Galerkin coefficients into `buf` of capacity `len`.
 *
 * # Safety
 * `sim` must be a live handle and `buf` valid for `len` writes.
 */
enum VoigtStatus voigt_sim_coefficients(const struct VoigtSim *sim, double *buf, size_t len);

/**
 * Copies the nodal density (row-major) into `buf` of capacity `len`.
 *
 * # Safety
 * `sim` must be a live handle and `buf` valid for `len` writes.
 */
enum VoigtStatus voigt_sim_density(const struct VoigtSim *sim, double *buf, size_t len);

/**
 * # Safety
 * `sim` must be a live handle; `min` and `max` valid for writes.
 */
enum VoigtStatus voigt_sim_density_bounds(const struct VoigtSim *sim, double *min, double *max);

/**
 * Kinetic plus Voigt energy plus accumulated dissipation; constant in time
 * for unforced runs up to integrator error.
 *
 * # Safety
 * `sim` must be a live handle and `out` valid for writes.
 */
enum VoigtStatus voigt_sim_energy(const struct VoigtSim *sim, double *out);

/**
 * Copies this thread's last error message, NUL-terminated and truncated
 * to fit, into `buf`. Returns the full message length without the NUL, so
 * a call with `len = 0` sizes the buffer.
 *
 * # Safety
 * A non-null `buf` must be valid for `len` writes.
 */
size_t voigt_last_error_message(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *voigt_version(void);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* VOIGT_H */
