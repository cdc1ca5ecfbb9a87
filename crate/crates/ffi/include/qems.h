/* Generated from the qems-ffi crate; do not edit. */

#ifndef QEMS_H
#define QEMS_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Result of every fallible call.
 */
typedef enum QemsStatus {
  QEMS_STATUS_OK = 0,
  QEMS_STATUS_NULL_POINTER = 1,
  /**
   * Invalid parameter, configuration or argument.
   */
  QEMS_STATUS_CONFIG = 2,
  /**
   * A linear solve or iteration failed.
   */
  QEMS_STATUS_SOLVER = 3,
  /**
   * Outside the validity regime, or truncation too small.
   */
  QEMS_STATUS_REGIME = 4,
  /**
   * An unexpected internal failure.
   */
  QEMS_STATUS_INTERNAL = 5,
  /**
   * The destination buffer is too short.
   */
  QEMS_STATUS_BUFFER_TOO_SMALL = 6,
} QemsStatus;

typedef enum QemsFrame {
  QEMS_FRAME_SIDEBAND = 0,
  QEMS_FRAME_LAB = 1,
} QemsFrame;

typedef enum QemsCommand {
  QEMS_COMMAND_PARAMS = 0,
  QEMS_COMMAND_STEADY = 1,
  QEMS_COMMAND_SWEEP = 2,
  QEMS_COMMAND_SPECTRUM = 3,
} QemsCommand;

typedef enum QemsMethod {
  /**
   * Use the `method` key of the configuration.
   */
  QEMS_METHOD_DEFAULT = 0,
  QEMS_METHOD_ANALYTIC = 1,
  QEMS_METHOD_NUMERIC = 2,
  QEMS_METHOD_BOTH = 3,
} QemsMethod;

/**
 * Model parameters.
 */
typedef struct QemsParams QemsParams;

/**
 * A spectrum sampled on a frequency grid.
 */
typedef struct QemsSpectrum QemsSpectrum;

/**
 * A solved steady state.
 */
typedef struct QemsSteady QemsSteady;

typedef struct QemsRegime {
  double resolved_sideband;
  double adiabatic;
  bool resolved_ok;
  bool adiabatic_ok;
} QemsRegime;

/**
 * Qubit-induced rates and shifts in Hz, and the adiabatic occupations.
 */
typedef struct QemsAdiabatic {
  double gamma_minus_c_hz;
  double gamma_plus_c_hz;
  double delta_c_hz;
  double gamma_minus_m_hz;
  double gamma_plus_m_hz;
  double delta_m_hz;
  double n_c;
  double n_m;
} QemsAdiabatic;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. The pointer
 * stays valid until the next call into this library on the same thread.
 */
const char *qems_last_error(void);

/**
 * Owned copy of the last error message, or null. Release it with
 * [`qems_string_free`].
 */
char *qems_last_error_message(void);

/**
 * Frees a string returned by this library. Null is ignored.
 *
 * # Safety
 * `s` must come from this library and not have been freed.
 */
void qems_string_free(char *s);

/**
 * Nominal parameter set.
 */
struct QemsParams *qems_params_nominal(void);

/**
 * Parameters from configuration text in the command-line format.
 *
 * # Safety
 * `config` must be a NUL-terminated string and `out` writable.
 */
enum QemsStatus qems_params_from_config(const char *config, struct QemsParams **out);

/**
 * # Safety
 * `p` must come from this library and not have been freed; null is ignored.
 */
void qems_params_free(struct QemsParams *p);

/**
 * Reads a parameter by its configuration key, e.g. `"gamma_down_hz"`.
 *
 * # Safety
 * `p` must be a live handle, `name` NUL-terminated and `out` writable.
 */
enum QemsStatus qems_params_get(const struct QemsParams *p, const char *name, double *out);

/**
 * Sets a parameter by its configuration key. Setting a bare coupling or
 * the drive recomputes the sideband couplings. The handle is unchanged
 * when the new set fails validation.
 *
 * # Safety
 * `p` must be a live handle and `name` NUL-terminated.
 */
enum QemsStatus qems_params_set(struct QemsParams *p, const char *name, double value);

/**
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum QemsStatus qems_regime(const struct QemsParams *p, struct QemsRegime *out);

/**
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum QemsStatus qems_adiabatic(const struct QemsParams *p, struct QemsAdiabatic *out);

/**
 * Steady state of the full model with Fock truncations `n_c`, `n_m`.
 *
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum QemsStatus qems_steady_solve(const struct QemsParams *p,
                                  size_t n_c,
                                  size_t n_m,
                                  enum QemsFrame frame_kind,
                                  struct QemsSteady **out);

/**
 * # Safety
 * `s` must be a live handle and both outputs writable.
 */
enum QemsStatus qems_steady_occupations(const struct QemsSteady *s, double *n_c, double *n_m);

/**
 * Relative residual `‖Lρ‖∞ / ‖L‖∞` of the solution.
 *
 * # Safety
 * `s` must be a live handle and `out` writable.
 */
enum QemsStatus qems_steady_residual(const struct QemsSteady *s, double *out);

/**
 * # Safety
 * `s` must come from this library and not have been freed; null is ignored.
 */
void qems_steady_free(struct QemsSteady *s);

/**
 * Closed-form spectrum on a linear grid, frequencies relative to the drive.
 *
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum QemsStatus qems_spectrum_analytic(const struct QemsParams *p,
                                       double center_hz,
                                       double span_hz,
                                       size_t points,
                                       struct QemsSpectrum **out);

/**
 * Spectrum of the full model from the quantum regression theorem.
 *
 * # Safety
 * `p` must be a live handle and `out` writable.
 */
enum QemsStatus qems_spectrum_numeric(const struct QemsParams *p,
                                      size_t n_c,
                                      size_t n_m,
                                      enum QemsFrame frame_kind,
                                      double center_hz,
                                      double span_hz,
                                      size_t points,
                                      struct QemsSpectrum **out);

/**
 * Number of grid points, or 0 for a null handle.
 *
 * # Safety
 * `s` must be null or a live handle.
 */
size_t qems_spectrum_len(const struct QemsSpectrum *s);

/**
 * Copies a column into `buf`. `name` is `"omega_hz"` for the grid (Hz,
 * relative to the drive), `"total"`, or a part such as `"s_c_upper"`.
 *
 * # Safety
 * `s` must be a live handle, `name` NUL-terminated and `buf` valid for
 * `len` writes.
 */
enum QemsStatus qems_spectrum_copy(const struct QemsSpectrum *s,
                                   const char *name,
                                   double *buf,
                                   size_t len);

/**
 * # Safety
 * `s` must come from this library and not have been freed; null is ignored.
 */
void qems_spectrum_free(struct QemsSpectrum *s);

/**
 * Runs a command-line command on configuration text and returns its output
 * (report or CSV) in `out`; release it with [`qems_string_free`]. A failed
 * sweep point still yields output alongside a non-zero status.
 *
 * # Safety
 * `config` must be NUL-terminated and `out` writable.
 */
enum QemsStatus qems_run(const char *config,
                         enum QemsCommand command,
                         enum QemsMethod method,
                         char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* QEMS_H */
