#ifndef SEMICLASSICAL_H
#define SEMICLASSICAL_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes.
typedef enum ScStatus {
  SC_STATUS_OK = 0,
  SC_STATUS_NULL_POINTER = 1,
  SC_STATUS_INVALID_STRING = 2,
  // Bad scenario or parameter.
  SC_STATUS_CONFIG = 3,
  // Failure while running.
  SC_STATUS_RUNTIME = 4,
  SC_STATUS_BUFFER_TOO_SMALL = 5,
  SC_STATUS_PANIC = 6,
} ScStatus;

// Closed-form oscillator coherent state.
typedef struct ScCoherent ScCoherent;

// Parsed scenario.
typedef struct ScScenario ScScenario;

// Wave function on a grid together with its propagator.
typedef struct ScWave ScWave;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` (NUL
// terminated, truncated to `len`). Returns the full message length plus
// one, or 0 when there is no error.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
size_t sc_last_error_message(char *buf, size_t len);

// Parses scenario TOML text with `n` `key=value` overrides.
//
// # Safety
// `text` must be a NUL-terminated string, `overrides` an array of `n`
// such strings (may be null when `n == 0`), `out` writable.
enum ScStatus sc_scenario_parse(const char *text,
                                const char *const *overrides,
                                size_t n,
                                struct ScScenario **out);

// Reads and parses a scenario file.
//
// # Safety
// As [`sc_scenario_parse`], with `path` a NUL-terminated path.
enum ScStatus sc_scenario_load(const char *path,
                               const char *const *overrides,
                               size_t n,
                               struct ScScenario **out);

// Number of ħ rungs the scenario will run.
//
// # Safety
// `scenario` must come from this library; `out` must be writable.
enum ScStatus sc_scenario_rung_count(const struct ScScenario *scenario, size_t *out);

// Runs the full sweep and writes the run directory `out_dir`.
// `jobs == 0` uses every core.
//
// # Safety
// `scenario` must come from this library; `out_dir` must be a
// NUL-terminated path.
enum ScStatus sc_scenario_run(const struct ScScenario *scenario, const char *out_dir, size_t jobs);

// # Safety
// `scenario` must come from this library (or be null) and not be used
// afterwards.
void sc_scenario_free(struct ScScenario *scenario);

// Coherent state centred at `x0` with velocity `v0` (`dim` entries each).
//
// # Safety
// `x0` and `v0` must point to `dim` doubles; `out` must be writable.
enum ScStatus sc_coherent_new(size_t dim,
                              double omega,
                              double mass,
                              double hbar,
                              const double *x0,
                              const double *v0,
                              struct ScCoherent **out);

// `|ψ(x, t)|²`.
//
// # Safety
// `cs` from this library, `x` pointing to `dim` doubles, `out` writable.
enum ScStatus sc_coherent_density(const struct ScCoherent *cs,
                                  const double *x,
                                  double t,
                                  double *out);

// Phase action `S(x, t)`.
//
// # Safety
// As [`sc_coherent_density`].
enum ScStatus sc_coherent_action(const struct ScCoherent *cs,
                                 const double *x,
                                 double t,
                                 double *out);

// Quantum potential `Q(x, t)`.
//
// # Safety
// As [`sc_coherent_density`].
enum ScStatus sc_coherent_quantum_potential(const struct ScCoherent *cs,
                                            const double *x,
                                            double t,
                                            double *out);

// Classical centre `ξ(t)`, written to `out[0..dim]`.
//
// # Safety
// `cs` from this library, `out` pointing to `dim` writable doubles.
enum ScStatus sc_coherent_center(const struct ScCoherent *cs, double t, double *out);

// # Safety
// `cs` must come from this library (or be null) and not be used afterwards.
void sc_coherent_free(struct ScCoherent *cs);

// Samples `cs` at `t = 0` on a periodic grid (`extent` and `points` hold
// `dim` entries) and prepares a split-step propagator with step `dt`.
//
// # Safety
// `cs` from this library, `extent`/`points` pointing to `dim` values,
// `out` writable.
enum ScStatus sc_wave_from_coherent(const struct ScCoherent *cs,
                                    const double *extent,
                                    const size_t *points,
                                    double dt,
                                    struct ScWave **out);

// Advances by `steps` split steps.
//
// # Safety
// `wave` must come from this library.
enum ScStatus sc_wave_step(struct ScWave *wave, size_t steps);

// Number of grid nodes.
//
// # Safety
// `wave` from this library, `out` writable.
enum ScStatus sc_wave_len(const struct ScWave *wave, size_t *out);

// Current time.
//
// # Safety
// `wave` from this library, `out` writable.
enum ScStatus sc_wave_time(const struct ScWave *wave, double *out);

// `∫|ψ|²` on the grid.
//
// # Safety
// `wave` from this library, `out` writable.
enum ScStatus sc_wave_norm(const struct ScWave *wave, double *out);

// Copies `|ψ|²` (row-major, last axis fastest) into `buf`.
//
// # Safety
// `wave` from this library, `buf` pointing to `len` writable doubles.
enum ScStatus sc_wave_density(const struct ScWave *wave, double *buf, size_t len);

// # Safety
// `wave` must come from this library (or be null) and not be used
// afterwards.
void sc_wave_free(struct ScWave *wave);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* SEMICLASSICAL_H */
