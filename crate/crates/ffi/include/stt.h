#ifndef STT_H
#define STT_H

#pragma once

/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum SttStatus {
  STT_STATUS_OK = 0,
  STT_STATUS_NULL_POINTER = 1,
  STT_STATUS_INVALID_UTF8 = 2,
  // Malformed scenario document.
  STT_STATUS_PARSE = 3,
  // Hard validation checks failed; the run was refused.
  STT_STATUS_INVALID = 4,
  // Bad simulation configuration.
  STT_STATUS_CONFIG = 5,
  // The simulation reached a non-finite state.
  STT_STATUS_ABORTED = 6,
  STT_STATUS_IO = 7,
  // Index or buffer length out of range.
  STT_STATUS_OUT_OF_RANGE = 8,
  STT_STATUS_PANIC = 9,
} SttStatus;

// Parsed scenario.
typedef struct SttScenario SttScenario;

// Recorded run.
typedef struct SttTrace SttTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Copies the last error message of this thread into `buf` as a
// NUL-terminated string, truncating to `len - 1` bytes. Returns the full
// message length in bytes, excluding the terminator.
//
// # Safety
// `buf` must be null or point to `len` writable bytes.
uintptr_t stt_last_error(char *buf, uintptr_t len);

// Parses a YAML scenario document.
//
// # Safety
// `yaml` must be a NUL-terminated string; `out` must be writable.
enum SttStatus stt_scenario_parse(const char *yaml, struct SttScenario **out);

// Reads and parses a scenario file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum SttStatus stt_scenario_load(const char *path, struct SttScenario **out);

// # Safety
// `sc` must be null or a handle from `stt_scenario_parse`/`stt_scenario_load`
// not yet freed.
void stt_scenario_free(struct SttScenario *sc);

// Workspace dimension, or 0 for a null handle.
//
// # Safety
// `sc` must be null or a live scenario handle.
uintptr_t stt_scenario_dimension(const struct SttScenario *sc);

// Number of agents, or 0 for a null handle.
//
// # Safety
// `sc` must be null or a live scenario handle.
uintptr_t stt_scenario_agent_count(const struct SttScenario *sc);

// Runs the scenario checks. `hard_failures` receives the number of failed
// hard checks.
//
// # Safety
// `sc` must be a live scenario handle; `hard_failures` must be writable.
enum SttStatus stt_scenario_validate(const struct SttScenario *sc, uintptr_t *hard_failures);

// Simulates a validated scenario. Non-positive `dt` or `t_end` select the
// scenario's own values.
//
// # Safety
// `sc` must be a live scenario handle; `out` must be writable.
enum SttStatus stt_simulate(const struct SttScenario *sc,
                            double dt,
                            double t_end,
                            struct SttTrace **out);

// # Safety
// `tr` must be null or a handle from `stt_simulate` not yet freed.
void stt_trace_free(struct SttTrace *tr);

// Number of grid rows, or 0 for a null handle.
//
// # Safety
// `tr` must be null or a live trace handle.
uintptr_t stt_trace_rows(const struct SttTrace *tr);

// Time of grid row `row`.
//
// # Safety
// `tr` must be a live trace handle; `out` must be writable.
enum SttStatus stt_trace_time(const struct SttTrace *tr, uintptr_t row, double *out);

// Tube centre of `agent` at `row` into `out[0..dimension]`.
//
// # Safety
// `tr` must be a live trace handle; `out` must hold `len` doubles.
enum SttStatus stt_trace_center(const struct SttTrace *tr,
                                uintptr_t agent,
                                uintptr_t row,
                                double *out,
                                uintptr_t len);

// Output `y = x_1` of `agent` at `row` into `out[0..dimension]`.
//
// # Safety
// `tr` must be a live trace handle; `out` must hold `len` doubles.
enum SttStatus stt_trace_output(const struct SttTrace *tr,
                                uintptr_t agent,
                                uintptr_t row,
                                double *out,
                                uintptr_t len);

// Tube radius of `agent` at `row`.
//
// # Safety
// `tr` must be a live trace handle; `out` must be writable.
enum SttStatus stt_trace_radius(const struct SttTrace *tr,
                                uintptr_t agent,
                                uintptr_t row,
                                double *out);

// Runs every monitor. `tras_pass` receives 1 when every agent satisfies the
// reach-avoid-stay verdict, else 0.
//
// # Safety
// `sc` and `tr` must be live handles of the same run; `tras_pass` must be writable.
enum SttStatus stt_check(const struct SttScenario *sc,
                         const struct SttTrace *tr,
                         int32_t *tras_pass);

// Log-sum-exp smooth minimum of `values[0..len]`; `+∞` when `len` is 0 and
// NaN for a null pointer with positive length.
//
// # Safety
// `values` must point to `len` readable doubles.
double stt_smooth_min(const double *values, uintptr_t len, double nu);

// Tube radius `smooth_min(ρ_max, d1, d2)`.
double stt_radius_closed_form(double d1, double d2, double rho_max, double nu);

// Lower bound `−(1/ν)·ln(e^{−ν·ρ_max} + 2e^{−ν·ρ_min})` on the tube radius.
double stt_radius_lower_bound(double rho_min, double rho_max, double nu);

// Social interaction function of agent k towards agent l.
double stt_sif(double s_k, double s_l, double t, double t_c_k, double b);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* STT_H */
