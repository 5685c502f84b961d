#ifndef ROUNDABOUT_H
#define ROUNDABOUT_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

#define RG_OK 0

#define RG_ERR_NULL 1

#define RG_ERR_UTF8 2

#define RG_ERR_CONFIG 3

#define RG_ERR_INVALID 4

#define RG_ERR_LOCALIZATION 5

#define RG_ERR_IO 6

#define RG_ERR_RANGE 7

#define RG_ERR_PANIC 8

#define RG_SOLVER_STACKELBERG 0

#define RG_SOLVER_GRAND_COALITION 1

#define RG_TERM_COMPLETED 0

#define RG_TERM_DURATION 1

#define RG_TERM_COLLISION 2

#define RG_TERM_LOCALIZATION 3

/**
 * Completed simulation with its metrics.
 */
typedef struct RgRun RgRun;

/**
 * Parsed scenario configuration.
 */
typedef struct RgScenario RgScenario;

/**
 * Run-level results. Missing values are NaN.
 */
typedef struct {
  int32_t termination;
  /**
   * Time at which the run ended (s).
   */
  double end_time;
  double system_velocity_rms;
  double min_gap;
  double mean_solve_time;
  size_t steps;
  size_t agents;
  bool fallback_used;
} RgSummary;

/**
 * Per-agent results. Missing values are NaN.
 */
typedef struct {
  size_t samples;
  double velocity_rms;
  double max_velocity;
  double min_gap;
  double finished_at;
  size_t fallback_steps;
} RgAgentSummary;

/**
 * Recorded state of one agent at one step.
 */
typedef struct {
  double t;
  double vx;
  double phi;
  double x;
  double y;
  double ax;
  double delta_f;
} RgSample;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Copies the last error message of this thread into `buf` as a
 * NUL-terminated string, truncating to `len - 1` bytes. Returns the full
 * message length, excluding the terminator.
 *
 * # Safety
 * `buf` must be null or valid for `len` bytes.
 */
size_t rg_last_error(char *buf, size_t len);

/**
 * Library version as a static NUL-terminated string.
 */
const char *rg_version(void);

/**
 * Loads one of the bundled scenarios by name.
 *
 * # Safety
 * `name` must be a NUL-terminated string and `out` valid for writing.
 */
int32_t rg_scenario_bundled(const char *name, RgScenario **out);

/**
 * Parses and validates a scenario from TOML text.
 *
 * # Safety
 * `toml` must be a NUL-terminated string and `out` valid for writing.
 */
int32_t rg_scenario_parse(const char *toml, RgScenario **out);

/**
 * Number of agents in the scenario.
 *
 * # Safety
 * `scenario` must be a live handle and `out` valid for writing.
 */
int32_t rg_scenario_agent_count(const RgScenario *scenario, size_t *out);

/**
 * Overrides the simulated duration (s).
 *
 * # Safety
 * `scenario` must be a live handle.
 */
int32_t rg_scenario_set_duration(RgScenario *scenario, double duration);

/**
 * Releases a scenario. Null is ignored.
 *
 * # Safety
 * `scenario` must be null or a handle not yet freed.
 */
void rg_scenario_free(RgScenario *scenario);

/**
 * Simulates the scenario with `RG_SOLVER_STACKELBERG` or
 * `RG_SOLVER_GRAND_COALITION`.
 *
 * # Safety
 * `scenario` must be a live handle and `out` valid for writing.
 */
int32_t rg_run(const RgScenario *scenario, int32_t solver, RgRun **out);

/**
 * Releases a run. Null is ignored.
 *
 * # Safety
 * `run` must be null or a handle not yet freed.
 */
void rg_run_free(RgRun *run);

/**
 * Run-level summary.
 *
 * # Safety
 * `run` must be a live handle and `out` valid for writing.
 */
int32_t rg_run_summary(const RgRun *run, RgSummary *out);

/**
 * Copies agent `index`'s identifier into `buf` like [`rg_last_error`] and
 * stores the full length in `len_out` when it is not null.
 *
 * # Safety
 * `run` must be a live handle, `buf` null or valid for `len` bytes.
 */
int32_t rg_run_agent_id(const RgRun *run, size_t index, char *buf, size_t len, size_t *len_out);

/**
 * Metrics of agent `index`, in scenario order.
 *
 * # Safety
 * `run` must be a live handle and `out` valid for writing.
 */
int32_t rg_run_agent_summary(const RgRun *run, size_t index, RgAgentSummary *out);

/**
 * Recorded sample `sample` of agent `index`; agents stop recording once
 * their route is complete.
 *
 * # Safety
 * `run` must be a live handle and `out` valid for writing.
 */
int32_t rg_run_sample(const RgRun *run, size_t index, size_t sample, RgSample *out);

/**
 * Writes the trajectory, metrics and summary files into `dir`.
 *
 * # Safety
 * `run` must be a live handle and `dir` a NUL-terminated string.
 */
int32_t rg_run_export(const RgRun *run, const char *dir);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ROUNDABOUT_H */
