#ifndef RATDUP_H
#define RATDUP_H

/* Generated by cbindgen; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum RatdupOutputKind {
  RATDUP_OUTPUT_KIND_VALUE = 0,
  RATDUP_OUTPUT_KIND_AGENT = 1,
  RATDUP_OUTPUT_KIND_EDGES = 2,
  RATDUP_OUTPUT_KIND_BOTTOM = 3,
} RatdupOutputKind;

typedef enum RatdupStatus {
  RATDUP_STATUS_OK = 0,
  RATDUP_STATUS_NULL_ARGUMENT = 1,
  RATDUP_STATUS_INVALID_UTF8 = 2,
  RATDUP_STATUS_INVALID_SCENARIO = 3,
  RATDUP_STATUS_EXECUTION = 4,
  RATDUP_STATUS_DOMAIN = 5,
  RATDUP_STATUS_OUT_OF_RANGE = 6,
  RATDUP_STATUS_PANIC = 7,
} RatdupStatus;

typedef enum RatdupVerdict {
  RATDUP_VERDICT_LEGAL = 0,
  RATDUP_VERDICT_ERRONEOUS = 1,
} RatdupVerdict;

/**
 * A validated scenario.
 */
typedef struct RatdupScenario RatdupScenario;

/**
 * One finished execution.
 */
typedef struct RatdupTrace RatdupTrace;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failure on this thread, or null. Valid until the next
 * failing call on the same thread.
 */
const char *ratdup_last_error(void);

/**
 * Library version as a static string.
 */
const char *ratdup_version(void);

/**
 * # Safety
 * `s` is null or was returned by this library and not yet freed.
 */
void ratdup_string_free(char *s);

/**
 * Parses a scenario from TOML text.
 *
 * # Safety
 * `toml` is a nul-terminated string; `out` is writable.
 */
enum RatdupStatus ratdup_scenario_parse(const char *toml, struct RatdupScenario **out);

/**
 * Loads a scenario file.
 *
 * # Safety
 * `path` is a nul-terminated string; `out` is writable.
 */
enum RatdupStatus ratdup_scenario_load(const char *path, struct RatdupScenario **out);

/**
 * # Safety
 * `s` is null or a live scenario handle.
 */
void ratdup_scenario_free(struct RatdupScenario *s);

/**
 * Number of agents in the scenario's topology.
 *
 * # Safety
 * `s` is a live scenario handle; `out` is writable.
 */
enum RatdupStatus ratdup_scenario_node_count(const struct RatdupScenario *s, size_t *out);

/**
 * Runs the scenario once with `seed`, playing its cheater if it has one.
 *
 * # Safety
 * `s` is a live scenario handle; `out` is writable.
 */
enum RatdupStatus ratdup_run(const struct RatdupScenario *s,
                             uint64_t seed,
                             struct RatdupTrace **out);

/**
 * # Safety
 * `t` is null or a live trace handle.
 */
void ratdup_trace_free(struct RatdupTrace *t);

/**
 * # Safety
 * `t` is a live trace handle; `out` is writable.
 */
enum RatdupStatus ratdup_trace_verdict(const struct RatdupTrace *t, enum RatdupVerdict *out);

/**
 * Whether some agent aborted.
 *
 * # Safety
 * `t` is a live trace handle; `out` is writable.
 */
enum RatdupStatus ratdup_trace_aborted(const struct RatdupTrace *t, bool *out);

/**
 * The cheater's utility (0 or 1); for honest runs, that of the first agent.
 *
 * # Safety
 * `t` is a live trace handle; `out` is writable.
 */
enum RatdupStatus ratdup_trace_utility(const struct RatdupTrace *t, uint8_t *out);

/**
 * Number of original agents with an output.
 *
 * # Safety
 * `t` is a live trace handle; `out` is writable.
 */
enum RatdupStatus ratdup_trace_output_count(const struct RatdupTrace *t, size_t *out);

/**
 * Output `index` in agent-id order. `value` receives the output value, the
 * chosen agent id, or the number of oriented edges, depending on `kind`;
 * 0 for bottom.
 *
 * # Safety
 * `t` is a live trace handle; the three out pointers are writable.
 */
enum RatdupStatus ratdup_trace_output(const struct RatdupTrace *t,
                                      size_t index,
                                      uint64_t *agent,
                                      enum RatdupOutputKind *kind,
                                      uint64_t *value);

/**
 * The execution as JSON lines. Free the result with `ratdup_string_free`.
 *
 * # Safety
 * `t` is a live trace handle; `out` is writable.
 */
enum RatdupStatus ratdup_trace_to_jsonl(const struct RatdupTrace *t, char **out);

/**
 * Runs the scenario's deviation catalog. `report_json` may be null;
 * otherwise it receives the full report, to be freed with
 * `ratdup_string_free`.
 *
 * # Safety
 * `s` is a live scenario handle; `deviation_found` is writable.
 */
enum RatdupStatus ratdup_check_equilibrium(const struct RatdupScenario *s,
                                           bool *deviation_found,
                                           char **report_json);

/**
 * Whether some duplication beats honest sharing with `k` outputs when sizes
 * lie in `[alpha, beta]` and a successful duplication pays `x_num/x_den`.
 *
 * # Safety
 * `out` is writable.
 */
enum RatdupStatus ratdup_ks_incentive(size_t alpha,
                                      size_t beta,
                                      uint64_t k,
                                      int64_t x_num,
                                      int64_t x_den,
                                      bool *out);

/**
 * Bound class of a problem by name, e.g. "α+1" or "unbounded". Free the
 * result with `ratdup_string_free`.
 *
 * # Safety
 * `problem` is a nul-terminated string; `out` is writable.
 */
enum RatdupStatus ratdup_classify_bound(const char *problem, char **out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* RATDUP_H */
