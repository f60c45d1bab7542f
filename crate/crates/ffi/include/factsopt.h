#ifndef FACTSOPT_H
#define FACTSOPT_H

/* Generated by cbindgen from the factsopt-ffi crate; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

/**
 * Status of every C-API call. Zero is success; everything else is a
 * failure whose message is available via [`facts_last_error`].
 */
typedef enum FactsErrorCode {
  FACTS_ERROR_CODE_OK = 0,
  /**
   * A required pointer argument was null.
   */
  FACTS_ERROR_CODE_NULL_ARGUMENT = 1,
  /**
   * A string argument was not valid UTF-8.
   */
  FACTS_ERROR_CODE_UTF8 = 2,
  /**
   * Input text could not be parsed (bad MATPOWER or JSON syntax).
   */
  FACTS_ERROR_CODE_PARSE = 3,
  /**
   * Structurally valid input with values that violate the model.
   */
  FACTS_ERROR_CODE_DATA = 4,
  /**
   * The grid graph is not connected.
   */
  FACTS_ERROR_CODE_DISCONNECTED = 5,
  /**
   * Scenario injections do not sum to zero.
   */
  FACTS_ERROR_CODE_UNBALANCED = 6,
  /**
   * The susceptance matrix is numerically singular.
   */
  FACTS_ERROR_CODE_SINGULAR = 7,
  /**
   * No finite critical scaling exists for the dispatch.
   */
  FACTS_ERROR_CODE_UNSTRESSABLE = 8,
  /**
   * Generator limits cannot cover the load.
   */
  FACTS_ERROR_CODE_INFEASIBLE_DISPATCH = 9,
  /**
   * An iterative routine failed to converge.
   */
  FACTS_ERROR_CODE_NUMERICAL = 10,
  /**
   * An argument value is out of range.
   */
  FACTS_ERROR_CODE_INVALID = 11,
  /**
   * A caller-supplied buffer has the wrong length.
   */
  FACTS_ERROR_CODE_LENGTH = 12,
  /**
   * An internal panic was caught at the boundary.
   */
  FACTS_ERROR_CODE_PANIC = 13,
} FactsErrorCode;

/**
 * Placement termination status, mirroring the library's own.
 */
typedef enum FactsStatus {
  /**
   * Converged and re-verified feasible on exact flows.
   */
  FACTS_STATUS_SOLVED = 0,
  /**
   * Some linearized subproblem admitted no feasible correction.
   */
  FACTS_STATUS_INFEASIBLE_LP = 1,
  /**
   * The outer iteration cap was reached first.
   */
  FACTS_STATUS_ITER_LIMIT = 2,
} FactsStatus;

/**
 * Linearization strategy selector for [`FactsPlaceOptions`].
 */
typedef enum FactsStrategy {
  /**
   * Linearize every constraint of every scenario each iteration.
   */
  FACTS_STRATEGY_DIRECT = 0,
  /**
   * Cutting-plane: grow the constraint set from observed violations.
   */
  FACTS_STRATEGY_IMPROVED = 1,
} FactsStrategy;

/**
 * Cutting-plane growth policy for [`FactsPlaceOptions`].
 */
typedef enum FactsViolationMove {
  /**
   * Add only the single worst violation per iteration.
   */
  FACTS_VIOLATION_MOVE_MOST_VIOLATED = 0,
  /**
   * Add every currently violated constraint.
   */
  FACTS_VIOLATION_MOVE_ALL_VIOLATED = 1,
} FactsViolationMove;

/**
 * Opaque handle to a loaded grid. Create with [`facts_grid_from_native`]
 * or [`facts_grid_from_matpower`], release with [`facts_grid_free`].
 */
typedef struct FactsGrid FactsGrid;

/**
 * Opaque handle to a placement result. Created by [`facts_place`],
 * released with [`facts_result_free`].
 */
typedef struct FactsResult FactsResult;

/**
 * Plain-data mirror of the library's placement options. Obtain the
 * defaults from [`facts_place_options_default`] and adjust fields.
 */
typedef struct FactsPlaceOptions {
  enum FactsStrategy strategy;
  enum FactsViolationMove violation_move;
  /**
   * Outer-iteration cap.
   */
  size_t max_outer_iters;
  /**
   * Convergence threshold on the susceptance step (infinity norm).
   * Any value `<= 0` selects the automatic scale-relative default.
   */
  double beta_tolerance;
  /**
   * Lower bound applied to every line's susceptance.
   */
  double beta_lower;
  /**
   * Relative slack accepted on line limits at re-verification.
   */
  double feasibility_tolerance;
} FactsPlaceOptions;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the current thread's most recent failure, or an empty
 * string when nothing has failed yet. The pointer stays valid until
 * this thread's next failing `facts_*` call; do not free it.
 */
const char *facts_last_error(void);

/**
 * Library version as a static string; do not free it.
 */
const char *facts_version(void);

/**
 * Parse a grid from native JSON (the `factsopt-grid` schema) and hand
 * back an owned handle.
 *
 * # Safety
 * `json` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FactsErrorCode facts_grid_from_native(const char *json, struct FactsGrid **out);

/**
 * Parse a grid from MATPOWER case text and hand back an owned handle.
 *
 * # Safety
 * `text` must be a NUL-terminated string and `out` a valid pointer.
 */
enum FactsErrorCode facts_grid_from_matpower(const char *text, struct FactsGrid **out);

/**
 * Release a grid handle. Null is a no-op.
 *
 * # Safety
 * `grid` must be a pointer returned by a `facts_grid_from_*` call that
 * has not already been freed.
 */
void facts_grid_free(struct FactsGrid *grid);

/**
 * Number of buses, or 0 when `grid` is null.
 *
 * # Safety
 * `grid`, when non-null, must be a live grid handle.
 */
size_t facts_grid_num_buses(const struct FactsGrid *grid);

/**
 * Number of lines, or 0 when `grid` is null.
 *
 * # Safety
 * `grid`, when non-null, must be a live grid handle.
 */
size_t facts_grid_num_lines(const struct FactsGrid *grid);

/**
 * Copy the per-unit line susceptances into `out` (length must equal
 * the line count).
 *
 * # Safety
 * `grid` must be a live grid handle and `out` must point to `len`
 * writable doubles.
 */
enum FactsErrorCode facts_grid_susceptances(const struct FactsGrid *grid, double *out, size_t len);

/**
 * Minimum-cost balanced dispatch for the grid's generators, written as
 * per-bus MW injections into `out` (length must equal the bus count).
 *
 * # Safety
 * `grid` must be a live grid handle and `out` must point to `len`
 * writable doubles.
 */
enum FactsErrorCode facts_base_opf(const struct FactsGrid *grid, double *out, size_t len);

/**
 * Critical scaling of a dispatch: the largest uniform multiplier that
 * keeps every line within its limit, together with the line that binds
 * there.
 *
 * # Safety
 * `grid` must be a live grid handle, `injections` must point to `len`
 * doubles, and the out-pointers must be valid.
 */
enum FactsErrorCode facts_alpha_c(const struct FactsGrid *grid,
                                  const double *injections,
                                  size_t len,
                                  double *out_alpha,
                                  size_t *out_line);

/**
 * The library's default placement options.
 */
struct FactsPlaceOptions facts_place_options_default(void);

/**
 * Relieve the overloads produced by one injection scenario (per-bus
 * MW, summing to zero) by re-placing line susceptances. `options` may
 * be null for the defaults. On success `out` receives an owned result
 * handle.
 *
 * # Safety
 * `grid` must be a live grid handle, `injections` must point to `len`
 * doubles, `options` must be null or valid, and `out` must be a valid
 * pointer.
 */
enum FactsErrorCode facts_place(const struct FactsGrid *grid,
                                const double *injections,
                                size_t len,
                                const struct FactsPlaceOptions *options,
                                struct FactsResult **out);

/**
 * Release a result handle. Null is a no-op.
 *
 * # Safety
 * `result` must be a pointer returned by [`facts_place`] that has not
 * already been freed.
 */
void facts_result_free(struct FactsResult *result);

/**
 * Termination status of a placement run.
 *
 * # Safety
 * `result` must be a live result handle and `out` a valid pointer.
 */
enum FactsErrorCode facts_result_status(const struct FactsResult *result, enum FactsStatus *out);

/**
 * Total l1 placement cost (sum of absolute susceptance changes).
 *
 * # Safety
 * `result` must be a live result handle and `out` a valid pointer.
 */
enum FactsErrorCode facts_result_cost(const struct FactsResult *result, double *out);

/**
 * Number of outer iterations the run took.
 *
 * # Safety
 * `result` must be a live result handle and `out` a valid pointer.
 */
enum FactsErrorCode facts_result_iterations(const struct FactsResult *result, size_t *out);

/**
 * Copy the final susceptance vector into `out` (length must equal the
 * grid's line count).
 *
 * # Safety
 * `result` must be a live result handle and `out` must point to `len`
 * writable doubles.
 */
enum FactsErrorCode facts_result_beta(const struct FactsResult *result, double *out, size_t len);

/**
 * Copy the susceptance change vector (final minus initial) into `out`
 * (length must equal the grid's line count).
 *
 * # Safety
 * `result` must be a live result handle and `out` must point to `len`
 * writable doubles.
 */
enum FactsErrorCode facts_result_delta(const struct FactsResult *result, double *out, size_t len);

/**
 * Number of materially modified lines; sizes the buffer for
 * [`facts_result_modified_lines`].
 *
 * # Safety
 * `result` must be a live result handle and `out` a valid pointer.
 */
enum FactsErrorCode facts_result_num_modified(const struct FactsResult *result, size_t *out);

/**
 * Copy the ascending indices of materially modified lines into `out`
 * (length must equal [`facts_result_num_modified`]).
 *
 * # Safety
 * `result` must be a live result handle and `out` must point to `len`
 * writable values.
 */
enum FactsErrorCode facts_result_modified_lines(const struct FactsResult *result,
                                                size_t *out,
                                                size_t len);

#ifdef __cplusplus
} // extern "C"
#endif // __cplusplus

#endif /* FACTSOPT_H */
