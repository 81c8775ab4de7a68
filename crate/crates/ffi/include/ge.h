#ifndef GE_H
#define GE_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code of every call.
typedef enum GeStatus {
  GE_STATUS_OK = 0,
  // A required pointer was null.
  GE_STATUS_NULL_ARGUMENT = 1,
  // An argument was out of range or had the wrong length.
  GE_STATUS_INVALID_ARGUMENT = 2,
  // The model text could not be read or parsed.
  GE_STATUS_PARSE_ERROR = 3,
  // The model failed validation.
  GE_STATUS_INVALID_MODEL = 4,
  // The objective has no minimizer on some segment.
  GE_STATUS_NOT_ATTAINED = 5,
  // The solver or simulation stopped without a certified result.
  GE_STATUS_FAILED = 6,
  // A Rust panic was caught at the boundary.
  GE_STATUS_PANIC = 7,
} GeStatus;

// A validated market model.
typedef struct GeModel GeModel;

// Optimal fractions for every segment of a model.
typedef struct GeSolution GeSolution;

// Solver settings; obtain defaults from [`ge_solve_options_default`].
typedef struct GeSolveOptions {
  double tol;
  size_t max_iter;
  size_t n_probes;
  size_t n_dirs;
  uint64_t seed;
  bool force_continuation;
} GeSolveOptions;

// Terminal statistics of a simulation under the optimal fractions.
typedef struct GeSimSummary {
  size_t n_paths;
  double mean_log_wealth;
  double log_wealth_std_error;
  double mean_wealth;
  double wealth_std_error;
  // Mean of wealth times deflator at the horizon.
  double mean_product;
  double product_std_error;
  double min_wealth;
  double min_deflator;
} GeSimSummary;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message of the last failed call on this thread, or null. The pointer stays
// valid until the next call into this library on the same thread.
const char *ge_last_error(void);

// Loads and validates a TOML model file.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must be writable.
enum GeStatus ge_model_load(const char *path, struct GeModel **out);

// Parses and validates a TOML model held in memory.
//
// # Safety
// `text` must be a NUL-terminated string; `out` must be writable.
enum GeStatus ge_model_parse(const char *text, struct GeModel **out);

// # Safety
// `model` must come from this library and not be used afterwards.
void ge_model_free(struct GeModel *model);

// Writes the number of assets and of time segments.
//
// # Safety
// Pointers must be valid; `dim` and `segments` may be null.
enum GeStatus ge_model_shape(const struct GeModel *model, size_t *dim, size_t *segments);

// Evaluates the objective on one segment at `lambda` (length `len`). With
// `delta` in (0, 1) the smoothed objective is used; `delta == 1` gives the
// exact one. Outside the domain `value` is +infinity and `gradient` is left
// untouched. `gradient` may be null; otherwise it must hold `len` entries.
//
// # Safety
// Pointers must be valid for the stated lengths.
enum GeStatus ge_objective(const struct GeModel *model,
                           size_t segment,
                           const double *lambda,
                           size_t len,
                           double delta,
                           double *value,
                           double *gradient);

struct GeSolveOptions ge_solve_options_default(void);

// Computes the optimal fractions. `options` may be null for defaults.
// Returns `GE_STATUS_NOT_ATTAINED` with the witness direction in the error
// message when no minimizer exists.
//
// # Safety
// Pointers must be valid; `out` must be writable.
enum GeStatus ge_solve(const struct GeModel *model,
                       const struct GeSolveOptions *options,
                       struct GeSolution **out);

// # Safety
// `solution` must come from this library and not be used afterwards.
void ge_solution_free(struct GeSolution *solution);

// Optimal expected log-wealth at the horizon.
//
// # Safety
// Pointers must be valid.
enum GeStatus ge_solution_log_wealth(const struct GeSolution *solution, double *out);

// Copies the optimal fraction of `segment` into `out` (length `len`).
//
// # Safety
// `out` must hold `len` doubles.
enum GeStatus ge_solution_fraction(const struct GeSolution *solution,
                                   size_t segment,
                                   double *out,
                                   size_t len);

// Simulates wealth and the optimal deflator on `n_paths` paths.
//
// # Safety
// Pointers must be valid; `solution` must come from `ge_solve` on `model`.
enum GeStatus ge_simulate(const struct GeModel *model,
                          const struct GeSolution *solution,
                          size_t n_paths,
                          double steps_per_unit,
                          uint64_t seed,
                          struct GeSimSummary *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* GE_H */
