/* Generated by cbindgen from crates/ffi/src/lib.rs; do not edit. */

#ifndef DEQ_H
#define DEQ_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum DeqStatus {
  DEQ_STATUS_OK = 0,
  DEQ_STATUS_NULL_POINTER = 1,
  DEQ_STATUS_INVALID_ARGUMENT = 2,
  /**
   * A layer map could not be evaluated (critical point, missing entry, ...).
   */
  DEQ_STATUS_EVALUATION = 3,
  /**
   * A value does not fit the output type.
   */
  DEQ_STATUS_OVERFLOW = 4,
  DEQ_STATUS_JSON = 5,
  DEQ_STATUS_UTF8 = 6,
  DEQ_STATUS_PANIC = 7,
} DeqStatus;

/**
 * A self-map of `{1, ..., m}`.
 */
typedef struct DeqFiniteMap DeqFiniteMap;

/**
 * A layer function from the catalog.
 */
typedef struct DeqFunction DeqFunction;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. Valid until the
 * next failing call on the same thread.
 */
const char *deq_last_error_message(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *deq_version(void);

/**
 * Builds a finite map from a 1-based table of length `len`.
 *
 * # Safety
 * `table` is valid for `len` reads; `out` is writable.
 */
enum DeqStatus deq_finite_map_new(const uint32_t *table, size_t len, struct DeqFiniteMap **out);

/**
 * # Safety
 * `map` is null or was returned by `deq_finite_map_new` and not yet freed.
 */
void deq_finite_map_free(struct DeqFiniteMap *map);

/**
 * Number of elements `m`; 0 for a null handle.
 *
 * # Safety
 * `map` is null or a live handle.
 */
size_t deq_finite_map_len(const struct DeqFiniteMap *map);

/**
 * Writes `f*` (1-based, `m` entries) to `f_star`, the least `N` to `n_out`,
 * the tail length to `tail_out` and the core order `K` to `order_out`. Any
 * of the scalar outputs may be null. `DEQ_STATUS_OVERFLOW` if `N` or `K`
 * exceeds 64 bits.
 *
 * # Safety
 * `map` is a live handle; `f_star` is valid for `m` writes; non-null
 * scalar outputs are writable.
 */
enum DeqStatus deq_finite_deep_equilibrium(const struct DeqFiniteMap *map,
                                           uint32_t *f_star,
                                           uint64_t *n_out,
                                           uint32_t *tail_out,
                                           uint64_t *order_out);

/**
 * Parses a layer function from its JSON form, e.g. `{"type":"square"}`.
 *
 * # Safety
 * `json` is a NUL-terminated string; `out` is writable.
 */
enum DeqStatus deq_function_from_json(const char *json, struct DeqFunction **out);

/**
 * Newton map of a real polynomial on `(re, im)`; coefficients leading first.
 *
 * # Safety
 * `coeffs` is valid for `len` reads; `out` is writable.
 */
enum DeqStatus deq_function_newton(const double *coeffs, size_t len, struct DeqFunction **out);

/**
 * # Safety
 * `f` is null or a live handle from this library.
 */
void deq_function_free(struct DeqFunction *f);

/**
 * Writes `f(v)` for a state of dimension `dim`.
 *
 * # Safety
 * `f` is a live handle; `v` and `out` are valid for `dim` elements.
 */
enum DeqStatus deq_function_eval(const struct DeqFunction *f,
                                 const double *v,
                                 size_t dim,
                                 double *out);

/**
 * Doubling test on `n` states of dimension `dim` (row-major), measured with
 * the coordinate predicates. Writes the approximate `f*` values to `out`
 * (`n * dim`), the iterate count to `n_out`, the residual to
 * `residual_out` and whether the tolerance was met to `converged_out`.
 * Non-convergence is a result, not an error.
 *
 * # Safety
 * `f` is a live handle; `states` and `out` are valid for `n * dim`
 * elements; the scalar outputs are writable.
 */
enum DeqStatus deq_iterate_until_equilibrium(const struct DeqFunction *f,
                                             const double *states,
                                             size_t n,
                                             size_t dim,
                                             double tol,
                                             size_t max_doublings,
                                             double *out,
                                             uint64_t *n_out,
                                             double *residual_out,
                                             bool *converged_out);

/**
 * Newton basins on a `res x res` grid over `grid = [xmin, xmax, ymin, ymax]`,
 * rows by `y` then `x`. Writes the root index of each cell to `root_index`
 * (`-1` if unattributed) and, if non-null, the computed roots as
 * `(re, im)` pairs to `roots` (`2 * (len - 1)` doubles).
 *
 * # Safety
 * `coeffs` is valid for `len` reads, `grid` for 4, `root_index` for
 * `res * res` writes and `roots`, if non-null, for `2 * (len - 1)`.
 */
enum DeqStatus deq_newton_basins(const double *coeffs,
                                 size_t len,
                                 const double *grid,
                                 size_t res,
                                 size_t max_iter,
                                 double tol,
                                 int32_t *root_index,
                                 double *roots);

/**
 * Runs a JSON problem file (the format accepted by `deq --problem`) and
 * stores the JSON report, without timing, in `report_out`. Free it with
 * `deq_string_free`.
 *
 * # Safety
 * `problem_json` is a NUL-terminated string; `report_out` is writable.
 */
enum DeqStatus deq_run_problem_json(const char *problem_json, char **report_out);

/**
 * # Safety
 * `s` is null or a string returned by this library and not yet freed.
 */
void deq_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* DEQ_H */
