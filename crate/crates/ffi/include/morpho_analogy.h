#ifndef MORPHO_ANALOGY_H
#define MORPHO_ANALOGY_H

#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>

typedef enum MorphoStatus {
  MORPHO_STATUS_OK = 0,
  MORPHO_STATUS_NULL_POINTER = 1,
  MORPHO_STATUS_INVALID_UTF8 = 2,
  MORPHO_STATUS_INVALID_ARGUMENT = 3,
  MORPHO_STATUS_NOT_FOUND = 4,
  MORPHO_STATUS_SOLVER_FAILED = 5,
  MORPHO_STATUS_PANIC = 6,
} MorphoStatus;

/*
 The ranked candidates of one solved equation.
 */
typedef struct MorphoRanking MorphoRanking;

/*
 A solver instance.
 */
typedef struct MorphoSolver MorphoSolver;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/*
 Message of the last failed call on this thread, or null. The pointer is
 valid until the next failing call on the same thread.
 */
const char *morpho_last_error_message(void);

void morpho_clear_last_error(void);

/*
 Library version as a static NUL-terminated string.
 */
const char *morpho_version(void);

/*
 Creates the sampling solver with `trials` random interleavings.

 # Safety
 `out` must be a valid pointer to writable storage for a handle.
 */
enum MorphoStatus morpho_solver_new_alea(uint32_t trials, uint64_t seed, struct MorphoSolver **out);

/*
 Creates the edit-program solver. A `node_budget` of 0 means no budget.

 # Safety
 `out` must be a valid pointer to writable storage for a handle.
 */
enum MorphoStatus morpho_solver_new_kolmo(uint64_t node_budget, struct MorphoSolver **out);

/*
 Opens any solver of a prepared run directory by name, loading the
 checkpoints trained for `seed`.

 # Safety
 `run_dir` and `name` must be NUL-terminated strings; `out` must be valid.
 */
enum MorphoStatus morpho_solver_open(const char *run_dir,
                                     const char *name,
                                     uint64_t seed,
                                     struct MorphoSolver **out);

/*
 Releases a solver. Null is ignored.

 # Safety
 `solver` must come from a constructor of this library and not be used
 afterwards.
 */
void morpho_solver_free(struct MorphoSolver *solver);

/*
 Solves `a:b::c:x`. A negative `timeout_secs` disables the time limit.
 Timeouts are not errors: the ranking reports them.

 # Safety
 `solver` must be a live handle, the words NUL-terminated strings and
 `out` valid.
 */
enum MorphoStatus morpho_solve(const struct MorphoSolver *solver,
                               const char *a,
                               const char *b,
                               const char *c,
                               double timeout_secs,
                               struct MorphoRanking **out);

/*
 Number of candidates in the ranking (0 for null).

 # Safety
 `ranking` must be null or a live handle.
 */
size_t morpho_ranking_len(const struct MorphoRanking *ranking);

/*
 Candidate word at `index`, or null when out of range. The string lives
 as long as the ranking.

 # Safety
 `ranking` must be null or a live handle.
 */
const char *morpho_ranking_word(const struct MorphoRanking *ranking, size_t index);

/*
 Score of the candidate at `index`; NaN when out of range.

 # Safety
 `ranking` must be null or a live handle.
 */
double morpho_ranking_score(const struct MorphoRanking *ranking, size_t index);

/*
 True when the solver hit its time limit.

 # Safety
 `ranking` must be null or a live handle.
 */
bool morpho_ranking_timed_out(const struct MorphoRanking *ranking);

/*
 True when the solver proved that no solution exists.

 # Safety
 `ranking` must be null or a live handle.
 */
bool morpho_ranking_no_solution(const struct MorphoRanking *ranking);

/*
 Releases a ranking. Null is ignored.

 # Safety
 `ranking` must come from [`morpho_solve`] and not be used afterwards.
 */
void morpho_ranking_free(struct MorphoRanking *ranking);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* MORPHO_ANALOGY_H */
