#ifndef BSPDOT_H
#define BSPDOT_H

/* C interface to the block-SPD transport library. Functions return a status
 * code; on failure bspdot_last_error() holds a message for the calling thread.
 * Strings handed out by the library are released with bspdot_string_free. */

#include <stddef.h>

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define BSPDOT_API __declspec(dllexport)
#else
#define BSPDOT_API __attribute__((visibility("default")))
#endif

typedef enum {
  BSPDOT_OK = 0,
  BSPDOT_INVALID_INPUT = 1,
  BSPDOT_NOT_POSITIVE_DEFINITE = 2,
  BSPDOT_PROJECTION_FAILED = 3,
  BSPDOT_NOT_CONVERGED = 4,
  BSPDOT_FEASIBILITY_UNKNOWN = 5,
  BSPDOT_INFEASIBLE_START = 6,
  BSPDOT_INNER_SOLVE_FAILED = 7,
  BSPDOT_STALLED_AT_BOUNDARY = 8,
  BSPDOT_IO_ERROR = 9,
  BSPDOT_INTERNAL = 10
} bspdot_status;

typedef struct bspdot_problem bspdot_problem;
typedef struct bspdot_result bspdot_result;

typedef struct {
  int timestamps; /* nonzero: record wall times and a timestamp */
  int mds_dim;    /* gw: MDS embedding dimension, 0 for none */
  int baseline;   /* interpolate: also emit the linear interpolation */
  const double* times; /* interpolate: NULL keeps 0, .25, .5, .75, 1 */
  size_t time_count;
} bspdot_run_options;

BSPDOT_API const char* bspdot_version(void);
BSPDOT_API const char* bspdot_status_name(bspdot_status status);
BSPDOT_API const char* bspdot_last_error(void);
BSPDOT_API void bspdot_string_free(char* s);
BSPDOT_API bspdot_run_options bspdot_default_run_options(void);

BSPDOT_API bspdot_status bspdot_problem_load(const char* path, bspdot_problem** out);
BSPDOT_API bspdot_status bspdot_problem_parse(const char* json_text, bspdot_problem** out);
BSPDOT_API void bspdot_problem_free(bspdot_problem* problem);
/* "mw", "barycenter", "gw", "interpolate" or "adapt"; owned by the handle. */
BSPDOT_API const char* bspdot_problem_kind(const bspdot_problem* problem);

/* Runs the problem according to its kind. A solver that stops without
 * converging still yields a result; see bspdot_result_converged. */
BSPDOT_API bspdot_status bspdot_run(const bspdot_problem* problem,
                                    const bspdot_run_options* options, bspdot_result** out);
/* Balances P_i^{1/2} Q_j P_i^{1/2} onto the marginals of an mw problem. */
BSPDOT_API bspdot_status bspdot_check(const bspdot_problem* problem,
                                      const bspdot_run_options* options, bspdot_result** out);
/* One CSV row per trial of an adapt problem, plus a mean row. */
BSPDOT_API bspdot_status bspdot_adapt_csv(const bspdot_problem* problem, char** csv);

BSPDOT_API int bspdot_result_converged(const bspdot_result* result);
BSPDOT_API double bspdot_result_objective(const bspdot_result* result);
BSPDOT_API const char* bspdot_result_summary(const bspdot_result* result);
BSPDOT_API bspdot_status bspdot_result_json(const bspdot_result* result, char** json_text);
BSPDOT_API bspdot_status bspdot_result_write(const bspdot_result* result, const char* path);
BSPDOT_API size_t bspdot_result_artifact_count(const bspdot_result* result);
/* Borrowed pointers, valid until the result is freed. */
BSPDOT_API bspdot_status bspdot_result_artifact(const bspdot_result* result, size_t index,
                                                const char** name, const char** text);
BSPDOT_API void bspdot_result_free(bspdot_result* result);

/* Reads a tensor-field document and renders it as SVG ellipses. */
BSPDOT_API bspdot_status bspdot_render_svg(const char* field_json, double gamma, char** svg);

/* Built-in checks; *report gets one "PASS name: detail" line per check and
 * *passed is set when all of them pass. */
BSPDOT_API bspdot_status bspdot_selftest(char** report, int* passed);

/* Dense entry point: marginals as m (resp. n) row-major d x d blocks, cost as
 * m * n blocks, coupling output as m * n blocks. Quantum-entropy regularizer,
 * default solver settings. */
BSPDOT_API bspdot_status bspdot_mw_dense(int m, int n, int d, const double* p, const double* q,
                                         const double* cost, double epsilon, double* coupling,
                                         double* objective);

#ifdef __cplusplus
}
#endif

#endif
