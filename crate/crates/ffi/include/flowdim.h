#ifndef FLOWDIM_H
#define FLOWDIM_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result codes. The nonzero values agree with the CLI exit codes where
// both exist.
typedef enum FlowdimStatus {
  FLOWDIM_STATUS_OK = 0,
  FLOWDIM_STATUS_NULL_POINTER = 1,
  FLOWDIM_STATUS_VALIDATION = 2,
  FLOWDIM_STATUS_INFEASIBLE = 3,
  FLOWDIM_STATUS_NUMERICAL = 4,
  FLOWDIM_STATUS_INVALID_UTF8 = 5,
  FLOWDIM_STATUS_BUFFER_TOO_SMALL = 6,
  FLOWDIM_STATUS_PANIC = 7,
} FlowdimStatus;

// Opaque Markov measure together with the model presentation it lives on.
typedef struct FlowdimMeasure FlowdimMeasure;

// Opaque validated model.
typedef struct FlowdimModel FlowdimModel;

// Invariants of the suspension flow under a measure.
typedef struct FlowdimStats {
  double h_flow;
  double lambda;
  double dim;
  double a;
  double b;
  double roof_mean;
} FlowdimStats;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message for the last failed call on this thread, or NULL. The pointer
// stays valid until the next flowdim call on the same thread.
const char *flowdim_last_error(void);

// Library version as a static NUL-terminated string.
const char *flowdim_version(void);

// Parses and validates a JSON model document.
enum FlowdimStatus flowdim_model_from_json(const char *json, struct FlowdimModel **out);

// Loads a bundled model by name.
enum FlowdimStatus flowdim_model_from_preset(const char *name, struct FlowdimModel **out);

void flowdim_model_free(struct FlowdimModel *model);

// Number of symbols, or 0 for NULL.
size_t flowdim_model_alphabet_size(const struct FlowdimModel *model);

// Bowen root of `F^u`: the zero of `s -> P(-s F^u)`.
enum FlowdimStatus flowdim_model_bowen_root(const struct FlowdimModel *model, double *out);

// Solves for a Markov measure of dimension two. `tol <= 0` selects the
// default tolerance.
enum FlowdimStatus flowdim_solve(const struct FlowdimModel *model,
                                 double tol,
                                 struct FlowdimMeasure **out);

// The Markov matrix stored in the model document.
enum FlowdimStatus flowdim_measure_from_model(const struct FlowdimModel *model,
                                              struct FlowdimMeasure **out);

void flowdim_measure_free(struct FlowdimMeasure *measure);

// Alphabet size of the presentation the measure lives on, or 0 for NULL.
size_t flowdim_measure_size(const struct FlowdimMeasure *measure);

// Copies the transition matrix, row-major, into `buf` of `len` doubles.
enum FlowdimStatus flowdim_measure_matrix(const struct FlowdimMeasure *measure,
                                          double *buf,
                                          size_t len);

enum FlowdimStatus flowdim_measure_stats(const struct FlowdimMeasure *measure,
                                         struct FlowdimStats *out);

// Exact fluctuation covariance of `(-G - a, F^u - b)`, written row-major
// into `out[4]`.
enum FlowdimStatus flowdim_measure_covariance(const struct FlowdimMeasure *measure, double *out);

// The measure embedded in its model as a JSON document. Release with
// `flowdim_string_free`.
enum FlowdimStatus flowdim_measure_to_json(const struct FlowdimMeasure *measure, char **out);

void flowdim_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* FLOWDIM_H */
