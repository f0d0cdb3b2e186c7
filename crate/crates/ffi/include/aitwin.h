#ifndef AITWIN_H
#define AITWIN_H

/* Generated by cbindgen from src/lib.rs; do not edit. */

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum AitwinStatus {
  AITWIN_STATUS_OK = 0,
  AITWIN_STATUS_NULL_POINTER = 1,
  AITWIN_STATUS_INVALID_ARGUMENT = 2,
  AITWIN_STATUS_PARSE = 3,
  AITWIN_STATUS_NOT_FITTED = 4,
  AITWIN_STATUS_OUT_OF_RANGE = 5,
  AITWIN_STATUS_SCHEMA_MISMATCH = 6,
  AITWIN_STATUS_UNKNOWN_NAME = 7,
  AITWIN_STATUS_NOT_COMPUTABLE = 8,
  AITWIN_STATUS_BUFFER_TOO_SMALL = 9,
  AITWIN_STATUS_IO = 10,
  AITWIN_STATUS_PANIC = 99,
} AitwinStatus;

/**
 * A prediction session with its own failure assignment.
 */
typedef struct AitwinSession AitwinSession;

/**
 * A plant twin: data store, components, fitted model and causal model.
 */
typedef struct AitwinTwin AitwinTwin;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message of the last failed call on this thread, or null. The pointer is
 * valid until the next failing call on the same thread.
 */
const char *aitwin_last_error(void);

/**
 * Library version as a static NUL-terminated string.
 */
const char *aitwin_version(void);

/**
 * Simulates the scenario in TOML `scenario` and wraps its plant and data in a twin.
 *
 * # Safety
 * `scenario` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AitwinStatus aitwin_twin_from_scenario(const char *scenario, struct AitwinTwin **out);

/**
 * Like [`aitwin_twin_from_scenario`], reading the scenario from a file.
 *
 * # Safety
 * `path` must be a NUL-terminated string and `out` a valid pointer.
 */
enum AitwinStatus aitwin_twin_from_scenario_file(const char *path, struct AitwinTwin **out);

/**
 * # Safety
 * `twin` must come from this library and not be used afterwards. Null is ignored.
 */
void aitwin_twin_free(struct AitwinTwin *twin);

/**
 * # Safety
 * Pointers must be valid.
 */
enum AitwinStatus aitwin_twin_signal_count(const struct AitwinTwin *twin, size_t *out);

/**
 * # Safety
 * Pointers must be valid.
 */
enum AitwinStatus aitwin_twin_component_count(const struct AitwinTwin *twin, size_t *out);

/**
 * First and last stored timestamps.
 *
 * # Safety
 * Pointers must be valid.
 */
enum AitwinStatus aitwin_twin_time_range(const struct AitwinTwin *twin,
                                         double *first,
                                         double *last);

/**
 * Signal `index` at time `t`, interpolated between stored samples.
 *
 * # Safety
 * Pointers must be valid.
 */
enum AitwinStatus aitwin_twin_get_data(const struct AitwinTwin *twin,
                                       size_t index,
                                       double t,
                                       double *out);

/**
 * All signals at time `t` into `out[0..len]`; `len` must equal the signal count.
 *
 * # Safety
 * `out` must hold `len` doubles.
 */
enum AitwinStatus aitwin_twin_get_data_all(const struct AitwinTwin *twin,
                                           double t,
                                           double *out,
                                           size_t len);

/**
 * Appends a sample; `t` must be after the last stored timestamp.
 *
 * # Safety
 * `values` must hold `len` doubles.
 */
enum AitwinStatus aitwin_twin_ingest(const struct AitwinTwin *twin,
                                     double t,
                                     const double *values,
                                     size_t len);

/**
 * Fits `backend` ("knn-kde" or "physics") on the stored samples before `until`.
 * Sessions created afterwards use the new model.
 *
 * # Safety
 * `backend` must be a NUL-terminated string.
 */
enum AitwinStatus aitwin_twin_fit(struct AitwinTwin *twin, const char *backend, double until);

/**
 * Defines an event from text such as `"t0_level > 0.9"` and returns its id.
 *
 * # Safety
 * Strings must be NUL-terminated; `id` must be valid.
 */
enum AitwinStatus aitwin_twin_define_event(struct AitwinTwin *twin,
                                           const char *halfspace,
                                           const char *name,
                                           uint32_t *id);

/**
 * Defines a concept from `&`-separated inequalities and returns its id.
 *
 * # Safety
 * Strings must be NUL-terminated; `id` must be valid.
 */
enum AitwinStatus aitwin_twin_define_concept(struct AitwinTwin *twin,
                                             const char *region,
                                             const char *name,
                                             uint32_t *id);

/**
 * Events whose boundary lies between `x` and `x2`. `*count` is always set;
 * the ids are written when they fit in `cap`.
 *
 * # Safety
 * `x` and `x2` must hold `len` doubles, `out` `cap` ids.
 */
enum AitwinStatus aitwin_twin_get_event(const struct AitwinTwin *twin,
                                        const double *x,
                                        const double *x2,
                                        size_t len,
                                        uint32_t *out,
                                        size_t cap,
                                        size_t *count);

/**
 * Concepts containing `x`, with the same buffer protocol as [`aitwin_twin_get_event`].
 *
 * # Safety
 * `x` must hold `len` doubles, `out` `cap` ids.
 */
enum AitwinStatus aitwin_twin_get_concepts(const struct AitwinTwin *twin,
                                           const double *x,
                                           size_t len,
                                           uint32_t *out,
                                           size_t cap,
                                           size_t *count);

/**
 * A session over the twin's current model, with no failures assigned.
 *
 * # Safety
 * Pointers must be valid.
 */
enum AitwinStatus aitwin_session_new(const struct AitwinTwin *twin, struct AitwinSession **out);

/**
 * # Safety
 * `session` must come from this library and not be used afterwards. Null is ignored.
 */
void aitwin_session_free(struct AitwinSession *session);

/**
 * Adds `component` in failure mode `mode` to the session's assignment.
 *
 * # Safety
 * Strings must be NUL-terminated.
 */
enum AitwinStatus aitwin_session_set_failed(struct AitwinSession *session,
                                            const char *component,
                                            const char *mode);

/**
 * Restores the all-OK assignment.
 *
 * # Safety
 * `session` must be valid.
 */
enum AitwinStatus aitwin_session_clear_failed(struct AitwinSession *session);

/**
 * Completes `partial` (NaN = missing) into `out_x`; `out_p` may be null.
 *
 * # Safety
 * `partial`, `out_x` and a non-null `out_p` must hold `len` doubles.
 */
enum AitwinStatus aitwin_session_extrapolate_static(const struct AitwinSession *session,
                                                    const double *partial,
                                                    size_t len,
                                                    double *out_x,
                                                    double *out_p);

/**
 * Predicts the sample `horizon` seconds after the last row of the window.
 * `values` is row-major, `rows × len`.
 *
 * # Safety
 * `times` must hold `rows` doubles, `values` `rows × len`, outputs `len`.
 */
enum AitwinStatus aitwin_session_extrapolate_dynamic(const struct AitwinSession *session,
                                                     const double *times,
                                                     const double *values,
                                                     size_t rows,
                                                     size_t len,
                                                     double horizon,
                                                     double *out_x,
                                                     double *out_p);

/**
 * Static anomaly score in `[0, 1]` of a complete vector; low means anomalous.
 *
 * # Safety
 * `x` must hold `len` doubles.
 */
enum AitwinStatus aitwin_session_anomaly_score_static(const struct AitwinSession *session,
                                                      const double *x,
                                                      size_t len,
                                                      double *out);

/**
 * Dynamic anomaly score of the window's last row given the rows before it.
 *
 * # Safety
 * `times` must hold `rows` doubles and `values` `rows × len`.
 */
enum AitwinStatus aitwin_session_anomaly_score_dynamic(const struct AitwinSession *session,
                                                       const double *times,
                                                       const double *values,
                                                       size_t rows,
                                                       size_t len,
                                                       double *out);

/**
 * ROC AUC of `scores` against `anomalous` (nonzero = anomalous, low score =
 * anomalous). Fails with `InvalidArgument` unless both classes occur.
 *
 * # Safety
 * Both arrays must hold `len` entries.
 */
enum AitwinStatus aitwin_auc(const double *scores,
                             const uint8_t *anomalous,
                             size_t len,
                             double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* AITWIN_H */
