/*
 * twophase: weighted-likelihood Cox regression for two-phase stratified
 * samples, with design-based variance estimators and a Monte Carlo study
 * driver. C interface to the shared library; every entry point returns a
 * status code and, on request, an opaque result handle owning all strings.
 */
#ifndef TWOPHASE_H
#define TWOPHASE_H

#ifdef __cplusplus
extern "C" {
#endif

typedef enum tp_status {
  TP_OK = 0,
  TP_ERR_IO = 1,             /* file unreadable or unwritable */
  TP_ERR_SCHEMA = 2,         /* malformed CSV/JSON, message carries location */
  TP_ERR_INVALID = 3,        /* argument or config violates a precondition */
  TP_ERR_DEGENERATE = 4,     /* no weighted events, empty stratum, ... */
  TP_ERR_SINGULAR = 5,       /* collinear covariates / rank-deficient model */
  TP_ERR_NOT_CONVERGED = 6,  /* iteration budget exhausted */
  TP_ERR_DIVERGED = 7,       /* monotone-likelihood runaway */
  TP_ERR_OVERFLOW = 8,       /* exp(linear predictor) out of range */
  TP_ERR_INTERNAL = 9
} tp_status;

typedef struct tp_result tp_result;

const char* tp_version(void);

/* CLI convention: 0 ok, 1 I/O or schema or config, 2 model error. */
int tp_exit_code(tp_status status);

/*
 * Fits the weighted-likelihood Cox model. data_csv_path points to a phase-one
 * table (columns id, time, status, stratum, sampled, optional pi/aux.*, and
 * z.* covariates); design_json_path declares the sampling design;
 * options_json may be NULL or a JSON object with solver settings.
 *
 * On any status the returned handle (unless allocation itself failed) carries
 * a report: the fit report JSON on success, a machine-readable error object
 * otherwise. The caller frees it with tp_result_free.
 */
tp_status tp_fit(const char* data_csv_path, const char* design_json_path,
                 const char* options_json, tp_result** out);

/* Same, with the table and design passed as in-memory buffers. */
tp_status tp_fit_buffers(const char* data_csv, const char* design_json,
                         const char* options_json, tp_result** out);

/*
 * Runs the Monte Carlo study described by a scenario JSON file.
 * overrides_json may be NULL or {"replicates":..,"seed":..,"threads":..,
 * "dump_replicate":..}; dump_replicate additionally exposes that replicate's
 * phase-one table through tp_result_cohort_csv.
 */
tp_status tp_simulate(const char* scenario_json_path, const char* overrides_json,
                      tp_result** out);
tp_status tp_simulate_buffer(const char* scenario_json, const char* overrides_json,
                             tp_result** out);

tp_status tp_result_status(const tp_result* result);

/* NULL when the result carries no error. */
const char* tp_result_error(const tp_result* result);

/* Fit report, study summary, or error object, depending on the call. */
const char* tp_result_report_json(const tp_result* result);

/* Per-replicate CSV after tp_simulate; NULL otherwise. */
const char* tp_result_replicates_csv(const tp_result* result);

/* Dumped replicate table after tp_simulate with dump_replicate; else NULL. */
const char* tp_result_cohort_csv(const tp_result* result);

void tp_result_free(tp_result* result);

#ifdef __cplusplus
}
#endif

#endif /* TWOPHASE_H */
