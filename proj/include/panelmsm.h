/*
 * panelmsm C API: non-parametric estimation of cumulative transition
 * intensities for interval-censored Markov multi-state models.
 *
 * All functions returning int yield PMSM_OK (0) on success or a nonzero
 * status; pmsm_last_error() describes the most recent failure on the calling
 * thread. Objects are opaque handles released with the matching _free call.
 */
#ifndef PANELMSM_H
#define PANELMSM_H

#include <stddef.h>
#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

typedef struct pmsm_graph pmsm_graph;
typedef struct pmsm_panel pmsm_panel;
typedef struct pmsm_estimate pmsm_estimate;
typedef struct pmsm_fit pmsm_fit;
typedef struct pmsm_scenario pmsm_scenario;

enum {
  PMSM_OK = 0,
  PMSM_ERR_CONFIG = 2,   /* usage / configuration */
  PMSM_ERR_DATA = 3,     /* data validation */
  PMSM_ERR_NUMERIC = 4,  /* numeric failure */
  PMSM_ERR_NO_CONVERGENCE = 5,
};

enum {
  PMSM_ESTIMATOR_MULTINOMIAL = 0,
  PMSM_ESTIMATOR_POISSON = 1,
  PMSM_ESTIMATOR_CANONICAL = 2,
  PMSM_ESTIMATOR_MULTINOULLI = 3,
};

enum {
  PMSM_CRITERION_INTENSITY = 0, /* max intensity change */
  PMSM_CRITERION_LOGLIK = 1,
  PMSM_CRITERION_KKT = 2, /* reduced gradient */
};

const char* pmsm_version(void);
/* Message of the last failing call on this thread; empty string if none. */
const char* pmsm_last_error(void);

/* ---- model -------------------------------------------------------------- */

int pmsm_graph_read(const char* path, pmsm_graph** out);
int pmsm_graph_parse(const char* text, pmsm_graph** out);
int pmsm_graph_build(int num_states, const int* from, const int* to, int num_transitions, const int* exact,
                     int num_exact, pmsm_graph** out);
int pmsm_graph_write(const pmsm_graph* graph, const char* path);
int pmsm_graph_num_states(const pmsm_graph* graph);
int pmsm_graph_num_transitions(const pmsm_graph* graph);
int pmsm_graph_num_exact_states(const pmsm_graph* graph);
void pmsm_graph_free(pmsm_graph* graph);

/* ---- panel data ---------------------------------------------------------- */

int pmsm_panel_read(const char* path, const pmsm_graph* graph, pmsm_panel** out);
int pmsm_panel_write(const pmsm_panel* panel, const char* path);
int pmsm_panel_num_subjects(const pmsm_panel* panel);
int pmsm_panel_num_bins(const pmsm_panel* panel);
double pmsm_panel_max_bin_gap(const pmsm_panel* panel);
void pmsm_panel_free(pmsm_panel* panel);

/* ---- fitting -------------------------------------------------------------- */

typedef void (*pmsm_progress_fn)(int iteration, double max_delta, double loglik, void* user);

typedef struct pmsm_fit_options {
  int estimator;       /* PMSM_ESTIMATOR_* */
  double tolerance;    /* default 1e-4 */
  int criterion;       /* PMSM_CRITERION_* */
  int max_iterations;  /* default 5000 */
  const char* init_file; /* NULL: uniform 1/K initial estimate */
  int threads;         /* 0: hardware concurrency */
  int progress_every;  /* 0: no progress callbacks */
  pmsm_progress_fn progress;
  void* progress_user;
} pmsm_fit_options;

void pmsm_fit_options_init(pmsm_fit_options* options);

/* Runs the selected estimator. Returns PMSM_OK even when the run stopped at
 * max_iterations; inspect pmsm_fit_converged. */
int pmsm_fit_run(const pmsm_graph* graph, const pmsm_panel* panel, const pmsm_fit_options* options, pmsm_fit** out);

int pmsm_fit_converged(const pmsm_fit* fit);
int pmsm_fit_iterations(const pmsm_fit* fit);
const char* pmsm_fit_stop_reason(const pmsm_fit* fit);
const char* pmsm_fit_estimator(const pmsm_fit* fit);
double pmsm_fit_final_loglik(const pmsm_fit* fit);
double pmsm_fit_max_reduced_gradient(const pmsm_fit* fit);
int pmsm_fit_feasibility_warnings(const pmsm_fit* fit);
int pmsm_fit_loglik_decreases(const pmsm_fit* fit);
double pmsm_fit_max_loglik_decrease(const pmsm_fit* fit);

int pmsm_fit_write_intensities(const pmsm_fit* fit, const char* path);
int pmsm_fit_write_trace(const pmsm_fit* fit, const char* path);
int pmsm_fit_write_gradient(const pmsm_fit* fit, const char* path);
int pmsm_fit_estimate(const pmsm_fit* fit, pmsm_estimate** out);
void pmsm_fit_free(pmsm_fit* fit);

/* ---- estimates and transition probabilities ------------------------------- */

int pmsm_estimate_read(const char* path, const pmsm_graph* graph, pmsm_estimate** out);
int pmsm_estimate_write(const pmsm_estimate* estimate, const char* path);
/* Writes "from,to,s,t,prob" rows for P(s, t) over t = t0, t0+step, ..., t1. */
int pmsm_estimate_write_probs(const pmsm_estimate* estimate, double s, double t0, double t1, double step,
                              const char* path);
void pmsm_estimate_free(pmsm_estimate* estimate);

/* ---- simulation and metrics ----------------------------------------------- */

int pmsm_scenario_read(const char* path, pmsm_scenario** out);
int pmsm_scenario_graph(const pmsm_scenario* scenario, pmsm_graph** out);
double pmsm_scenario_horizon(const pmsm_scenario* scenario);
uint64_t pmsm_scenario_seed(const pmsm_scenario* scenario);
void pmsm_scenario_free(pmsm_scenario* scenario);

uint64_t pmsm_derive_seed(uint64_t base, int replicate);
int pmsm_simulate(const pmsm_scenario* scenario, int n_subjects, uint64_t seed, pmsm_panel** out);

/* Scores fitted estimates against the scenario's true curves and writes a
 * "target,from,to,t,bias,variance,rmse" table. Each fit dir must contain
 * model.model and intensities.csv. targets: comma list of
 * "cumintensity:g:h", "transprob:g:h[@s]", "intensities", "probs:g[@s]". */
int pmsm_metrics_run(const char* scenario_path, const char* const* fit_dirs, int num_fit_dirs, const char* targets,
                     double t0, double t1, double step, const char* out_path);

#ifdef __cplusplus
}
#endif

#endif /* PANELMSM_H */
