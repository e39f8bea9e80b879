#include "panelmsm.h"

#include <cstring>
#include <filesystem>
#include <memory>
#include <string>

#include "panelmsm/em.hpp"
#include "panelmsm/em_alt.hpp"
#include "panelmsm/em_poisson.hpp"
#include "panelmsm/simulate.hpp"
#include "text_util.hpp"

namespace {

thread_local std::string g_last_error;

int set_error(const pmsm::Error& e) {
  g_last_error = e.what();
  return static_cast<int>(e.code());
}

int set_error(const std::exception& e) {
  g_last_error = e.what();
  return PMSM_ERR_NUMERIC;
}

template <typename Fn>
int guarded(Fn&& fn) {
  try {
    fn();
    g_last_error.clear();
    return PMSM_OK;
  } catch (const pmsm::Error& e) {
    return set_error(e);
  } catch (const std::exception& e) {
    return set_error(e);
  }
}

}  // namespace

struct pmsm_graph {
  std::shared_ptr<const pmsm::TransitionGraph> graph;
};

struct pmsm_panel {
  pmsm::PanelDataset dataset;
  std::shared_ptr<const pmsm::BinGrid> grid;  // built lazily with the dataset
};

struct pmsm_estimate {
  pmsm::IntensityEstimate estimate;
};

struct pmsm_fit {
  pmsm::FitResult result;
};

struct pmsm_scenario {
  pmsm::ScenarioSpec spec;
};

extern "C" {

const char* pmsm_version(void) { return "0.1.0"; }

const char* pmsm_last_error(void) { return g_last_error.c_str(); }

/* ---- model ---------------------------------------------------------------- */

int pmsm_graph_read(const char* path, pmsm_graph** out) {
  return guarded([&] {
    *out = new pmsm_graph{std::make_shared<const pmsm::TransitionGraph>(pmsm::read_model_spec(path))};
  });
}

int pmsm_graph_parse(const char* text, pmsm_graph** out) {
  return guarded([&] {
    *out = new pmsm_graph{std::make_shared<const pmsm::TransitionGraph>(pmsm::parse_model_spec(text))};
  });
}

int pmsm_graph_build(int num_states, const int* from, const int* to, int num_transitions, const int* exact,
                     int num_exact, pmsm_graph** out) {
  return guarded([&] {
    std::vector<std::pair<int, int>> transitions;
    for (int i = 0; i < num_transitions; ++i) transitions.emplace_back(from[i], to[i]);
    std::vector<int> exact_states(exact, exact + num_exact);
    *out = new pmsm_graph{
        std::make_shared<const pmsm::TransitionGraph>(pmsm::build_graph(num_states, transitions, exact_states))};
  });
}

int pmsm_graph_write(const pmsm_graph* graph, const char* path) {
  return guarded([&] { pmsm::write_model_spec(*graph->graph, path); });
}

int pmsm_graph_num_states(const pmsm_graph* graph) { return graph->graph->num_states(); }
int pmsm_graph_num_transitions(const pmsm_graph* graph) { return graph->graph->num_transitions(); }
int pmsm_graph_num_exact_states(const pmsm_graph* graph) {
  return static_cast<int>(graph->graph->exact_states().size());
}
void pmsm_graph_free(pmsm_graph* graph) { delete graph; }

/* ---- panel data ------------------------------------------------------------ */

int pmsm_panel_read(const char* path, const pmsm_graph* graph, pmsm_panel** out) {
  return guarded([&] {
    auto* panel = new pmsm_panel{pmsm::read_panel_csv(path, *graph->graph), nullptr};
    panel->grid = std::make_shared<const pmsm::BinGrid>(pmsm::build_bin_grid(panel->dataset));
    *out = panel;
  });
}

int pmsm_panel_write(const pmsm_panel* panel, const char* path) {
  return guarded([&] { pmsm::write_panel_csv(panel->dataset, path); });
}

int pmsm_panel_num_subjects(const pmsm_panel* panel) { return panel->dataset.num_subjects(); }
int pmsm_panel_num_bins(const pmsm_panel* panel) { return panel->grid->num_bins(); }
double pmsm_panel_max_bin_gap(const pmsm_panel* panel) { return panel->grid->max_gap(); }
void pmsm_panel_free(pmsm_panel* panel) { delete panel; }

/* ---- fitting ---------------------------------------------------------------- */

void pmsm_fit_options_init(pmsm_fit_options* options) {
  std::memset(options, 0, sizeof(*options));
  options->estimator = PMSM_ESTIMATOR_MULTINOMIAL;
  options->tolerance = 1e-4;
  options->criterion = PMSM_CRITERION_INTENSITY;
  options->max_iterations = 5000;
}

int pmsm_fit_run(const pmsm_graph* graph, const pmsm_panel* panel, const pmsm_fit_options* options, pmsm_fit** out) {
  return guarded([&] {
    pmsm::EMConfig config;
    config.tolerance = options->tolerance;
    config.max_iterations = options->max_iterations;
    config.threads = options->threads;
    switch (options->criterion) {
      case PMSM_CRITERION_INTENSITY: config.criterion = pmsm::StopCriterion::max_intensity_change; break;
      case PMSM_CRITERION_LOGLIK: config.criterion = pmsm::StopCriterion::loglik_change; break;
      case PMSM_CRITERION_KKT: config.criterion = pmsm::StopCriterion::reduced_gradient; break;
      default: throw pmsm::ConfigError("unknown stop criterion " + std::to_string(options->criterion));
    }
    if (options->init_file) {
      pmsm::IntensityEstimate init = pmsm::read_estimate_csv(options->init_file, graph->graph);
      if (init.num_bins() != panel->grid->num_bins())
        throw pmsm::ConfigError("initial estimate grid does not match the panel's bins");
      config.initial = pmsm::IntensityEstimate(graph->graph, panel->grid);
      config.initial->values() = init.values();
    }
    if (options->progress && options->progress_every > 0) {
      config.progress_every = options->progress_every;
      auto fn = options->progress;
      auto user = options->progress_user;
      config.progress = [fn, user](int it, double delta, double ll) { fn(it, delta, ll, user); };
    }

    pmsm::FitResult result = [&] {
      switch (options->estimator) {
        case PMSM_ESTIMATOR_MULTINOMIAL: return pmsm::run_em(panel->dataset, *graph->graph, config);
        case PMSM_ESTIMATOR_POISSON: return pmsm::run_em_poisson(panel->dataset, *graph->graph, config);
        case PMSM_ESTIMATOR_CANONICAL:
          return pmsm::run_em_variant(panel->dataset, *graph->graph, config, pmsm::AltVariant::canonical);
        case PMSM_ESTIMATOR_MULTINOULLI:
          return pmsm::run_em_variant(panel->dataset, *graph->graph, config, pmsm::AltVariant::multinoulli);
        default: throw pmsm::ConfigError("unknown estimator " + std::to_string(options->estimator));
      }
    }();
    *out = new pmsm_fit{std::move(result)};
  });
}

int pmsm_fit_converged(const pmsm_fit* fit) { return fit->result.converged ? 1 : 0; }
int pmsm_fit_iterations(const pmsm_fit* fit) { return fit->result.iterations; }
const char* pmsm_fit_stop_reason(const pmsm_fit* fit) { return pmsm::to_string(fit->result.stop_reason); }
const char* pmsm_fit_estimator(const pmsm_fit* fit) { return fit->result.variant.c_str(); }
double pmsm_fit_final_loglik(const pmsm_fit* fit) { return fit->result.final_loglik; }
double pmsm_fit_max_reduced_gradient(const pmsm_fit* fit) { return fit->result.final_max_reduced_gradient; }
int pmsm_fit_feasibility_warnings(const pmsm_fit* fit) { return fit->result.feasibility_warnings; }
int pmsm_fit_loglik_decreases(const pmsm_fit* fit) { return fit->result.loglik_decrease_count; }
double pmsm_fit_max_loglik_decrease(const pmsm_fit* fit) { return fit->result.max_loglik_decrease; }

int pmsm_fit_write_intensities(const pmsm_fit* fit, const char* path) {
  return guarded([&] { pmsm::write_estimate_csv(fit->result.estimate, path); });
}

int pmsm_fit_write_trace(const pmsm_fit* fit, const char* path) {
  return guarded([&] { pmsm::detail::write_text_file(path, pmsm::serialize_trace_csv(fit->result)); });
}

int pmsm_fit_write_gradient(const pmsm_fit* fit, const char* path) {
  return guarded([&] { pmsm::detail::write_text_file(path, pmsm::serialize_gradient_csv(fit->result)); });
}

int pmsm_fit_estimate(const pmsm_fit* fit, pmsm_estimate** out) {
  return guarded([&] { *out = new pmsm_estimate{fit->result.estimate}; });
}

void pmsm_fit_free(pmsm_fit* fit) { delete fit; }

/* ---- estimates --------------------------------------------------------------- */

int pmsm_estimate_read(const char* path, const pmsm_graph* graph, pmsm_estimate** out) {
  return guarded([&] { *out = new pmsm_estimate{pmsm::read_estimate_csv(path, graph->graph)}; });
}

int pmsm_estimate_write(const pmsm_estimate* estimate, const char* path) {
  return guarded([&] { pmsm::write_estimate_csv(estimate->estimate, path); });
}

int pmsm_estimate_write_probs(const pmsm_estimate* estimate, double s, double t0, double t1, double step,
                              const char* path) {
  return guarded([&] {
    pmsm::detail::write_text_file(path, pmsm::serialize_probability_table(estimate->estimate, s, t0, t1, step));
  });
}

void pmsm_estimate_free(pmsm_estimate* estimate) { delete estimate; }

/* ---- simulation and metrics --------------------------------------------------- */

int pmsm_scenario_read(const char* path, pmsm_scenario** out) {
  return guarded([&] { *out = new pmsm_scenario{pmsm::read_scenario_spec(path)}; });
}

int pmsm_scenario_graph(const pmsm_scenario* scenario, pmsm_graph** out) {
  return guarded([&] {
    *out = new pmsm_graph{std::make_shared<const pmsm::TransitionGraph>(scenario->spec.graph)};
  });
}

double pmsm_scenario_horizon(const pmsm_scenario* scenario) { return scenario->spec.horizon; }
uint64_t pmsm_scenario_seed(const pmsm_scenario* scenario) { return scenario->spec.seed; }
void pmsm_scenario_free(pmsm_scenario* scenario) { delete scenario; }

uint64_t pmsm_derive_seed(uint64_t base, int replicate) { return pmsm::derive_seed(base, replicate); }

int pmsm_simulate(const pmsm_scenario* scenario, int n_subjects, uint64_t seed, pmsm_panel** out) {
  return guarded([&] {
    auto* panel = new pmsm_panel{pmsm::simulate_panel(scenario->spec, n_subjects, seed), nullptr};
    panel->grid = std::make_shared<const pmsm::BinGrid>(pmsm::build_bin_grid(panel->dataset));
    *out = panel;
  });
}

int pmsm_metrics_run(const char* scenario_path, const char* const* fit_dirs, int num_fit_dirs, const char* targets,
                     double t0, double t1, double step, const char* out_path) {
  return guarded([&] {
    if (num_fit_dirs < 2) throw pmsm::ConfigError("metrics need at least 2 fitted replicates");
    pmsm::ScenarioSpec spec = pmsm::read_scenario_spec(scenario_path);
    std::vector<pmsm::Target> target_list =
        pmsm::parse_targets(targets && *targets ? targets : "intensities", spec.graph);
    std::vector<double> tgrid = pmsm::make_time_grid(t0, t1, step);

    std::vector<pmsm::CurveSet> replicates;
    for (int i = 0; i < num_fit_dirs; ++i) {
      std::filesystem::path dir(fit_dirs[i]);
      auto graph = std::make_shared<const pmsm::TransitionGraph>(pmsm::read_model_spec((dir / "model.model").string()));
      pmsm::IntensityEstimate est = pmsm::read_estimate_csv((dir / "intensities.csv").string(), graph);
      replicates.push_back(pmsm::evaluate_curves(est, target_list, tgrid));
    }
    pmsm::CurveSet truth = pmsm::true_values(spec, target_list, tgrid);
    pmsm::MetricsSeries series = pmsm::score(replicates, truth, target_list, tgrid);
    pmsm::detail::write_text_file(out_path, pmsm::serialize_metrics_csv(series));
  });
}

}  // extern "C"
