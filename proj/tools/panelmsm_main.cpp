// Command-line front end for the panelmsm shared library: fit estimators on
// panel files, generate scenario data, emit transition probabilities and
// bias/variance/rmse metrics. Every run directory gets a manifest with input
// digests so results are auditable and reproducible.

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "panelmsm.h"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;
constexpr int kExitNoConvergence = 5;

std::uint64_t fnv1a(const void* data, size_t size, std::uint64_t hash = 0xcbf29ce484222325ULL) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < size; ++i) {
    hash ^= bytes[i];
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path);
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buf[8192];
  while (in.read(buf, sizeof(buf)) || in.gcount() > 0) hash = fnv1a(buf, static_cast<size_t>(in.gcount()), hash);
  return hex64(hash);
}

int fail(int status, const std::string& context) {
  std::cerr << "panelmsm: " << context;
  const char* detail = pmsm_last_error();
  if (detail && *detail) std::cerr << ": " << detail;
  std::cerr << "\n";
  return status == PMSM_OK ? kExitNumeric : status;
}

struct ManifestInput {
  std::string role;
  std::string path;
  std::string digest;
};

json make_manifest(const std::string& command, const std::vector<ManifestInput>& inputs, const json& config,
                   double wall_seconds) {
  json inputs_json = json::array();
  std::uint64_t digest = fnv1a(command.data(), command.size());
  std::string config_text = config.dump();
  digest = fnv1a(config_text.data(), config_text.size(), digest);
  for (const ManifestInput& input : inputs) {
    inputs_json.push_back({{"role", input.role}, {"path", input.path}, {"digest", input.digest}});
    digest = fnv1a(input.digest.data(), input.digest.size(), digest);
  }
  return json{{"command", command},
              {"tool_version", pmsm_version()},
              {"inputs", inputs_json},
              {"config", config},
              {"config_digest", hex64(digest)},
              {"wall_time_s", wall_seconds}};
}

void write_manifest(const fs::path& dir, const json& manifest) {
  std::ofstream out(dir / "manifest.json", std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write manifest in " + dir.string());
  out << manifest.dump(2) << "\n";
}

int default_threads() {
  if (const char* env = std::getenv("PANELMSM_THREADS")) {
    int v = std::atoi(env);
    if (v > 0) return v;
  }
  return 0;  // library default: hardware concurrency
}

bool parse_grid_spec(const std::string& text, double& t0, double& t1, double& step) {
  double a = 0.0, b = 0.0, c = 0.0;
  char tail = 0;
  int n = std::sscanf(text.c_str(), "%lf:%lf:%lf%c", &a, &b, &c, &tail);
  if (n != 3) return false;
  t0 = a;
  t1 = b;
  step = c;
  return true;
}

struct Progress {
  bool quiet = false;
};

void progress_cb(int iteration, double max_delta, double loglik, void*) {
  std::fprintf(stderr, "  iter %6d  max_delta %.3e  loglik %.6f\n", iteration, max_delta, loglik);
}

// ---- fit ---------------------------------------------------------------------

int cmd_fit(const std::string& model_path, const std::string& panel_path, const std::string& estimator,
            double tol, const std::string& criterion, int max_iter, const std::string& init,
            const std::string& init_file, int threads, const std::string& out_dir, bool quiet) {
  auto t_start = std::chrono::steady_clock::now();

  pmsm_graph* graph = nullptr;
  int rc = pmsm_graph_read(model_path.c_str(), &graph);
  if (rc != PMSM_OK) return fail(rc, "cannot load model " + model_path);

  pmsm_panel* panel = nullptr;
  rc = pmsm_panel_read(panel_path.c_str(), graph, &panel);
  if (rc != PMSM_OK) {
    pmsm_graph_free(graph);
    return fail(rc, "cannot load panel " + panel_path);
  }
  if (!quiet)
    std::fprintf(stderr, "panelmsm fit: %d subjects, %d bins, max bin gap %.4f\n", pmsm_panel_num_subjects(panel),
                 pmsm_panel_num_bins(panel), pmsm_panel_max_bin_gap(panel));

  pmsm_fit_options options;
  pmsm_fit_options_init(&options);
  options.tolerance = tol;
  options.max_iterations = max_iter;
  options.threads = threads;
  if (estimator == "multinomial") options.estimator = PMSM_ESTIMATOR_MULTINOMIAL;
  else if (estimator == "poisson") options.estimator = PMSM_ESTIMATOR_POISSON;
  else if (estimator == "canonical") options.estimator = PMSM_ESTIMATOR_CANONICAL;
  else if (estimator == "multinoulli") options.estimator = PMSM_ESTIMATOR_MULTINOULLI;
  else { std::cerr << "panelmsm: unknown estimator '" << estimator << "'\n"; return kExitConfig; }
  if (criterion == "intensity") options.criterion = PMSM_CRITERION_INTENSITY;
  else if (criterion == "loglik") options.criterion = PMSM_CRITERION_LOGLIK;
  else if (criterion == "kkt") options.criterion = PMSM_CRITERION_KKT;
  else { std::cerr << "panelmsm: unknown criterion '" << criterion << "'\n"; return kExitConfig; }
  if (init == "file") {
    if (init_file.empty()) { std::cerr << "panelmsm: --init file requires --init-file\n"; return kExitConfig; }
    options.init_file = init_file.c_str();
  } else if (init != "uniform") {
    std::cerr << "panelmsm: unknown init mode '" << init << "'\n";
    return kExitConfig;
  }
  if (!quiet) {
    options.progress = progress_cb;
    options.progress_every = 50;
  }

  pmsm_fit* fit = nullptr;
  rc = pmsm_fit_run(graph, panel, &options, &fit);
  if (rc != PMSM_OK) {
    pmsm_panel_free(panel);
    pmsm_graph_free(graph);
    return fail(rc, "fit failed");
  }

  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  if ((rc = pmsm_fit_write_intensities(fit, (dir / "intensities.csv").string().c_str())) != PMSM_OK ||
      (rc = pmsm_fit_write_trace(fit, (dir / "trace.csv").string().c_str())) != PMSM_OK ||
      (rc = pmsm_fit_write_gradient(fit, (dir / "gradient.csv").string().c_str())) != PMSM_OK ||
      (rc = pmsm_graph_write(graph, (dir / "model.model").string().c_str())) != PMSM_OK) {
    pmsm_fit_free(fit);
    pmsm_panel_free(panel);
    pmsm_graph_free(graph);
    return fail(rc, "cannot write fit artifacts to " + out_dir);
  }

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  json config{{"estimator", estimator}, {"tolerance", tol},       {"criterion", criterion},
              {"max_iterations", max_iter}, {"init", init},       {"threads", threads}};
  if (!init_file.empty()) config["init_file"] = init_file;
  std::vector<ManifestInput> inputs{{"model", model_path, file_digest(model_path)},
                                    {"panel", panel_path, file_digest(panel_path)}};
  if (!init_file.empty()) inputs.push_back({"initial_estimate", init_file, file_digest(init_file)});
  json manifest = make_manifest("fit", inputs, config, wall);
  manifest["stop_reason"] = pmsm_fit_stop_reason(fit);
  manifest["converged"] = pmsm_fit_converged(fit) != 0;
  manifest["iterations"] = pmsm_fit_iterations(fit);
  manifest["final_loglik"] = pmsm_fit_final_loglik(fit);
  manifest["max_reduced_gradient"] = pmsm_fit_max_reduced_gradient(fit);
  manifest["feasibility_warnings"] = pmsm_fit_feasibility_warnings(fit);
  manifest["loglik_decreases"] = pmsm_fit_loglik_decreases(fit);
  manifest["max_loglik_decrease"] = pmsm_fit_max_loglik_decrease(fit);
  manifest["columns"] = json{{"intensities", "from,to,bin,tau,alpha"},
                             {"trace", "iteration,loglik,max_delta,max_reduced_gradient"},
                             {"gradient", "from,to,bin,tau,reduced_gradient"}};
  write_manifest(dir, manifest);

  bool converged = pmsm_fit_converged(fit) != 0;
  if (!quiet)
    std::fprintf(stderr, "panelmsm fit: %s after %d iterations (loglik %.6f, max reduced gradient %.3e)\n",
                 converged ? "converged" : "stopped", pmsm_fit_iterations(fit), pmsm_fit_final_loglik(fit),
                 pmsm_fit_max_reduced_gradient(fit));
  std::cout << out_dir << "\n";

  pmsm_fit_free(fit);
  pmsm_panel_free(panel);
  pmsm_graph_free(graph);
  return converged ? 0 : kExitNoConvergence;
}

// ---- simulate -------------------------------------------------------------------

int cmd_simulate(const std::string& scenario_path, int n, int reps, std::int64_t seed_arg, const std::string& out_dir) {
  auto t_start = std::chrono::steady_clock::now();
  if (reps < 1) {
    std::cerr << "panelmsm: --reps must be at least 1\n";
    return kExitConfig;
  }
  pmsm_scenario* scenario = nullptr;
  int rc = pmsm_scenario_read(scenario_path.c_str(), &scenario);
  if (rc != PMSM_OK) return fail(rc, "cannot load scenario " + scenario_path);

  std::uint64_t seed = seed_arg >= 0 ? static_cast<std::uint64_t>(seed_arg) : pmsm_scenario_seed(scenario);

  fs::create_directories(out_dir);
  fs::path dir(out_dir);
  for (int rep = 1; rep <= reps; ++rep) {
    pmsm_panel* panel = nullptr;
    rc = pmsm_simulate(scenario, n, pmsm_derive_seed(seed, rep), &panel);
    if (rc != PMSM_OK) {
      pmsm_scenario_free(scenario);
      return fail(rc, "simulation failed for replicate " + std::to_string(rep));
    }
    std::string path = (dir / ("rep_" + std::to_string(rep) + ".csv")).string();
    rc = pmsm_panel_write(panel, path.c_str());
    pmsm_panel_free(panel);
    if (rc != PMSM_OK) {
      pmsm_scenario_free(scenario);
      return fail(rc, "cannot write " + path);
    }
  }

  double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
  json config{{"n", n}, {"reps", reps}, {"seed", seed}};
  json manifest = make_manifest("simulate", {{"scenario", scenario_path, file_digest(scenario_path)}}, config, wall);
  manifest["outputs"] = json::array();
  for (int rep = 1; rep <= reps; ++rep) manifest["outputs"].push_back("rep_" + std::to_string(rep) + ".csv");
  write_manifest(dir, manifest);
  std::cout << out_dir << "\n";
  pmsm_scenario_free(scenario);
  return 0;
}

// ---- probs ---------------------------------------------------------------------

int cmd_probs(const std::string& fit_dir, double from_time, const std::string& grid_spec, const std::string& out_file) {
  double t0 = 0.0, t1 = 0.0, step = 0.0;
  if (!parse_grid_spec(grid_spec, t0, t1, step)) {
    std::cerr << "panelmsm: --grid must be t0:t1:step\n";
    return kExitConfig;
  }
  fs::path dir(fit_dir);
  pmsm_graph* graph = nullptr;
  int rc = pmsm_graph_read((dir / "model.model").string().c_str(), &graph);
  if (rc != PMSM_OK) return fail(rc, "cannot load fit artifacts from " + fit_dir);
  pmsm_estimate* estimate = nullptr;
  rc = pmsm_estimate_read((dir / "intensities.csv").string().c_str(), graph, &estimate);
  if (rc != PMSM_OK) {
    pmsm_graph_free(graph);
    return fail(rc, "cannot load fit artifacts from " + fit_dir);
  }
  std::string path = out_file;
  if (path.empty()) path = (dir / "probs.csv").string();
  rc = pmsm_estimate_write_probs(estimate, from_time, t0, t1, step, path.c_str());
  pmsm_estimate_free(estimate);
  pmsm_graph_free(graph);
  if (rc != PMSM_OK) return fail(rc, "cannot write probability table");
  std::cout << path << "\n";
  return 0;
}

// ---- metrics --------------------------------------------------------------------

int cmd_metrics(const std::vector<std::string>& fit_dirs, const std::string& scenario_path,
                const std::string& targets, const std::string& grid_spec, const std::string& out_file) {
  for (const std::string& dir : fit_dirs) {
    if (!fs::exists(fs::path(dir) / "intensities.csv")) {
      std::cerr << "panelmsm: " << dir << " is not a fit directory (missing intensities.csv)\n";
      return kExitConfig;
    }
  }
  double t0 = 0.0, t1 = 0.0, step = 0.0;
  if (grid_spec.empty()) {
    pmsm_scenario* scenario = nullptr;
    int rc = pmsm_scenario_read(scenario_path.c_str(), &scenario);
    if (rc != PMSM_OK) return fail(rc, "cannot load scenario " + scenario_path);
    t0 = 0.0;
    t1 = pmsm_scenario_horizon(scenario);
    step = 0.1;
    pmsm_scenario_free(scenario);
  } else if (!parse_grid_spec(grid_spec, t0, t1, step)) {
    std::cerr << "panelmsm: --grid must be t0:t1:step\n";
    return kExitConfig;
  }
  std::vector<const char*> dirs;
  dirs.reserve(fit_dirs.size());
  for (const std::string& d : fit_dirs) dirs.push_back(d.c_str());
  int rc = pmsm_metrics_run(scenario_path.c_str(), dirs.data(), static_cast<int>(dirs.size()), targets.c_str(), t0,
                            t1, step, out_file.c_str());
  if (rc != PMSM_OK) return fail(rc, "metrics failed");
  std::cout << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-parametric intensity estimation for interval-censored multi-state panel data"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(pmsm_version()));

  // fit
  std::string model_path, panel_path, estimator = "multinomial", criterion = "intensity";
  std::string init = "uniform", init_file, fit_out = "fit_out";
  double tol = 1e-4;
  int max_iter = 5000, threads = default_threads();
  bool quiet = false;
  auto* fit = app.add_subcommand("fit", "Fit an estimator to a panel file");
  fit->add_option("model", model_path, "Model spec file")->required();
  fit->add_option("panel", panel_path, "Panel csv (id,time,state)")->required();
  fit->add_option("--estimator", estimator, "multinomial|poisson|canonical|multinoulli");
  fit->add_option("--tol", tol, "Convergence tolerance");
  fit->add_option("--criterion", criterion, "intensity|loglik|kkt");
  fit->add_option("--max-iter", max_iter, "Iteration cap");
  fit->add_option("--init", init, "uniform|file");
  fit->add_option("--init-file", init_file, "Initial estimate csv (from,to,bin,tau,alpha)");
  fit->add_option("--threads", threads, "E-step worker threads (0 = all cores)");
  fit->add_option("--out", fit_out, "Output directory");
  fit->add_flag("--quiet", quiet, "Suppress progress output");

  // simulate
  std::string scenario_path, sim_out = "sim_out";
  int sim_n = 100, sim_reps = 1;
  std::int64_t sim_seed = -1;
  auto* sim = app.add_subcommand("simulate", "Generate panel datasets from a scenario spec");
  sim->add_option("scenario", scenario_path, "Scenario spec file")->required();
  sim->add_option("--n", sim_n, "Subjects per replicate");
  sim->add_option("--reps", sim_reps, "Number of replicates");
  sim->add_option("--seed", sim_seed, "Base seed (default: scenario file seed)");
  sim->add_option("--out", sim_out, "Output directory");

  // probs
  std::string probs_dir, probs_grid = "0:15:0.1", probs_out;
  double probs_from = 0.0;
  auto* probs = app.add_subcommand("probs", "Transition probabilities from a fit directory");
  probs->add_option("fitdir", probs_dir, "Fit output directory")->required();
  probs->add_option("--from", probs_from, "Start time s of P(s,t)");
  probs->add_option("--grid", probs_grid, "t0:t1:step evaluation grid");
  probs->add_option("--out", probs_out, "Output file (default <fitdir>/probs.csv)");

  // metrics
  std::vector<std::string> metric_dirs;
  std::string metric_scenario, metric_targets = "intensities", metric_grid, metric_out = "metrics.csv";
  auto* metrics = app.add_subcommand("metrics", "Bias/variance/rmse of fits against scenario truth");
  metrics->add_option("fitdirs", metric_dirs, "Fit directories (>= 2)")->required();
  metrics->add_option("--scenario", metric_scenario, "Scenario spec providing the oracle")->required();
  metrics->add_option("--targets", metric_targets,
                      "Comma list: intensities | probs:g[@s] | cumintensity:g:h | transprob:g:h[@s]");
  metrics->add_option("--grid", metric_grid, "t0:t1:step (default 0:horizon:0.1)");
  metrics->add_option("--out", metric_out, "Output metrics csv");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (fit->parsed())
      return cmd_fit(model_path, panel_path, estimator, tol, criterion, max_iter, init, init_file, threads, fit_out,
                     quiet);
    if (sim->parsed()) return cmd_simulate(scenario_path, sim_n, sim_reps, sim_seed, sim_out);
    if (probs->parsed()) return cmd_probs(probs_dir, probs_from, probs_grid, probs_out);
    if (metrics->parsed()) return cmd_metrics(metric_dirs, metric_scenario, metric_targets, metric_grid, metric_out);
  } catch (const std::exception& e) {
    std::cerr << "panelmsm: " << e.what() << "\n";
    return kExitNumeric;
  }
  return kExitConfig;
}
