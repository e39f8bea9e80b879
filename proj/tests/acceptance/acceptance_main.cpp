// Acceptance suite: runs every release criterion end to end at its stated
// tolerance and prints one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria. An optional first argument points at the data/
// directory with the bundled scenario specs; further arguments select
// individual criteria by number.

#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "oracle.hpp"
#include "panelmsm/em.hpp"
#include "panelmsm/em_alt.hpp"
#include "panelmsm/em_poisson.hpp"
#include "panelmsm/simulate.hpp"
#include "test_util.hpp"

using namespace pmsm;
using namespace pmsm::testing;

namespace {

std::string g_data_dir = "data";

struct Result {
  bool pass = false;
  std::string detail;
};

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point start = clock::now();
  return std::chrono::duration<double>(clock::now() - start).count();
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

ScenarioSpec load_scenario(const std::string& name) {
  return read_scenario_spec(g_data_dir + "/scenarios/" + name);
}

// Replicates dispatched across cores; each fit itself runs single-threaded.
void parallel_reps(int n, const std::function<void(int)>& fn) {
  unsigned hw = std::thread::hardware_concurrency();
  int workers = std::max(1u, hw);
  std::atomic<int> next{0};
  std::vector<std::exception_ptr> failures(n);
  auto work = [&] {
    while (true) {
      int rep = next.fetch_add(1);
      if (rep >= n) return;
      try {
        fn(rep);
      } catch (...) {
        failures[rep] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int w = 0; w < workers; ++w) pool.emplace_back(work);
  for (auto& th : pool) th.join();
  for (auto& f : failures)
    if (f) std::rethrow_exception(f);
}

EMConfig fit_config(double tol, int max_iter = 5000) {
  EMConfig config;
  config.tolerance = tol;
  config.max_iterations = max_iter;
  config.threads = 1;
  return config;
}

// ---------------------------------------------------------------------------
// 1. E-step equals the exhaustive bin-path-enumeration oracle on random
//    models with H <= 4, K <= 5, including exact arrivals; 200 cases, < 1 min.
Result criterion1() {
  const double t0 = now_seconds();
  std::mt19937_64 rng(20240601);
  double worst = 0.0;
  int exact_cases = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const int h = 2 + static_cast<int>(rng() % 3);
    const bool with_exact = trial % 2 == 1;
    auto graph = std::make_shared<const TransitionGraph>(random_dag(rng, h, with_exact));
    const int bins = 1 + static_cast<int>(rng() % 5);
    auto grid = integer_grid(bins);
    IntensityEstimate gen = random_positive_estimate(rng, graph, grid);
    PanelDataset ds = sample_panel_from_chain(rng, gen, 1 + static_cast<int>(rng() % 10));
    IntensityEstimate est = random_positive_estimate(rng, graph, grid);

    bool has_arrival = false;
    for (const SubjectRecord& s : ds.subjects)
      for (const ObservationInterval& iv : subject_intervals(s, *grid, *graph)) has_arrival |= iv.exact_arrival;
    exact_cases += has_arrival ? 1 : 0;

    ExpectedCounts counts = estep(est, ds, *grid, *graph);
    std::vector<double> d_ref(counts.d.size(), 0.0), y_ref(counts.y.size(), 0.0);
    for (const SubjectRecord& s : ds.subjects) {
      OraclePosterior post = enumerate_subject_posterior(est, s, *grid, *graph);
      for (size_t c = 0; c < d_ref.size(); ++c) d_ref[c] += post.d[c];
      for (size_t c = 0; c < y_ref.size(); ++c) y_ref[c] += post.y[c];
    }
    for (size_t c = 0; c < d_ref.size(); ++c) worst = std::max(worst, std::abs(counts.d[c] - d_ref[c]));
    for (size_t c = 0; c < y_ref.size(); ++c) worst = std::max(worst, std::abs(counts.y[c] - y_ref[c]));
  }
  const double elapsed = now_seconds() - t0;
  Result r;
  r.pass = worst <= 1e-10 && elapsed < 60.0;
  r.detail = "max |estep - oracle| = " + fmt(worst) + " over 200 cases (" + std::to_string(exact_cases) +
             " with exact arrivals) in " + fmt(elapsed) + "s";
  return r;
}

// ---------------------------------------------------------------------------
// 2. M-step outputs zero the reduced gradient against their own counts; the
//    local-max check is true exactly at fixed points.
Result criterion2() {
  std::mt19937_64 rng(77002);
  double worst_interior = 0.0;
  bool zero_cells_ok = true;
  bool fixed_point_true = true;
  bool perturbed_false = true;
  for (int trial = 0; trial < 100; ++trial) {
    const int h = 2 + static_cast<int>(rng() % 3);
    auto graph = std::make_shared<const TransitionGraph>(random_dag(rng, h, false));
    const int bins = 1 + static_cast<int>(rng() % 4);
    auto grid = integer_grid(bins);
    ExpectedCounts counts;
    counts.graph = graph;
    counts.grid = grid;
    counts.d.assign(static_cast<size_t>(graph->num_transitions()) * bins, 0.0);
    counts.y.assign(static_cast<size_t>(h) * bins, 0.0);
    for (double& v : counts.d) v = u01(rng) < 0.2 ? 0.0 : 5.0 * u01(rng);
    for (double& v : counts.y) v = 6.0 * u01(rng);  // some cells end up with sum d > y

    IntensityEstimate out = mstep(counts);
    ReducedGradient grad = reduced_gradient(out, counts);
    const int K = bins;
    for (int t = 0; t < graph->num_transitions(); ++t)
      for (int k = 1; k <= K; ++k) {
        double cell = grad.values[static_cast<size_t>(t) * K + k - 1];
        if (out.at(t, k) > 0.0)
          worst_interior = std::max(worst_interior, std::abs(cell));
        else
          zero_cells_ok = zero_cells_ok && cell == 0.0;
      }
    fixed_point_true = fixed_point_true && is_local_max(out, counts, 1e-12);

    // a genuine perturbation must break the local-max certificate
    for (int t = 0; t < graph->num_transitions(); ++t) {
      bool done = false;
      for (int k = 1; k <= K && !done; ++k) {
        if (out.at(t, k) > 1e-6 && counts.y_at(graph->transitions()[t].first, k) > 1e-6) {
          IntensityEstimate perturbed = out;
          perturbed.at(t, k) *= 0.9;
          perturbed_false = perturbed_false && !is_local_max(perturbed, counts, 1e-12);
          done = true;
        }
      }
      if (done) break;
    }
  }
  Result r;
  r.pass = worst_interior <= 1e-12 && zero_cells_ok && fixed_point_true && perturbed_false;
  r.detail = "max interior |grad| = " + fmt(worst_interior) + ", zero cells " + (zero_cells_ok ? "ok" : "BAD") +
             ", fixed points certified " + (fixed_point_true ? "yes" : "NO") + ", perturbations rejected " +
             (perturbed_false ? "yes" : "NO");
  return r;
}

// ---------------------------------------------------------------------------
// 3. Feasibility of every M-step output along full runs: exact for the
//    multinomial estimator, counted warn/clamp events for the others.
Result criterion3() {
  ScenarioSpec spec = load_scenario("scenario2.scenario");
  PanelDataset ds = simulate_panel(spec, 100, derive_seed(spec.seed, 1));
  auto graph = std::make_shared<const TransitionGraph>(spec.graph);
  auto grid = std::make_shared<const BinGrid>(build_bin_grid(ds));

  auto exactly_feasible = [&](const IntensityEstimate& est) {
    for (int g = 1; g <= graph->num_states(); ++g) {
      const auto& succ = graph->successors(g);
      if (succ.empty()) continue;
      for (int k = 1; k <= grid->num_bins(); ++k) {
        double sum = 0.0;
        for (int h : succ) {
          double a = est.value(g, h, k);
          if (a < 0.0) return false;
          sum += a;
        }
        if (sum > 1.0) return false;
      }
    }
    return true;
  };
  auto nonnegative = [&](const IntensityEstimate& est) {
    for (double v : est.values())
      if (v < 0.0) return false;
    return true;
  };

  const double tol = 1e-3;
  const int max_iter = 2000;
  bool multinomial_exact = true;
  int multinomial_iters = 0;
  {
    IntensityEstimate alpha = make_uniform_initial(graph, grid);
    for (int t = 1; t <= max_iter; ++t) {
      ExpectedCounts counts = estep(alpha, ds, *grid, *graph);
      IntensityEstimate next = mstep(counts);
      multinomial_exact = multinomial_exact && exactly_feasible(next);
      double delta = 0.0;
      for (size_t c = 0; c < next.values().size(); ++c)
        delta = std::max(delta, std::abs(next.values()[c] - alpha.values()[c]));
      alpha = std::move(next);
      multinomial_iters = t;
      if (delta < tol) break;
    }
  }

  bool others_nonnegative = true;
  int poisson_overshoots = 0, canonical_clamps = 0, multinoulli_clamps = 0;
  {
    IntensityEstimate alpha = make_uniform_initial(graph, grid);
    EStepOptions opt;
    for (int t = 1; t <= 400; ++t) {
      PoissonExpectedCounts counts = estep_poisson(alpha, ds, *grid, *graph, opt);
      IntensityEstimate next = mstep_poisson(counts);
      others_nonnegative = others_nonnegative && nonnegative(next);
      if (next.max_infeasibility() > 1e-12) ++poisson_overshoots;
      double delta = 0.0;
      for (size_t c = 0; c < next.values().size(); ++c)
        delta = std::max(delta, std::abs(next.values()[c] - alpha.values()[c]));
      alpha = std::move(next);
      if (delta < tol) break;
    }
  }
  {
    IntensityEstimate alpha = make_uniform_initial(graph, grid);
    for (int t = 1; t <= 400; ++t) {
      ExpectedCounts counts = estep(alpha, ds, *grid, *graph);
      IntensityEstimate next = mstep_canonical(counts, &canonical_clamps);
      others_nonnegative = others_nonnegative && nonnegative(next);
      if (next.max_infeasibility() > 1e-12) ++canonical_clamps;
      double delta = 0.0;
      for (size_t c = 0; c < next.values().size(); ++c)
        delta = std::max(delta, std::abs(next.values()[c] - alpha.values()[c]));
      alpha = std::move(next);
      if (delta < tol) break;
    }
  }
  {
    IntensityEstimate alpha = make_uniform_initial(graph, grid);
    for (int t = 1; t <= 400; ++t) {
      ExpectedCounts counts = estep(alpha, ds, *grid, *graph);
      IntensityEstimate next = mstep_multinoulli(counts, counts.at_risk, &multinoulli_clamps);
      others_nonnegative = others_nonnegative && nonnegative(next);
      if (next.max_infeasibility() > 1e-12) ++multinoulli_clamps;
      double delta = 0.0;
      for (size_t c = 0; c < next.values().size(); ++c)
        delta = std::max(delta, std::abs(next.values()[c] - alpha.values()[c]));
      alpha = std::move(next);
      if (delta < tol) break;
    }
  }

  Result r;
  r.pass = multinomial_exact && others_nonnegative;
  r.detail = "multinomial exactly feasible over " + std::to_string(multinomial_iters) +
             " iterations: " + (multinomial_exact ? "yes" : "NO") + "; warn/clamp events poisson=" +
             std::to_string(poisson_overshoots) + " canonical=" + std::to_string(canonical_clamps) +
             " multinoulli=" + std::to_string(multinoulli_clamps);
  return r;
}

// ---------------------------------------------------------------------------
// 4. Row-stochasticity and Chapman-Kolmogorov of the product integral on
//    1000 random feasible estimates, both within 1e-10.
Result criterion4() {
  std::mt19937_64 rng(44004);
  double worst_row = 0.0, worst_ck = 0.0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int h = 2 + static_cast<int>(rng() % 4);
    auto graph = std::make_shared<const TransitionGraph>(random_dag(rng, h, false));
    const int bins = 2 + static_cast<int>(rng() % 5);
    auto grid = integer_grid(bins);
    IntensityEstimate est = random_positive_estimate(rng, graph, grid);

    double s = static_cast<double>(rng() % bins);
    double u = s + static_cast<double>(rng() % (bins - static_cast<int>(s) + 1));
    double t = s + std::floor((u - s) / 2.0);
    Matrix psu = transition_matrix(est, s, u);
    Matrix chained = multiply(transition_matrix(est, s, t), transition_matrix(est, t, u));
    for (int r_ = 0; r_ < h; ++r_) {
      double row = 0.0;
      for (int c = 0; c < h; ++c) {
        row += psu.at(r_, c);
        worst_ck = std::max(worst_ck, std::abs(psu.at(r_, c) - chained.at(r_, c)));
      }
      worst_row = std::max(worst_row, std::abs(row - 1.0));
    }
  }
  Result r;
  r.pass = worst_row <= 1e-10 && worst_ck <= 1e-10;
  r.detail = "max |row sum - 1| = " + fmt(worst_row) + ", max Chapman-Kolmogorov deviation = " + fmt(worst_ck);
  return r;
}

// ---------------------------------------------------------------------------
// 5. Canonical and latent-Poisson loglik traces are non-decreasing within
//    1e-9 per step on scenario-2 data; multinomial decreases are reported.
Result criterion5() {
  ScenarioSpec spec = load_scenario("scenario2.scenario");
  PanelDataset ds = simulate_panel(spec, 100, derive_seed(spec.seed, 5));
  EMConfig config = fit_config(1e-3);
  config.threads = 0;  // single fit: use all cores

  FitResult canonical = run_em_variant(ds, spec.graph, config, AltVariant::canonical);
  FitResult poisson = run_em_poisson(ds, spec.graph, config);
  FitResult multinomial = run_em(ds, spec.graph, config);

  auto max_drop = [](const FitResult& fit) {
    double worst = 0.0;
    auto lls = fit.loglik_trace();
    for (size_t i = 1; i < lls.size(); ++i) worst = std::max(worst, lls[i - 1] - lls[i]);
    return worst;
  };
  double canonical_drop = max_drop(canonical);
  double poisson_drop = max_drop(poisson);
  double multinomial_drop = max_drop(multinomial);
  int multinomial_reports = 0;
  {
    auto lls = multinomial.loglik_trace();
    for (size_t i = 1; i < lls.size(); ++i)
      if (lls[i - 1] - lls[i] > 1e-6) ++multinomial_reports;
  }

  Result r;
  r.pass = canonical_drop <= 1e-9 && poisson_drop <= 1e-9;
  r.detail = "max per-step decrease: canonical " + fmt(canonical_drop) + " (" + std::to_string(canonical.iterations) +
             " it), poisson " + fmt(poisson_drop) + " (" + std::to_string(poisson.iterations) +
             " it); multinomial decreases > 1e-6: " + std::to_string(multinomial_reports) +
             " (reported, documented caveat; max " + fmt(multinomial_drop) + ")";
  return r;
}

// ---------------------------------------------------------------------------
// 6. Latent-Poisson initial-estimate invariance: with every subject starting
//    in state 1, the first-bin 2->3 intensity never moves, bitwise.
Result criterion6() {
  ScenarioSpec spec = load_scenario("scenario1.scenario");
  PanelDataset ds = simulate_panel(spec, 50, derive_seed(spec.seed, 3));
  auto graph = std::make_shared<const TransitionGraph>(spec.graph);
  auto grid = std::make_shared<const BinGrid>(build_bin_grid(ds));
  const int t23 = graph->transition_index(2, 3);

  EMConfig config;
  config.max_iterations = 100;
  config.tolerance = 1e-15;  // never fires: run all 100 iterations
  config.threads = 0;

  FitResult uniform_fit = run_em_poisson(ds, *graph, config);
  bool uniform_ok = uniform_fit.estimate.at(t23, 1) == 1.0 / grid->num_bins();

  config.initial = make_front_loaded_initial(graph, grid);
  double init_value = config.initial->at(t23, 1);
  FitResult front_fit = run_em_poisson(ds, *graph, config);
  bool front_ok = front_fit.estimate.at(t23, 1) == init_value;

  Result r;
  r.pass = uniform_ok && front_ok && uniform_fit.iterations == 100 && front_fit.iterations == 100;
  r.detail = std::string("alpha_23^1 bitwise invariant after 100 iterations: uniform ") +
             (uniform_ok ? "yes" : "NO") + ", front-loaded " + (front_ok ? "yes" : "NO") + " (K=" +
             std::to_string(grid->num_bins()) + ")";
  return r;
}

// ---------------------------------------------------------------------------
// helpers for the replicated-simulation criteria

struct RmseCurves {
  std::vector<double> tgrid;
  MetricsSeries series;
};

RmseCurves scored_fits(const ScenarioSpec& spec, const std::vector<FitResult>& fits,
                       const std::vector<Target>& targets, const std::vector<double>& tgrid) {
  std::vector<CurveSet> reps;
  reps.reserve(fits.size());
  for (const FitResult& fit : fits) reps.push_back(evaluate_curves(fit.estimate, targets, tgrid));
  CurveSet truth = true_values(spec, targets, tgrid);
  return RmseCurves{tgrid, score(reps, truth, targets, tgrid)};
}

std::vector<FitResult> replicate_fits(const ScenarioSpec& spec, int n, int reps, std::uint64_t seed_salt,
                                      const std::string& estimator, double tol) {
  std::vector<FitResult> fits;
  fits.reserve(reps);
  for (int i = 0; i < reps; ++i)
    fits.push_back(FitResult{IntensityEstimate(std::make_shared<const TransitionGraph>(spec.graph),
                                               integer_grid(1))});
  parallel_reps(reps, [&](int rep) {
    PanelDataset ds = simulate_panel(spec, n, derive_seed(spec.seed ^ seed_salt, rep + 1));
    EMConfig config = fit_config(tol);
    if (estimator == "multinomial")
      fits[rep] = run_em(ds, spec.graph, config);
    else if (estimator == "poisson")
      fits[rep] = run_em_poisson(ds, spec.graph, config);
    else if (estimator == "canonical")
      fits[rep] = run_em_variant(ds, spec.graph, config, AltVariant::canonical);
    else
      fits[rep] = run_em_variant(ds, spec.graph, config, AltVariant::multinoulli);
  });
  return fits;
}

// ---------------------------------------------------------------------------
// 7. Scenario 2: multinomial and poisson cumulative-intensity RMSE curves
//    agree within 15% relative on t in [2,12] at n=100 (N=50), and the
//    multinomial RMSE shrinks from n=50 to n=200 at t in {5,10}.
Result criterion7() {
  ScenarioSpec spec = load_scenario("scenario2.scenario");
  std::vector<Target> targets = parse_targets("intensities", spec.graph);
  std::vector<double> tgrid = make_time_grid(0.0, 15.0, 0.1);

  std::vector<FitResult> mult100 = replicate_fits(spec, 100, 50, 0x100, "multinomial", 1e-3);
  std::vector<FitResult> pois100 = replicate_fits(spec, 100, 50, 0x100, "poisson", 1e-3);
  RmseCurves mult = scored_fits(spec, mult100, targets, tgrid);
  RmseCurves pois = scored_fits(spec, pois100, targets, tgrid);

  double worst_rel = 0.0;
  for (size_t i = 0; i < targets.size(); ++i)
    for (size_t j = 0; j < tgrid.size(); ++j) {
      if (tgrid[j] < 2.0 || tgrid[j] > 12.0) continue;
      double a = mult.series.rmse[i][j], b = pois.series.rmse[i][j];
      double denom = std::max(a, b);
      if (denom > 0.0) worst_rel = std::max(worst_rel, std::abs(a - b) / denom);
    }

  std::vector<double> check_times = {5.0, 10.0};
  std::vector<FitResult> mult50 = replicate_fits(spec, 50, 50, 0x050, "multinomial", 1e-3);
  std::vector<FitResult> mult200 = replicate_fits(spec, 200, 50, 0x200, "multinomial", 1e-3);
  RmseCurves small = scored_fits(spec, mult50, targets, check_times);
  RmseCurves large = scored_fits(spec, mult200, targets, check_times);
  bool consistent = true;
  std::ostringstream pairs;
  for (size_t i = 0; i < targets.size(); ++i)
    for (size_t j = 0; j < check_times.size(); ++j) {
      consistent = consistent && large.series.rmse[i][j] < small.series.rmse[i][j];
      pairs << " " << fmt(small.series.rmse[i][j]) << ">" << fmt(large.series.rmse[i][j]);
    }

  Result r;
  r.pass = worst_rel <= 0.15 && consistent;
  r.detail = "max relative RMSE gap (multinomial vs poisson, t in [2,12]) = " + fmt(worst_rel) +
             "; RMSE n=50 > n=200 per transition at t in {5,10}: " + (consistent ? "yes" : "NO") + " (" +
             pairs.str() + ")";
  return r;
}

// ---------------------------------------------------------------------------
// 8. Scenario 3 at n=100, N=20: the latent-Poisson EM needs more iterations
//    than the multinomial EM on the same datasets (ordering only).
Result criterion8() {
  ScenarioSpec spec = load_scenario("scenario3.scenario");
  const int reps = 20;
  std::vector<int> mult_iters(reps, 0), pois_iters(reps, 0);
  parallel_reps(reps, [&](int rep) {
    PanelDataset ds = simulate_panel(spec, 100, derive_seed(spec.seed, rep + 1));
    EMConfig config = fit_config(1e-3, 20000);
    mult_iters[rep] = run_em(ds, spec.graph, config).iterations;
    pois_iters[rep] = run_em_poisson(ds, spec.graph, config).iterations;
  });
  auto mean_sd = [](const std::vector<int>& v) {
    double mean = 0.0;
    for (int x : v) mean += x;
    mean /= v.size();
    double var = 0.0;
    for (int x : v) var += (x - mean) * (x - mean);
    var /= (v.size() - 1);
    return std::make_pair(mean, std::sqrt(var));
  };
  auto [m_mean, m_sd] = mean_sd(mult_iters);
  auto [p_mean, p_sd] = mean_sd(pois_iters);
  Result r;
  r.pass = p_mean > m_mean;
  r.detail = "mean iterations multinomial " + fmt(m_mean) + " (sd " + fmt(m_sd) + ") vs poisson " + fmt(p_mean) +
             " (sd " + fmt(p_sd) + ")";
  return r;
}

// ---------------------------------------------------------------------------
// 9. Scenario 4 (extended model, exact death states) at n=200, N=20: the
//    multinomial fit recovers P_{1h}(t) with |bias| <= 0.05 at t in {5,10}.
Result criterion9() {
  ScenarioSpec spec = load_scenario("scenario4.scenario");
  std::vector<Target> targets = parse_targets("probs:1", spec.graph);
  std::vector<double> check_times = {5.0, 10.0};
  std::vector<FitResult> fits = replicate_fits(spec, 200, 20, 0x900, "multinomial", 1e-3);
  RmseCurves scored = scored_fits(spec, fits, targets, check_times);
  double worst = 0.0;
  for (size_t i = 0; i < targets.size(); ++i)
    for (size_t j = 0; j < check_times.size(); ++j) worst = std::max(worst, std::abs(scored.series.bias[i][j]));
  Result r;
  r.pass = worst <= 0.05;
  r.detail = "max |bias| of P_1h at t in {5,10} = " + fmt(worst);
  return r;
}

// ---------------------------------------------------------------------------
// 10. Fully observed discrete-time survival data: all four estimators land on
//     the occurrence/exposure ratios; multinomial and canonical in <= 3
//     iterations.
Result criterion10() {
  TransitionGraph graph = build_graph(2, {{1, 2}});
  std::mt19937_64 rng(1010);
  std::vector<PanelRow> rows;
  const int n = 80, horizon = 12;
  for (int i = 0; i < n; ++i) {
    std::string id = "s" + std::to_string(i + 1);
    int state = 1;
    rows.push_back({id, 0.0, 1});
    for (int t = 1; t <= horizon && state == 1; ++t) {
      if (u01(rng) < 0.15) state = 2;
      rows.push_back({id, static_cast<double>(t), state});
    }
  }
  PanelDataset ds = ingest_panel(rows, graph);
  BinGrid grid = build_bin_grid(ds);
  const int K = grid.num_bins();

  // occurrence/exposure directly from the data
  std::vector<double> occ(K, 0.0), exposure(K, 0.0);
  for (const SubjectRecord& s : ds.subjects)
    for (size_t j = 1; j < s.obs.size(); ++j) {
      int k = grid.index_of_time(s.obs[j].time);
      exposure[k - 1] += 1.0;
      if (s.obs[j].state == 2) occ[k - 1] += 1.0;
    }

  EMConfig config = fit_config(1e-9);
  FitResult mult = run_em(ds, graph, config);
  FitResult pois = run_em_poisson(ds, graph, config);
  FitResult canon = run_em_variant(ds, graph, config, AltVariant::canonical);
  FitResult multinoulli = run_em_variant(ds, graph, config, AltVariant::multinoulli);

  double worst = 0.0;
  auto compare = [&](const FitResult& fit) {
    for (int k = 1; k <= K; ++k) {
      double expect = exposure[k - 1] == 0.0 ? 0.0 : occ[k - 1] / exposure[k - 1];
      worst = std::max(worst, std::abs(fit.estimate.at(0, k) - expect));
    }
  };
  compare(mult);
  compare(pois);
  compare(canon);
  compare(multinoulli);

  Result r;
  r.pass = worst <= 1e-8 && mult.iterations <= 3 && canon.iterations <= 3 && mult.converged && pois.converged &&
           canon.converged && multinoulli.converged;
  r.detail = "max |alpha - d/Y| over all four estimators = " + fmt(worst) + "; iterations multinomial=" +
             std::to_string(mult.iterations) + " canonical=" + std::to_string(canon.iterations) + " poisson=" +
             std::to_string(pois.iterations) + " multinoulli=" + std::to_string(multinoulli.iterations);
  return r;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::pair<std::string, std::function<Result()>>> criteria = {
      {"oracle E-step equivalence", criterion1},
      {"M-step/KKT fixed-point consistency", criterion2},
      {"feasibility across full runs", criterion3},
      {"product-integral row sums and Chapman-Kolmogorov", criterion4},
      {"EM monotonicity (canonical, poisson; multinomial reported)", criterion5},
      {"latent-Poisson initial-estimate invariance", criterion6},
      {"multinomial/poisson RMSE agreement and consistency direction", criterion7},
      {"iteration-count ordering (poisson > multinomial)", criterion8},
      {"exact-state transition-probability recovery", criterion9},
      {"degenerate-data occurrence/exposure closed form", criterion10},
  };

  std::vector<int> selected;
  for (int a = 1; a < argc; ++a) {
    std::string arg = argv[a];
    if (!arg.empty() && std::isdigit(static_cast<unsigned char>(arg[0])))
      selected.push_back(std::atoi(arg.c_str()));
    else
      g_data_dir = arg;
  }
  if (selected.empty())
    for (size_t i = 1; i <= criteria.size(); ++i) selected.push_back(static_cast<int>(i));

  int failures = 0;
  for (int index : selected) {
    if (index < 1 || index > static_cast<int>(criteria.size())) {
      std::cerr << "unknown criterion " << index << "\n";
      ++failures;
      continue;
    }
    const auto& [name, fn] = criteria[index - 1];
    double t0 = now_seconds();
    Result result;
    try {
      result = fn();
    } catch (const std::exception& e) {
      result.pass = false;
      result.detail = std::string("exception: ") + e.what();
    }
    double elapsed = now_seconds() - t0;
    std::printf("criterion %2d [%s]: %s — %s (%.1fs)\n", index, name.c_str(), result.pass ? "PASS" : "FAIL",
                result.detail.c_str(), elapsed);
    std::fflush(stdout);
    if (!result.pass) ++failures;
  }
  if (failures == 0)
    std::printf("acceptance: all %zu criteria passed\n", selected.size());
  else
    std::printf("acceptance: %d of %zu criteria FAILED\n", failures, selected.size());
  return failures;
}
