#include "panelmsm/em_poisson.hpp"

#include <cmath>

#include "em_internal.hpp"

namespace pmsm {

namespace {

void require_no_exact_states(const TransitionGraph& graph) {
  if (!graph.exact_states().empty())
    throw ConfigError("the latent-Poisson estimator does not support exactly observed states");
}

PoissonExpectedCounts make_poisson_counts(detail::EStepData&& data, const IntensityEstimate& estimate) {
  PoissonExpectedCounts counts;
  counts.graph = estimate.graph_ptr();
  counts.grid = estimate.grid_ptr();
  counts.w_over_alpha = std::move(data.w_ratio);
  counts.at_risk = std::move(data.at_risk);
  counts.alpha_tilde = estimate.values();
  counts.loglik = data.loglik;
  counts.w.resize(counts.w_over_alpha.size());
  for (size_t c = 0; c < counts.w.size(); ++c) counts.w[c] = counts.alpha_tilde[c] * counts.w_over_alpha[c];
  return counts;
}

}  // namespace

PoissonExpectedCounts estep_poisson(const IntensityEstimate& estimate, const PanelDataset& dataset,
                                    const BinGrid& grid, const TransitionGraph& graph, const EStepOptions& options) {
  require_no_exact_states(graph);
  detail::EStepInternalOptions opt;
  opt.threads = options.threads;
  opt.poisson = true;
  opt.clamp_infeasible = true;  // interim estimates may overshoot the budget
  auto data = detail::run_estep_engine(estimate, dataset, grid, graph, opt);
  return make_poisson_counts(std::move(data), estimate);
}

IntensityEstimate mstep_poisson(const PoissonExpectedCounts& counts) {
  const int K = counts.num_bins();
  IntensityEstimate out(counts.graph, counts.grid);
  for (int t = 0; t < counts.graph->num_transitions(); ++t) {
    for (int k = 1; k <= K; ++k) {
      const size_t cell = static_cast<size_t>(t) * K + k - 1;
      const double n_k = counts.at_risk[k - 1];
      if (n_k <= 0.0) {
        if (counts.w[cell] != 0.0)
          throw EmptyRiskSetError("bin " + std::to_string(k) + " has expected transitions but no subjects at risk");
        out.at(t, k) = 0.0;
        continue;
      }
      // alpha * (sum_i w_i / n) rather than (sum_i alpha w_i) / n: identical
      // algebra, but keeps alpha bitwise unchanged when every subject's
      // multiplier is exactly 1 (no occupancy information for the cell).
      out.at(t, k) = counts.alpha_tilde[cell] * (counts.w_over_alpha[cell] / n_k);
    }
  }
  return out;
}

namespace {

struct PoissonStepper {
  const PanelDataset& dataset;
  const BinGrid& grid;
  const TransitionGraph& graph;
  int threads;
  int* feasibility_warnings;
  ExpectedCounts latest;
  PoissonExpectedCounts latest_poisson;

  const ExpectedCounts& estep(const IntensityEstimate& estimate) {
    if (estimate.max_infeasibility() > 1e-12) ++*feasibility_warnings;
    detail::EStepInternalOptions opt;
    opt.threads = threads;
    opt.poisson = true;
    opt.clamp_infeasible = true;
    auto data = detail::run_estep_engine(estimate, dataset, grid, graph, opt);
    latest_poisson = make_poisson_counts(detail::EStepData{data}, estimate);
    latest = detail::to_expected_counts(std::move(data), estimate.graph_ptr(), estimate.grid_ptr());
    return latest;
  }
  IntensityEstimate mstep(const ExpectedCounts&) { return mstep_poisson(latest_poisson); }
};

}  // namespace

FitResult run_em_poisson(const PanelDataset& dataset, const TransitionGraph& graph, const EMConfig& config) {
  require_no_exact_states(graph);
  auto graph_ptr = std::make_shared<const TransitionGraph>(graph);
  auto grid_ptr = std::make_shared<const BinGrid>(build_bin_grid(dataset));
  int warnings = 0;
  PoissonStepper stepper{dataset, *grid_ptr, *graph_ptr, config.threads, &warnings, {}, {}};
  FitResult result = detail::run_em_loop(stepper, config, graph_ptr, grid_ptr, "poisson");
  result.feasibility_warnings = warnings;
  return result;
}

}  // namespace pmsm
