#include "panelmsm/em_alt.hpp"

#include <cmath>

#include "em_internal.hpp"

namespace pmsm {

namespace {

constexpr double kPivotFloor = 1e-12;

// Ratios q_i = d_i / (total - sum_d + d_i) with 0/0 := 0; a zero denominator
// against positive d marks the no-staying-probability singularity.
LinearMStepSystem build_system(const std::vector<double>& d, double total, const std::string& label) {
  const int n = static_cast<int>(d.size());
  double sum_d = 0.0;
  for (double v : d) sum_d += v;

  LinearMStepSystem sys;
  sys.dimension = n;
  sys.q.resize(n);
  for (int i = 0; i < n; ++i) {
    double denom = total - sum_d + d[i];
    if (d[i] == 0.0)
      sys.q[i] = 0.0;
    else if (denom <= 0.0)
      throw SingularMStepError(label + ": no staying probability under current expectations");
    else
      sys.q[i] = d[i] / denom;
  }
  sys.matrix.assign(static_cast<size_t>(n) * n, 0.0);
  sys.rhs.resize(n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < n; ++j) sys.matrix[static_cast<size_t>(i) * n + j] = i == j ? 1.0 : sys.q[i];
    sys.rhs[i] = sys.q[i];
  }
  return sys;
}

}  // namespace

std::vector<double> LinearMStepSystem::solve(const std::string& label) const {
  const int n = dimension;
  std::vector<double> a = matrix;
  std::vector<double> x = rhs;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = i;

  for (int col = 0; col < n; ++col) {
    int pivot = col;
    for (int r = col + 1; r < n; ++r)
      if (std::abs(a[static_cast<size_t>(perm[r]) * n + col]) > std::abs(a[static_cast<size_t>(perm[pivot]) * n + col]))
        pivot = r;
    std::swap(perm[col], perm[pivot]);
    double p = a[static_cast<size_t>(perm[col]) * n + col];
    if (std::abs(p) < kPivotFloor) throw SingularMStepError(label + ": singular M-step system");
    for (int r = col + 1; r < n; ++r) {
      double f = a[static_cast<size_t>(perm[r]) * n + col] / p;
      if (f == 0.0) continue;
      a[static_cast<size_t>(perm[r]) * n + col] = 0.0;
      for (int c = col + 1; c < n; ++c)
        a[static_cast<size_t>(perm[r]) * n + c] -= f * a[static_cast<size_t>(perm[col]) * n + c];
      x[perm[r]] -= f * x[perm[col]];
    }
  }
  std::vector<double> out(n);
  for (int col = n - 1; col >= 0; --col) {
    double v = x[perm[col]];
    for (int c = col + 1; c < n; ++c) v -= a[static_cast<size_t>(perm[col]) * n + c] * out[c];
    out[col] = v / a[static_cast<size_t>(perm[col]) * n + col];
  }
  return out;
}

LinearMStepSystem canonical_mstep_system(const ExpectedCounts& counts, int from, int bin) {
  const TransitionGraph& graph = *counts.graph;
  std::vector<double> d;
  for (int h : graph.successors(from)) d.push_back(counts.d_at(graph.transition_index(from, h), bin));
  return build_system(d, counts.y_at(from, bin),
                      "state " + std::to_string(from) + ", bin " + std::to_string(bin));
}

LinearMStepSystem multinoulli_mstep_system(const ExpectedCounts& counts, double n_k, int bin) {
  std::vector<double> d;
  for (int t = 0; t < counts.graph->num_transitions(); ++t) d.push_back(counts.d_at(t, bin));
  return build_system(d, n_k, "bin " + std::to_string(bin));
}

namespace {

void clamp_negative(std::vector<double>& values, int* clamp_events) {
  for (double& v : values)
    if (v < 0.0) {
      v = 0.0;
      if (clamp_events) ++*clamp_events;
    }
}

}  // namespace

IntensityEstimate mstep_canonical(const ExpectedCounts& counts, int* clamp_events) {
  const TransitionGraph& graph = *counts.graph;
  IntensityEstimate out(counts.graph, counts.grid);
  for (int g = 1; g <= graph.num_states(); ++g) {
    const auto& succ = graph.successors(g);
    if (succ.empty()) continue;
    for (int k = 1; k <= counts.num_bins(); ++k) {
      std::string label = "state " + std::to_string(g) + ", bin " + std::to_string(k);
      LinearMStepSystem sys = canonical_mstep_system(counts, g, k);
      std::vector<double> alpha = sys.solve(label);
      clamp_negative(alpha, clamp_events);
      for (size_t i = 0; i < succ.size(); ++i) out.at(graph.transition_index(g, succ[i]), k) = alpha[i];
    }
  }
  return out;
}

IntensityEstimate mstep_multinoulli(const ExpectedCounts& counts, const std::vector<double>& at_risk,
                                    int* clamp_events) {
  const TransitionGraph& graph = *counts.graph;
  if (static_cast<int>(at_risk.size()) != counts.num_bins())
    throw ShapeMismatchError("at-risk counts must cover every bin");
  IntensityEstimate out(counts.graph, counts.grid);
  for (int k = 1; k <= counts.num_bins(); ++k) {
    double n_k = at_risk[k - 1];
    bool any = false;
    for (int t = 0; t < graph.num_transitions(); ++t) any = any || counts.d_at(t, k) != 0.0;
    if (n_k <= 0.0) {
      if (any) throw EmptyRiskSetError("bin " + std::to_string(k) + " has expected transitions but no subjects at risk");
      continue;  // all-zero bin stays zero
    }
    LinearMStepSystem sys = multinoulli_mstep_system(counts, n_k, k);
    std::vector<double> alpha = sys.solve("bin " + std::to_string(k));
    clamp_negative(alpha, clamp_events);
    for (int t = 0; t < graph.num_transitions(); ++t) out.at(t, k) = alpha[t];
  }
  return out;
}

namespace {

struct AltStepper {
  const PanelDataset& dataset;
  const BinGrid& grid;
  const TransitionGraph& graph;
  int threads;
  AltVariant variant;
  int* feasibility_warnings;
  ExpectedCounts latest;

  const ExpectedCounts& estep(const IntensityEstimate& estimate) {
    if (estimate.max_infeasibility() > 1e-12) ++*feasibility_warnings;
    detail::EStepInternalOptions opt;
    opt.threads = threads;
    opt.clamp_infeasible = true;
    auto data = detail::run_estep_engine(estimate, dataset, grid, graph, opt);
    latest = detail::to_expected_counts(std::move(data), estimate.graph_ptr(), estimate.grid_ptr());
    return latest;
  }
  IntensityEstimate mstep(const ExpectedCounts& counts) {
    return variant == AltVariant::canonical ? mstep_canonical(counts, feasibility_warnings)
                                            : mstep_multinoulli(counts, counts.at_risk, feasibility_warnings);
  }
};

}  // namespace

FitResult run_em_variant(const PanelDataset& dataset, const TransitionGraph& graph, const EMConfig& config,
                         AltVariant variant) {
  if (!graph.exact_states().empty())
    throw ConfigError("the canonical/multinoulli estimators do not support exactly observed states");
  auto graph_ptr = std::make_shared<const TransitionGraph>(graph);
  auto grid_ptr = std::make_shared<const BinGrid>(build_bin_grid(dataset));
  int warnings = 0;
  AltStepper stepper{dataset, *grid_ptr, *graph_ptr, config.threads, variant, &warnings, {}};
  FitResult result =
      detail::run_em_loop(stepper, config, graph_ptr, grid_ptr,
                          variant == AltVariant::canonical ? "canonical" : "multinoulli");
  result.feasibility_warnings = warnings;
  return result;
}

}  // namespace pmsm
