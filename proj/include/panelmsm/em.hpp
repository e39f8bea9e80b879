#pragma once

#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "panelmsm/prodint.hpp"

namespace pmsm {

/// E-step output: expected transition counts d_gh^k and expected at-risk
/// occupancies Y_g^k under the current estimate, aggregated over subjects in
/// subject order. `loglik` is the observed-data log likelihood at the
/// estimate the E-step was evaluated at (a free by-product).
struct ExpectedCounts {
  std::shared_ptr<const TransitionGraph> graph;
  std::shared_ptr<const BinGrid> grid;
  std::vector<double> d;        // num_transitions x K
  std::vector<double> y;        // num_states x K
  std::vector<double> at_risk;  // K: active subjects per bin
  double loglik = std::numeric_limits<double>::quiet_NaN();

  struct PerSubject {
    std::vector<double> d;
    std::vector<double> y;
  };
  std::vector<PerSubject> per_subject;  // filled only on request

  int num_bins() const { return grid->num_bins(); }
  double d_at(int transition, int bin) const { return d[static_cast<size_t>(transition) * num_bins() + bin - 1]; }
  double y_at(int state, int bin) const { return y[static_cast<size_t>(state - 1) * num_bins() + bin - 1]; }
};

struct EStepOptions {
  int threads = 0;               // 0: hardware concurrency
  bool keep_per_subject = false;
  bool clamp_infeasible = false;
};

/// Conditional expectations of d and Y given the observed panel and the
/// current estimate: interval-censored form, and the exact-arrival form for
/// intervals ending in a newly entered exact state.
ExpectedCounts estep(const IntensityEstimate& estimate, const PanelDataset& dataset, const BinGrid& grid,
                     const TransitionGraph& graph, const EStepOptions& options = {});

/// KKT-derived maximizer of the expected complete-data log likelihood over
/// the feasible region (alpha >= 0, row sums <= 1), with 0/0 := 0. Output
/// rows satisfy the budget exactly in floating point.
IntensityEstimate mstep(const ExpectedCounts& counts);

/// Observed-data log likelihood: sum over subjects and observation intervals
/// of log interval probabilities; exact arrivals use the predecessor-weighted
/// form. Throws NonFiniteLoglikError when an interval has probability <= 0.
double observed_loglik(const IntensityEstimate& estimate, const PanelDataset& dataset, const BinGrid& grid,
                       const TransitionGraph& graph, bool clamp_infeasible = false);

struct ReducedGradient {
  std::vector<double> values;  // num_transitions x K
  double max_value = 0.0;
  double max_abs = 0.0;
};

/// grad_gh^k = Y_g^k - d_gh^k / alpha_gh^k + mu_g^k; cells with
/// alpha = d = 0 sit at a boundary optimum and report 0.
ReducedGradient reduced_gradient(const IntensityEstimate& estimate, const ExpectedCounts& counts);

/// True when no cell's reduced gradient exceeds `tolerance`.
bool is_local_max(const IntensityEstimate& estimate, const ExpectedCounts& counts, double tolerance = 0.0);

enum class StopCriterion {
  max_intensity_change,
  loglik_change,
  reduced_gradient,
};

enum class StopReason {
  intensity_tol,
  loglik_tol,
  kkt,
  max_iter,
};

const char* to_string(StopReason reason);
const char* to_string(StopCriterion criterion);

struct EMConfig {
  double tolerance = 1e-4;
  StopCriterion criterion = StopCriterion::max_intensity_change;
  int max_iterations = 5000;
  /// Initial jump sizes: 1/K on allowed transitions unless a custom grid is
  /// given. Custom grids must be feasible and strictly positive on V.
  std::optional<IntensityEstimate> initial;
  int threads = 0;
  /// Called every `progress_every` iterations with (iteration, max_delta, loglik).
  std::function<void(int, double, double)> progress;
  int progress_every = 50;
};

struct TraceRow {
  int iteration = 0;
  double loglik = std::numeric_limits<double>::quiet_NaN();
  double max_delta = std::numeric_limits<double>::quiet_NaN();
  double max_reduced_gradient = std::numeric_limits<double>::quiet_NaN();
};

struct FitResult {
  explicit FitResult(IntensityEstimate est) : estimate(std::move(est)) {}

  IntensityEstimate estimate;
  std::string variant;
  int iterations = 0;
  bool converged = false;
  StopReason stop_reason = StopReason::max_iter;
  std::vector<TraceRow> trace;  // one row per iteration
  std::vector<double> final_reduced_gradient;
  double final_max_reduced_gradient = 0.0;
  double final_loglik = std::numeric_limits<double>::quiet_NaN();
  int loglik_decrease_count = 0;
  double max_loglik_decrease = 0.0;
  int feasibility_warnings = 0;  // clamp events (poisson/alt variants)

  std::vector<double> loglik_trace() const;
};

/// Algorithm driver for the multinomial estimator: iterate E- and M-steps
/// until the configured criterion fires or max_iterations is reached. The
/// final reduced gradient is always evaluated and reported.
FitResult run_em(const PanelDataset& dataset, const TransitionGraph& graph, const EMConfig& config = {});

/// Uniform 1/K initial estimate on allowed transitions.
IntensityEstimate make_uniform_initial(std::shared_ptr<const TransitionGraph> graph,
                                       std::shared_ptr<const BinGrid> grid);

/// Front-loaded initial estimate: per transition, 90% of unit total mass on
/// the first 10% of bins, the rest spread over the remaining bins.
IntensityEstimate make_front_loaded_initial(std::shared_ptr<const TransitionGraph> graph,
                                            std::shared_ptr<const BinGrid> grid);

/// Trace export: "iteration,loglik,max_delta,max_reduced_gradient".
std::string serialize_trace_csv(const FitResult& result);
/// Reduced-gradient export: "from,to,bin,tau,reduced_gradient".
std::string serialize_gradient_csv(const FitResult& result);

}  // namespace pmsm
