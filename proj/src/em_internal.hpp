#pragma once

// Shared E-step engine and EM driver used by the multinomial, latent-Poisson
// and alternative-M-step estimators.

#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "panelmsm/em.hpp"

namespace pmsm::detail {

struct EStepData {
  std::vector<double> d;        // num_transitions x K
  std::vector<double> y;        // num_states x K
  std::vector<double> w_ratio;  // num_transitions x K, poisson only: E[W]/alpha
  std::vector<double> at_risk;  // K
  double loglik = 0.0;
  std::vector<ExpectedCounts::PerSubject> per_subject;
};

struct EStepInternalOptions {
  int threads = 0;
  bool poisson = false;
  bool clamp_infeasible = false;
  bool keep_per_subject = false;
};

EStepData run_estep_engine(const IntensityEstimate& estimate, const PanelDataset& dataset, const BinGrid& grid,
                           const TransitionGraph& graph, const EStepInternalOptions& options);

ExpectedCounts to_expected_counts(EStepData&& data, std::shared_ptr<const TransitionGraph> graph,
                                  std::shared_ptr<const BinGrid> grid);

// Knocks the largest entry down by ulps until the plain left-to-right sum of
// the row is <= 1.0 in floating point.
void enforce_row_budget(std::vector<double*>& row);

IntensityEstimate validated_initial(const EMConfig& config, std::shared_ptr<const TransitionGraph> graph,
                                    std::shared_ptr<const BinGrid> grid);

inline void finalize_result(FitResult& result, const IntensityEstimate& estimate, const ExpectedCounts& counts,
                            const ReducedGradient& grad) {
  result.estimate = estimate;
  result.iterations = static_cast<int>(result.trace.size());
  result.final_reduced_gradient = grad.values;
  result.final_max_reduced_gradient = grad.max_value;
  result.final_loglik = counts.loglik;
  if (!result.trace.empty() && std::isnan(result.trace.back().loglik)) result.trace.back().loglik = counts.loglik;
}

// One EM run. Stepper::estep(estimate) computes expectations at the current
// estimate (multinomial counts plus the observed loglik there); mstep(counts)
// produces the next estimate. The trace row of iteration t receives the
// loglik of its output estimate, evaluated by the following E-step.
template <typename Stepper>
FitResult run_em_loop(Stepper& stepper, const EMConfig& config, std::shared_ptr<const TransitionGraph> graph,
                      std::shared_ptr<const BinGrid> grid, const std::string& variant) {
  if (!(config.tolerance > 0.0)) throw ConfigError("tolerance must be positive");
  if (config.max_iterations < 1) throw ConfigError("max_iterations must be at least 1");

  IntensityEstimate current = validated_initial(config, graph, grid);

  FitResult result{current};
  result.variant = variant;

  auto record_loglik = [&result](int iteration, double loglik) {
    if (iteration < 1 || iteration > static_cast<int>(result.trace.size())) return;
    TraceRow& row = result.trace[iteration - 1];
    row.loglik = loglik;
    if (iteration >= 2) {
      double drop = result.trace[iteration - 2].loglik - loglik;
      if (drop > 1e-9) ++result.loglik_decrease_count;
      if (drop > result.max_loglik_decrease) result.max_loglik_decrease = drop;
    }
  };

  auto annotate = [](const Error& e, int iteration) -> std::string {
    return "iteration " + std::to_string(iteration) + ": " + e.what();
  };

  bool stopped = false;
  for (int t = 1; !stopped; ++t) {
    try {
      const ExpectedCounts& counts = stepper.estep(current);
      record_loglik(t - 1, counts.loglik);

      ReducedGradient grad = reduced_gradient(current, counts);

      if (config.criterion == StopCriterion::reduced_gradient && grad.max_value < config.tolerance) {
        result.converged = true;
        result.stop_reason = StopReason::kkt;
        finalize_result(result, current, counts, grad);
        return result;
      }
      if (config.criterion == StopCriterion::loglik_change && t >= 3) {
        double delta_ll = std::abs(result.trace[t - 2].loglik - result.trace[t - 3].loglik);
        if (delta_ll < config.tolerance) {
          result.converged = true;
          result.stop_reason = StopReason::loglik_tol;
          finalize_result(result, current, counts, grad);
          return result;
        }
      }

      IntensityEstimate next = stepper.mstep(counts);
      double delta = 0.0;
      for (size_t c = 0; c < next.values().size(); ++c)
        delta = std::max(delta, std::abs(next.values()[c] - current.values()[c]));

      result.trace.push_back(TraceRow{t, std::numeric_limits<double>::quiet_NaN(), delta, grad.max_value});
      result.iterations = t;
      current = std::move(next);

      if (config.progress && config.progress_every > 0 && t % config.progress_every == 0)
        config.progress(t, delta, t >= 2 ? result.trace[t - 2].loglik : std::numeric_limits<double>::quiet_NaN());

      if (config.criterion == StopCriterion::max_intensity_change && delta < config.tolerance) {
        result.converged = true;
        result.stop_reason = StopReason::intensity_tol;
        stopped = true;
      } else if (t >= config.max_iterations) {
        result.converged = false;
        result.stop_reason = StopReason::max_iter;
        stopped = true;
      }
    } catch (const ZeroDenominatorError& e) {
      throw ZeroDenominatorError(annotate(e, t));
    } catch (const NonFiniteLoglikError& e) {
      throw NonFiniteLoglikError(annotate(e, t));
    } catch (const SingularMStepError& e) {
      throw SingularMStepError(annotate(e, t));
    } catch (const EmptyRiskSetError& e) {
      throw EmptyRiskSetError(annotate(e, t));
    } catch (const InfeasibleEstimateError& e) {
      throw InfeasibleEstimateError(annotate(e, t));
    }
  }

  const ExpectedCounts& counts = stepper.estep(current);
  record_loglik(result.iterations, counts.loglik);
  ReducedGradient grad = reduced_gradient(current, counts);
  finalize_result(result, current, counts, grad);
  return result;
}

}  // namespace pmsm::detail
