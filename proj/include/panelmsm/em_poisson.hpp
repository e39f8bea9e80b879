#pragma once

#include "panelmsm/em.hpp"

namespace pmsm {

/// Expected latent Poisson transition counts per transition and bin,
/// aggregated over at-risk subjects. `w_over_alpha` keeps the current
/// estimate factored out so the M-step ratio W / n reduces to alpha exactly
/// when a cell receives no data information.
struct PoissonExpectedCounts {
  std::shared_ptr<const TransitionGraph> graph;
  std::shared_ptr<const BinGrid> grid;
  std::vector<double> w;             // num_transitions x K: sum of E[W_gh,i^k]
  std::vector<double> w_over_alpha;  // num_transitions x K
  std::vector<double> at_risk;       // K: active subjects per bin
  std::vector<double> alpha_tilde;   // estimate the expectations were taken at
  double loglik = std::numeric_limits<double>::quiet_NaN();
  int clamp_events = 0;  // infeasible rows clamped while evaluating

  int num_bins() const { return grid->num_bins(); }
  double w_at(int transition, int bin) const { return w[static_cast<size_t>(transition) * num_bins() + bin - 1]; }
};

/// Conditional expectations of the latent Poisson counts: the away-from-g
/// occupancy term plus the transition term damped by
/// exp(-sum of competing intensities). Exact states are not supported.
PoissonExpectedCounts estep_poisson(const IntensityEstimate& estimate, const PanelDataset& dataset,
                                    const BinGrid& grid, const TransitionGraph& graph,
                                    const EStepOptions& options = {});

/// Per-bin average of expected counts over at-risk subjects. The output is
/// not projected onto the feasible region; overshooting rows surface as
/// feasibility warnings downstream.
IntensityEstimate mstep_poisson(const PoissonExpectedCounts& counts);

/// EM driver with the latent-Poisson E/M steps. Rejects models with exact
/// states. Interim infeasible estimates are evaluated with diagonals clamped
/// at zero and counted in FitResult::feasibility_warnings.
FitResult run_em_poisson(const PanelDataset& dataset, const TransitionGraph& graph, const EMConfig& config = {});

}  // namespace pmsm
