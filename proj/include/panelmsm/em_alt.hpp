#pragma once

#include "panelmsm/em.hpp"

namespace pmsm {

/// The per-block linear system of the canonical-multinomial and multinoulli
/// M-steps: alpha = D (1 - M alpha), solved as (I + D M) alpha = D 1 with
/// D = diag(q) and M the hollow ones matrix.
struct LinearMStepSystem {
  int dimension = 0;
  std::vector<double> q;       // block ratio per element
  std::vector<double> matrix;  // I + D M, row-major dimension x dimension
  std::vector<double> rhs;     // D 1

  /// Direct dense solve with partial pivoting; pivots below 1e-12 throw
  /// SingularMStepError carrying `label`.
  std::vector<double> solve(const std::string& label) const;
};

/// Block system for transitions out of `from` in `bin`:
/// q_h = d_gh / (Y_g - sum_z d_gz + d_gh).
LinearMStepSystem canonical_mstep_system(const ExpectedCounts& counts, int from, int bin);

/// Joint system over all transitions in `bin` with the at-risk count n_k:
/// q_gh = d_gh / (n_k - sum_V d_rs + d_gh).
LinearMStepSystem multinoulli_mstep_system(const ExpectedCounts& counts, double n_k, int bin);

/// Canonical-multinomial M-step: per (state, bin) matrix solve. Negative
/// components are clamped to zero; `clamp_events`, when given, counts them.
IntensityEstimate mstep_canonical(const ExpectedCounts& counts, int* clamp_events = nullptr);

/// Multinoulli M-step: one joint solve per bin, averaging over the per-bin
/// at-risk subject counts.
IntensityEstimate mstep_multinoulli(const ExpectedCounts& counts, const std::vector<double>& at_risk,
                                    int* clamp_events = nullptr);

enum class AltVariant { canonical, multinoulli };

/// EM driver reusing the interval-censored E-step with the selected
/// alternative M-step. Exact states are not supported by these variants.
FitResult run_em_variant(const PanelDataset& dataset, const TransitionGraph& graph, const EMConfig& config,
                         AltVariant variant);

}  // namespace pmsm
