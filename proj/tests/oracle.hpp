#pragma once

// Test-only oracle: exhaustive enumeration of the discrete-time state paths
// compatible with a subject's observations. Posterior transition and
// occupancy expectations are computed by brute-force summation over paths,
// independently of the forward/backward E-step implementation.

#include <vector>

#include "panelmsm/em.hpp"

namespace pmsm::testing {

struct OraclePosterior {
  std::vector<double> d;  // num_transitions x K: E[d_gh,i^k | observations]
  std::vector<double> y;  // num_states x K: E[Y_g,i^k | observations]
  double loglik = 0.0;    // log probability of the observations given the first one

  double d_at(int transition, int bin, int num_bins) const {
    return d[static_cast<size_t>(transition) * num_bins + bin - 1];
  }
  double y_at(int state, int bin, int num_bins) const {
    return y[static_cast<size_t>(state - 1) * num_bins + bin - 1];
  }
};

/// Enumerates every state path over the grid times spanned by the subject's
/// observations. Paths must match all observed states; an observation of a
/// newly entered exact state additionally forbids occupying that state just
/// before its (exact) arrival time.
OraclePosterior enumerate_subject_posterior(const IntensityEstimate& estimate, const SubjectRecord& subject,
                                            const BinGrid& grid, const TransitionGraph& graph);

/// Sum of per-subject oracle logliks: an independent route to the observed
/// data log likelihood.
double oracle_observed_loglik(const IntensityEstimate& estimate, const PanelDataset& dataset, const BinGrid& grid,
                              const TransitionGraph& graph);

}  // namespace pmsm::testing
