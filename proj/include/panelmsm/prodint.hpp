#pragma once

#include <memory>
#include <string>
#include <vector>

#include "panelmsm/graph.hpp"
#include "panelmsm/panel.hpp"

namespace pmsm {

/// Small dense row-major matrix; H stays single digits in practice.
struct Matrix {
  int n = 0;
  std::vector<double> a;

  Matrix() = default;
  explicit Matrix(int n_) : n(n_), a(static_cast<size_t>(n_) * n_, 0.0) {}
  static Matrix identity(int n);

  double& at(int r, int c) { return a[static_cast<size_t>(r) * n + c]; }
  double at(int r, int c) const { return a[static_cast<size_t>(r) * n + c]; }
};

Matrix multiply(const Matrix& lhs, const Matrix& rhs);

/// Jump sizes alpha_gh^k of the cumulative transition intensities over the
/// allowed transitions and bins; the object the EM estimates. Entries are
/// addressed by the graph's transition index and a 1-based bin.
class IntensityEstimate {
 public:
  IntensityEstimate(std::shared_ptr<const TransitionGraph> graph, std::shared_ptr<const BinGrid> grid,
                    double initial_value = 0.0);

  const TransitionGraph& graph() const { return *graph_; }
  const BinGrid& grid() const { return *grid_; }
  std::shared_ptr<const TransitionGraph> graph_ptr() const { return graph_; }
  std::shared_ptr<const BinGrid> grid_ptr() const { return grid_; }

  int num_bins() const { return grid_->num_bins(); }
  int num_transitions() const { return graph_->num_transitions(); }

  double at(int transition, int bin) const { return alpha_[cell(transition, bin)]; }
  double& at(int transition, int bin) { return alpha_[cell(transition, bin)]; }
  double value(int from, int to, int bin) const;

  const std::vector<double>& values() const { return alpha_; }
  std::vector<double>& values() { return alpha_; }

  /// Sum of alpha over transitions out of `from` in `bin`.
  double row_sum(int from, int bin) const;

  /// Largest row sum overhang above 1 across all (state, bin) cells.
  double max_infeasibility() const;

  size_t cell(int transition, int bin) const {
    return static_cast<size_t>(transition) * grid_->num_bins() + (bin - 1);
  }

 private:
  std::shared_ptr<const TransitionGraph> graph_;
  std::shared_ptr<const BinGrid> grid_;
  std::vector<double> alpha_;
};

/// Discrete per-bin transition matrix I + dA(tau_k): off-diagonals alpha_gh^k,
/// diagonal 1 - sum of the row. Throws InfeasibleEstimateError when a row sum
/// exceeds 1 + 1e-12; smaller overhangs clamp the diagonal at 0.
Matrix bin_matrix(const IntensityEstimate& estimate, int bin);

/// As bin_matrix but never throws on infeasible rows: diagonals clamp at 0 and
/// `clamped`, when given, counts the rows whose sum exceeded 1 + 1e-12.
Matrix bin_matrix_clamped(const IntensityEstimate& estimate, int bin, int* clamped = nullptr);

/// P(s,t): ordered product of bin matrices over bins with s < tau_k <= t.
Matrix transition_matrix(const IntensityEstimate& estimate, double s, double t);

inline constexpr double kDenominatorFloor = 1e-300;

/// Per-bin transition coefficients of an estimate in flat form, shared by all
/// interval caches built against the same estimate (the coefficients do not
/// depend on the subject).
class BinCoeffTable {
 public:
  BinCoeffTable(const IntensityEstimate& estimate, bool clamp_infeasible = false);

  const IntensityEstimate& estimate() const { return *estimate_; }
  const TransitionGraph& graph() const { return estimate_->graph(); }
  double diag(int bin, int g) const { return diag_[static_cast<size_t>(bin - 1) * num_states_ + g - 1]; }
  double alpha(int bin, int transition) const {
    return alpha_[static_cast<size_t>(bin - 1) * num_transitions_ + transition];
  }

 private:
  const IntensityEstimate* estimate_;
  int num_states_ = 0;
  int num_transitions_ = 0;
  std::vector<double> diag_;   // K x H staying probabilities
  std::vector<double> alpha_;  // K x num_transitions
};

/// Forward/backward vectors over the bins of one observation interval, giving
/// every per-bin E-step numerator in linear time. For interval-censored
/// endpoints the chains run from e_a at l to e_b at r and the denominator is
/// P_ab(l,r). For exact arrivals the backward chain ends at tau_{k_r - 1} with
/// terminal weights alpha_mb^{k_r} over predecessors m of b, matching the
/// arrival-conditioned denominator.
class IntervalCache {
 public:
  IntervalCache(const IntensityEstimate& estimate, const ObservationInterval& interval,
                const std::string& subject_id = "", bool clamp_infeasible = false);
  IntervalCache(const BinCoeffTable& table, const ObservationInterval& interval,
                const std::string& subject_id = "");

  const ObservationInterval& interval() const { return interval_; }
  /// P_ab(l,r), or the exact-arrival denominator; always > kDenominatorFloor.
  double denominator() const { return denominator_; }

  /// P_{a,g}(l, tau_k) for k in [k_l, k_r].
  double forward(int k, int g) const;
  /// Interval case: P_{g,b}(tau_k, r) for k in [k_l, k_r]. Exact case:
  /// sum_m alpha_mb^{k_r} P_{g,m}(tau_k, tau_{k_r-1}) for k in [k_l, k_r-1].
  double backward(int k, int g) const;
  /// forward(k, .) dot backward(k, .); equals denominator() for every k.
  double fb_dot(int k) const;

  /// Y_{g,i}^k: occupancy probability of g just before tau_k, given the data.
  double occupancy(int k, int g) const;
  /// d_{gh,i}^k / alpha_gh^k: the transition expectation with the current
  /// alpha factored out (multiply by alpha_gh^k to recover d).
  double transition_weight(int k, int g, int h) const;

 private:
  void build(const BinCoeffTable& table, const std::string& subject_id);

  const double* fwd_row(int k) const { return fwd_.data() + static_cast<size_t>(k - interval_.k_l) * num_states_; }
  const double* bwd_row(int k) const { return bwd_.data() + static_cast<size_t>(k - interval_.k_l) * num_states_; }

  ObservationInterval interval_;
  int num_states_ = 0;
  std::vector<double> fwd_;  // (k_r - k_l + 1) x H mantissas
  std::vector<double> bwd_;
  std::vector<int> fwd_scale_;  // log2 scale per row
  std::vector<int> bwd_scale_;
  double denominator_mantissa_ = 0.0;
  int denominator_scale_ = 0;
  double denominator_ = 0.0;
};

/// Estimate export: header "from,to,bin,tau,alpha", rows ordered by
/// (from, to, bin) ascending. Values round-trip exactly.
std::string serialize_estimate_csv(const IntensityEstimate& estimate);
IntensityEstimate parse_estimate_csv(const std::string& text, std::shared_ptr<const TransitionGraph> graph);
void write_estimate_csv(const IntensityEstimate& estimate, const std::string& path);
IntensityEstimate read_estimate_csv(const std::string& path, std::shared_ptr<const TransitionGraph> graph);

/// Transition-probability table "from,to,s,t,prob" over t = t0, t0+step, ..., t1.
std::string serialize_probability_table(const IntensityEstimate& estimate, double s, double t0, double t1,
                                        double step);

}  // namespace pmsm
