#pragma once

#include <string>
#include <vector>

#include "panelmsm/graph.hpp"

namespace pmsm {

struct Observation {
  double time = 0.0;
  int state = 0;
};

struct SubjectRecord {
  std::string id;
  std::vector<Observation> obs;  // strictly increasing times, first >= 0
};

struct PanelDataset {
  std::vector<SubjectRecord> subjects;
  int num_subjects() const { return static_cast<int>(subjects.size()); }
};

struct PanelRow {
  std::string id;
  double time = 0.0;
  int state = 0;
};

/// The global estimation grid: sorted unique positive observation times
/// tau_1 < ... < tau_K, with tau_0 = 0 implicit. Bin k is (tau_{k-1}, tau_k].
class BinGrid {
 public:
  explicit BinGrid(std::vector<double> taus);

  const std::vector<double>& taus() const { return taus_; }
  int num_bins() const { return static_cast<int>(taus_.size()); }
  double tau(int k) const { return k == 0 ? 0.0 : taus_[k - 1]; }  // tau_0 = 0
  /// Largest gap between adjacent grid times (including tau_0 = 0).
  double max_gap() const { return max_gap_; }

  /// Grid index k with tau_k == t exactly (0 for t == 0). Observation times
  /// always lie on the grid; anything else throws.
  int index_of_time(double t) const;
  /// Number of grid times in (s, t]; the bins multiplied over by P(s,t).
  int first_bin_after(double s) const;  // smallest k with tau_k > s
  int last_bin_at_or_before(double t) const;  // largest k with tau_k <= t (0 if none)

 private:
  std::vector<double> taus_;
  double max_gap_ = 0.0;
};

/// Bracketing quantities of subject i for bin k: l is the largest observation
/// time <= tau_{k-1}, r the smallest >= tau_k, a and b the states observed
/// there. Inactive when either side is missing.
struct SubjectBinContext {
  bool active = false;
  double l = 0.0;
  double r = 0.0;
  int a = 0;
  int b = 0;
  int k_l = 0;  // grid index of l
  int k_r = 0;  // grid index of r
};

/// One observation interval (l, r] of a subject, covering bins k_l+1 .. k_r.
/// exact_arrival marks intervals ending in a newly entered exact state.
struct ObservationInterval {
  double l = 0.0;
  double r = 0.0;
  int a = 0;
  int b = 0;
  int k_l = 0;
  int k_r = 0;
  bool exact_arrival = false;
};

/// Groups rows by id, sorts per-subject observations by time and validates
/// them against the graph. Subjects keep their order of first appearance.
PanelDataset ingest_panel(const std::vector<PanelRow>& rows, const TransitionGraph& graph);

BinGrid build_bin_grid(const PanelDataset& dataset);

SubjectBinContext subject_bin_context(const PanelDataset& dataset, const BinGrid& grid, int subject, int bin);

/// Consecutive-observation intervals of one subject, mapped onto the grid.
/// An interval is an exact arrival when its right state is exact and differs
/// from its left state (the right endpoint is then the transition time).
std::vector<ObservationInterval> subject_intervals(const SubjectRecord& subject, const BinGrid& grid,
                                                   const TransitionGraph& graph);

/// Panel file: delimited text with header "id,time,state"; states are 1-based
/// integers or labels resolvable via the model spec.
PanelDataset parse_panel_csv(const std::string& text, const TransitionGraph& graph);
std::string serialize_panel_csv(const PanelDataset& dataset);
PanelDataset read_panel_csv(const std::string& path, const TransitionGraph& graph);
void write_panel_csv(const PanelDataset& dataset, const std::string& path);

}  // namespace pmsm
