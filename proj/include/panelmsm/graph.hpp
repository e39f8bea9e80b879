#pragma once

#include <string>
#include <utility>
#include <vector>

#include "panelmsm/errors.hpp"

namespace pmsm {

/// Directed acyclic multi-state structure: states 1..H, allowed direct
/// transitions, and the subset of states whose arrival times are observed
/// exactly. Immutable after construction; safe to share across threads.
class TransitionGraph {
 public:
  int num_states() const { return num_states_; }
  const std::vector<std::pair<int, int>>& transitions() const { return transitions_; }
  int num_transitions() const { return static_cast<int>(transitions_.size()); }
  const std::vector<int>& exact_states() const { return exact_states_; }
  const std::vector<std::string>& labels() const { return labels_; }

  /// Successor states reachable from `g` in one transition, ascending.
  const std::vector<int>& successors(int g) const { return successors_[g - 1]; }
  /// Predecessor states with a direct transition into `h`, ascending.
  const std::vector<int>& predecessors(int h) const { return predecessors_[h - 1]; }

  /// Index of (g,h) in transitions(), or -1 when the transition is not allowed.
  int transition_index(int g, int h) const { return transition_index_[(g - 1) * num_states_ + (h - 1)]; }

  bool is_exact(int state) const { return exact_mask_[state - 1]; }
  bool is_absorbing(int state) const { return successors_[state - 1].empty(); }

  /// True when a directed path (possibly empty) leads from g to h.
  bool reachable(int g, int h) const { return reachable_[(g - 1) * num_states_ + (h - 1)]; }

  /// States in a topological order of the transition relation.
  const std::vector<int>& topological_order() const { return topo_order_; }

  /// Resolves a state given either its 1-based number or its label.
  int resolve_state(const std::string& token) const;

  friend TransitionGraph build_graph(int num_states, const std::vector<std::pair<int, int>>& transitions,
                                     const std::vector<int>& exact_states, const std::vector<std::string>& labels);

 private:
  int num_states_ = 0;
  std::vector<std::pair<int, int>> transitions_;
  std::vector<int> exact_states_;
  std::vector<std::string> labels_;
  std::vector<std::vector<int>> successors_;
  std::vector<std::vector<int>> predecessors_;
  std::vector<int> transition_index_;
  std::vector<bool> exact_mask_;
  std::vector<bool> reachable_;
  std::vector<int> topo_order_;
};

/// Validates and builds a graph. Throws InvalidStateError, SelfLoopError or
/// CycleError (naming one directed cycle) on bad input.
TransitionGraph build_graph(int num_states, const std::vector<std::pair<int, int>>& transitions,
                            const std::vector<int>& exact_states = {},
                            const std::vector<std::string>& labels = {});

/// Checks that each consecutive observed pair is connected by a directed path
/// (possibly empty when equal). Throws UnreachableObservationError.
void validate_observation_sequence(const TransitionGraph& graph, const std::vector<int>& states,
                                   const std::string& subject_id = "");

/// Model spec text format:
///   states = 3
///   transitions = [[1,2],[1,3],[2,3]]
///   exact = [3]
///   labels = ["healthy","ill","dead"]
/// serialize -> parse round-trips bit-exactly on canonical text.
TransitionGraph parse_model_spec(const std::string& text);
std::string serialize_model_spec(const TransitionGraph& graph);
TransitionGraph read_model_spec(const std::string& path);
void write_model_spec(const TransitionGraph& graph, const std::string& path);

}  // namespace pmsm
