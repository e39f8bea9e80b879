#include "panelmsm/graph.hpp"

#include <algorithm>
#include <set>
#include <sstream>

#include "text_util.hpp"

namespace pmsm {

namespace {

// Finds one directed cycle and renders it as "a->b->...->a". Only called when
// the topological sort has already failed, so a cycle must exist.
std::string find_cycle(int num_states, const std::vector<std::vector<int>>& successors) {
  std::vector<int> color(num_states, 0);  // 0 white, 1 on stack, 2 done
  std::vector<int> stack;
  std::string witness;

  auto dfs = [&](auto&& self, int v) -> bool {
    color[v] = 1;
    stack.push_back(v);
    for (int succ : successors[v]) {
      int u = succ - 1;
      if (color[u] == 1) {
        std::ostringstream ss;
        auto it = std::find(stack.begin(), stack.end(), u);
        for (; it != stack.end(); ++it) ss << (*it + 1) << "->";
        ss << (u + 1);
        witness = ss.str();
        return true;
      }
      if (color[u] == 0 && self(self, u)) return true;
    }
    color[v] = 2;
    stack.pop_back();
    return false;
  };

  for (int v = 0; v < num_states; ++v)
    if (color[v] == 0 && dfs(dfs, v)) return witness;
  return "unknown";
}

}  // namespace

TransitionGraph build_graph(int num_states, const std::vector<std::pair<int, int>>& transitions,
                            const std::vector<int>& exact_states, const std::vector<std::string>& labels) {
  if (num_states < 2) throw InvalidStateError("num_states must be at least 2, got " + std::to_string(num_states));
  if (!labels.empty() && static_cast<int>(labels.size()) != num_states)
    throw InvalidSpecError("labels must name every state: got " + std::to_string(labels.size()) + " labels for " +
                           std::to_string(num_states) + " states");

  TransitionGraph g;
  g.num_states_ = num_states;
  g.labels_ = labels;
  g.successors_.resize(num_states);
  g.predecessors_.resize(num_states);
  g.transition_index_.assign(static_cast<size_t>(num_states) * num_states, -1);
  g.exact_mask_.assign(num_states, false);

  std::set<std::pair<int, int>> seen;
  for (auto [from, to] : transitions) {
    if (from < 1 || from > num_states || to < 1 || to > num_states)
      throw InvalidStateError("transition (" + std::to_string(from) + "," + std::to_string(to) +
                              ") has endpoint outside 1.." + std::to_string(num_states));
    if (from == to) throw SelfLoopError("self-transition (" + std::to_string(from) + "," + std::to_string(to) + ")");
    seen.insert({from, to});
  }
  g.transitions_.assign(seen.begin(), seen.end());
  for (size_t t = 0; t < g.transitions_.size(); ++t) {
    auto [from, to] = g.transitions_[t];
    g.successors_[from - 1].push_back(to);
    g.predecessors_[to - 1].push_back(from);
    g.transition_index_[(from - 1) * num_states + (to - 1)] = static_cast<int>(t);
  }

  for (int s : exact_states) {
    if (s < 1 || s > num_states)
      throw InvalidStateError("exact state " + std::to_string(s) + " outside 1.." + std::to_string(num_states));
    g.exact_mask_[s - 1] = true;
  }
  for (int s = 1; s <= num_states; ++s)
    if (g.exact_mask_[s - 1]) g.exact_states_.push_back(s);

  // Kahn topological sort; leftovers witness a cycle.
  std::vector<int> indegree(num_states, 0);
  for (auto [from, to] : g.transitions_) ++indegree[to - 1];
  std::vector<int> queue;
  for (int v = 0; v < num_states; ++v)
    if (indegree[v] == 0) queue.push_back(v);
  for (size_t head = 0; head < queue.size(); ++head) {
    int v = queue[head];
    g.topo_order_.push_back(v + 1);
    for (int succ : g.successors_[v])
      if (--indegree[succ - 1] == 0) queue.push_back(succ - 1);
  }
  if (static_cast<int>(g.topo_order_.size()) != num_states)
    throw CycleError("transition graph contains a cycle: " + find_cycle(num_states, g.successors_));

  // Reachability closure over the topological order, self included.
  g.reachable_.assign(static_cast<size_t>(num_states) * num_states, false);
  for (auto it = g.topo_order_.rbegin(); it != g.topo_order_.rend(); ++it) {
    int v = *it - 1;
    g.reachable_[v * num_states + v] = true;
    for (int succ : g.successors_[v]) {
      int u = succ - 1;
      for (int w = 0; w < num_states; ++w)
        if (g.reachable_[u * num_states + w]) g.reachable_[v * num_states + w] = true;
    }
  }
  return g;
}

int TransitionGraph::resolve_state(const std::string& token) const {
  for (size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == token) return static_cast<int>(i) + 1;
  int v = 0;
  auto res = std::from_chars(token.data(), token.data() + token.size(), v);
  if (res.ec != std::errc() || res.ptr != token.data() + token.size() || v < 1 || v > num_states_)
    throw InvalidStateError("unknown state '" + token + "'");
  return v;
}

void validate_observation_sequence(const TransitionGraph& graph, const std::vector<int>& states,
                                   const std::string& subject_id) {
  if (states.empty()) throw InvalidStateError("empty observation sequence");
  for (int s : states)
    if (s < 1 || s > graph.num_states())
      throw InvalidStateError("observed state " + std::to_string(s) + " outside 1.." +
                              std::to_string(graph.num_states()));
  for (size_t j = 1; j < states.size(); ++j) {
    if (!graph.reachable(states[j - 1], states[j])) {
      std::string who = subject_id.empty() ? "" : "subject " + subject_id + ": ";
      throw UnreachableObservationError(who + "no directed path from observed state " +
                                        std::to_string(states[j - 1]) + " to " + std::to_string(states[j]));
    }
  }
}

using detail::parse_key_values;
using detail::parse_long;
using detail::split_list_items;
using detail::strip_brackets;
using detail::unquote;

TransitionGraph parse_model_spec(const std::string& text) {
  int num_states = -1;
  std::vector<std::pair<int, int>> transitions;
  std::vector<int> exact;
  std::vector<std::string> labels;
  bool have_transitions = false;

  for (auto& [key, value] : parse_key_values(text)) {
    if (key == "states") {
      num_states = static_cast<int>(parse_long(value, "states"));
    } else if (key == "transitions") {
      have_transitions = true;
      for (const std::string& item : split_list_items(strip_brackets(value, "transitions"), "transitions")) {
        auto pair = split_list_items(strip_brackets(item, "transition entry"), "transition entry");
        if (pair.size() != 2) throw ParseError("transition entry must be [from,to], got '" + item + "'");
        transitions.emplace_back(static_cast<int>(parse_long(pair[0], "transition from")),
                                 static_cast<int>(parse_long(pair[1], "transition to")));
      }
    } else if (key == "exact") {
      for (const std::string& item : split_list_items(strip_brackets(value, "exact"), "exact"))
        exact.push_back(static_cast<int>(parse_long(item, "exact state")));
    } else if (key == "labels") {
      for (const std::string& item : split_list_items(strip_brackets(value, "labels"), "labels"))
        labels.push_back(unquote(item, "label"));
    } else {
      throw ParseError("unknown model spec key '" + key + "'");
    }
  }
  if (num_states < 0) throw ParseError("model spec missing 'states'");
  if (!have_transitions) throw ParseError("model spec missing 'transitions'");
  return build_graph(num_states, transitions, exact, labels);
}

std::string serialize_model_spec(const TransitionGraph& graph) {
  std::ostringstream ss;
  ss << "states = " << graph.num_states() << "\n";
  ss << "transitions = [";
  for (size_t t = 0; t < graph.transitions().size(); ++t) {
    if (t) ss << ",";
    ss << "[" << graph.transitions()[t].first << "," << graph.transitions()[t].second << "]";
  }
  ss << "]\n";
  ss << "exact = [";
  for (size_t i = 0; i < graph.exact_states().size(); ++i) {
    if (i) ss << ",";
    ss << graph.exact_states()[i];
  }
  ss << "]\n";
  if (!graph.labels().empty()) {
    ss << "labels = [";
    for (size_t i = 0; i < graph.labels().size(); ++i) {
      if (i) ss << ",";
      ss << '"' << graph.labels()[i] << '"';
    }
    ss << "]\n";
  }
  return ss.str();
}

TransitionGraph read_model_spec(const std::string& path) {
  try {
    return parse_model_spec(detail::read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_model_spec(const TransitionGraph& graph, const std::string& path) {
  detail::write_text_file(path, serialize_model_spec(graph));
}

}  // namespace pmsm
