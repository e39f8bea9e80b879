#include "panelmsm/panel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "text_util.hpp"

namespace pmsm {

PanelDataset ingest_panel(const std::vector<PanelRow>& rows, const TransitionGraph& graph) {
  PanelDataset ds;
  std::map<std::string, int> index_of;
  for (const PanelRow& row : rows) {
    auto [it, inserted] = index_of.try_emplace(row.id, ds.num_subjects());
    if (inserted) ds.subjects.push_back(SubjectRecord{row.id, {}});
    if (!(row.time >= 0.0) || !std::isfinite(row.time))
      throw InvalidSpecError("subject " + row.id + ": observation time " + detail::format_double(row.time) +
                             " is negative or not finite");
    if (row.state < 1 || row.state > graph.num_states())
      throw InvalidStateError("subject " + row.id + ": state " + std::to_string(row.state) + " outside 1.." +
                              std::to_string(graph.num_states()));
    ds.subjects[it->second].obs.push_back(Observation{row.time, row.state});
  }

  std::vector<std::string> single_ids;
  for (SubjectRecord& subject : ds.subjects) {
    std::stable_sort(subject.obs.begin(), subject.obs.end(),
                     [](const Observation& a, const Observation& b) { return a.time < b.time; });
    for (size_t j = 1; j < subject.obs.size(); ++j) {
      if (subject.obs[j].time == subject.obs[j - 1].time) {
        std::string detail = subject.obs[j].state == subject.obs[j - 1].state ? "identical states" : "conflicting states";
        throw DuplicateTimeError("subject " + subject.id + ": duplicate observation time " +
                                 detail::format_double(subject.obs[j].time) + " (" + detail + ")");
      }
    }
    if (subject.obs.size() < 2) single_ids.push_back(subject.id);
  }
  if (!single_ids.empty()) {
    std::string ids;
    for (const std::string& id : single_ids) ids += (ids.empty() ? "" : ", ") + id;
    throw SingleObservationError("subjects with a single observation: " + ids);
  }

  for (const SubjectRecord& subject : ds.subjects) {
    std::vector<int> states;
    states.reserve(subject.obs.size());
    for (const Observation& o : subject.obs) states.push_back(o.state);
    validate_observation_sequence(graph, states, subject.id);
  }
  return ds;
}

BinGrid::BinGrid(std::vector<double> taus) : taus_(std::move(taus)) {
  double prev = 0.0;
  for (double t : taus_) {
    if (!(t > prev)) throw InvalidSpecError("grid times must be strictly increasing and positive");
    max_gap_ = std::max(max_gap_, t - prev);
    prev = t;
  }
}

int BinGrid::index_of_time(double t) const {
  if (t == 0.0) return 0;
  auto it = std::lower_bound(taus_.begin(), taus_.end(), t);
  if (it == taus_.end() || *it != t)
    throw InvalidSpecError("time " + detail::format_double(t) + " is not a grid time");
  return static_cast<int>(it - taus_.begin()) + 1;
}

int BinGrid::first_bin_after(double s) const {
  return static_cast<int>(std::upper_bound(taus_.begin(), taus_.end(), s) - taus_.begin()) + 1;
}

int BinGrid::last_bin_at_or_before(double t) const {
  return static_cast<int>(std::upper_bound(taus_.begin(), taus_.end(), t) - taus_.begin());
}

BinGrid build_bin_grid(const PanelDataset& dataset) {
  if (dataset.subjects.empty()) throw InvalidSpecError("cannot build a bin grid from an empty dataset");
  std::vector<double> taus;
  for (const SubjectRecord& subject : dataset.subjects)
    for (const Observation& o : subject.obs)
      if (o.time > 0.0) taus.push_back(o.time);
  std::sort(taus.begin(), taus.end());
  taus.erase(std::unique(taus.begin(), taus.end()), taus.end());
  if (taus.empty()) throw InvalidSpecError("dataset has no positive observation times");
  return BinGrid(std::move(taus));
}

SubjectBinContext subject_bin_context(const PanelDataset& dataset, const BinGrid& grid, int subject, int bin) {
  if (subject < 0 || subject >= dataset.num_subjects()) throw InvalidSpecError("subject index out of range");
  if (bin < 1 || bin > grid.num_bins()) throw InvalidSpecError("bin index out of range");
  const auto& obs = dataset.subjects[subject].obs;
  double lo = grid.tau(bin - 1);
  double hi = grid.tau(bin);

  SubjectBinContext ctx;
  const Observation* left = nullptr;
  const Observation* right = nullptr;
  for (const Observation& o : obs) {
    if (o.time <= lo) left = &o;
    if (o.time >= hi) {
      right = &o;
      break;
    }
  }
  if (!left || !right) return ctx;
  ctx.active = true;
  ctx.l = left->time;
  ctx.r = right->time;
  ctx.a = left->state;
  ctx.b = right->state;
  ctx.k_l = grid.index_of_time(ctx.l);
  ctx.k_r = grid.index_of_time(ctx.r);
  return ctx;
}

std::vector<ObservationInterval> subject_intervals(const SubjectRecord& subject, const BinGrid& grid,
                                                   const TransitionGraph& graph) {
  std::vector<ObservationInterval> out;
  for (size_t j = 1; j < subject.obs.size(); ++j) {
    ObservationInterval iv;
    iv.l = subject.obs[j - 1].time;
    iv.r = subject.obs[j].time;
    iv.a = subject.obs[j - 1].state;
    iv.b = subject.obs[j].state;
    iv.k_l = grid.index_of_time(iv.l);
    iv.k_r = grid.index_of_time(iv.r);
    iv.exact_arrival = graph.is_exact(iv.b) && iv.a != iv.b;
    out.push_back(iv);
  }
  return out;
}

PanelDataset parse_panel_csv(const std::string& text, const TransitionGraph& graph) {
  auto lines = detail::split(text, '\n');
  if (lines.empty() || detail::trim(lines[0]) != "id,time,state")
    throw ParseError("panel file must start with header 'id,time,state'");
  std::vector<PanelRow> rows;
  for (size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = detail::trim(lines[i]);
    if (line.empty()) continue;
    auto fields = detail::split(line, ',');
    if (fields.size() != 3)
      throw ParseError("panel line " + std::to_string(i + 1) + ": expected 3 fields, got " +
                       std::to_string(fields.size()));
    PanelRow row;
    row.id = std::string(detail::trim(fields[0]));
    row.time = detail::parse_double(detail::trim(fields[1]), "panel line " + std::to_string(i + 1));
    row.state = graph.resolve_state(std::string(detail::trim(fields[2])));
    rows.push_back(std::move(row));
  }
  return ingest_panel(rows, graph);
}

std::string serialize_panel_csv(const PanelDataset& dataset) {
  std::ostringstream ss;
  ss << "id,time,state\n";
  for (const SubjectRecord& subject : dataset.subjects)
    for (const Observation& o : subject.obs)
      ss << subject.id << "," << detail::format_double(o.time) << "," << o.state << "\n";
  return ss.str();
}

PanelDataset read_panel_csv(const std::string& path, const TransitionGraph& graph) {
  try {
    return parse_panel_csv(detail::read_text_file(path), graph);
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_panel_csv(const PanelDataset& dataset, const std::string& path) {
  detail::write_text_file(path, serialize_panel_csv(dataset));
}

}  // namespace pmsm
