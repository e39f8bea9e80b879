#include "panelmsm/simulate.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "text_util.hpp"

namespace pmsm {

double cumulative_hazard(const Hazard& hazard, double t) {
  if (const auto* e = std::get_if<ExponentialHazard>(&hazard)) return e->rate * t;
  const auto& w = std::get<WeibullHazard>(hazard);
  return w.rate * std::pow(t, w.shape);
}

double hazard_inverse_increment(const Hazard& hazard, double s, double u) {
  if (const auto* e = std::get_if<ExponentialHazard>(&hazard)) return s + u / e->rate;
  const auto& w = std::get<WeibullHazard>(hazard);
  return std::pow(std::pow(s, w.shape) + u / w.rate, 1.0 / w.shape);
}

void validate_scenario(const ScenarioSpec& spec) {
  if (!(spec.horizon > 0.0)) throw InvalidSpecError("scenario horizon must be positive");
  if (spec.hazards.size() != static_cast<size_t>(spec.graph.num_transitions()))
    throw InvalidSpecError("scenario must give one hazard per allowed transition");
  for (const Hazard& h : spec.hazards) {
    if (const auto* e = std::get_if<ExponentialHazard>(&h)) {
      if (!(e->rate > 0.0)) throw InvalidSpecError("exponential hazard rate must be positive");
    } else {
      const auto& w = std::get<WeibullHazard>(h);
      if (!(w.rate > 0.0) || !(w.shape > 0.0)) throw InvalidSpecError("weibull rate and shape must be positive");
    }
  }
  if (spec.start.size() != static_cast<size_t>(spec.graph.num_states()))
    throw InvalidSpecError("scenario must give one start probability per state");
  double total = 0.0;
  for (double p : spec.start) {
    if (p < 0.0) throw InvalidSpecError("start probabilities must be non-negative");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-9) throw InvalidSpecError("start probabilities must sum to 1");
  if (const auto* u = std::get_if<UniformGapVisits>(&spec.visits)) {
    if (!(u->lo >= 0.0) || !(u->hi > u->lo)) throw InvalidSpecError("uniform_gap visits need 0 <= lo < hi");
  } else {
    const auto& f = std::get<FixedGapJitterVisits>(spec.visits);
    if (!(f.gap > 0.0) || f.jitter < 0.0 || f.jitter >= f.gap / 2.0)
      throw InvalidSpecError("fixed_gap_jitter visits need gap > 0 and 0 <= jitter < gap/2");
  }
}

namespace {

// Engine draws are mapped to doubles by hand so datasets are reproducible
// independent of the standard library's distribution implementations.
double uniform01(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }
double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }
double exponential_draw(std::mt19937_64& rng) { return -std::log(1.0 - uniform01(rng)); }

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

struct Event {
  double time;
  int state;
};

std::vector<Event> sample_trajectory(const ScenarioSpec& spec, int start_state, std::mt19937_64& rng) {
  std::vector<Event> events;
  int state = start_state;
  double now = 0.0;
  while (!spec.graph.is_absorbing(state)) {
    double best_time = std::numeric_limits<double>::infinity();
    int best_state = -1;
    for (int h : spec.graph.successors(state)) {
      const Hazard& hazard = spec.hazards[spec.graph.transition_index(state, h)];
      double cand = hazard_inverse_increment(hazard, now, exponential_draw(rng));
      if (cand < best_time) {
        best_time = cand;
        best_state = h;
      }
    }
    if (!(best_time <= spec.horizon)) break;
    events.push_back(Event{best_time, best_state});
    now = best_time;
    state = best_state;
  }
  return events;
}

std::vector<double> sample_visits(const ScenarioSpec& spec, std::mt19937_64& rng) {
  std::vector<double> visits;
  if (const auto* u = std::get_if<UniformGapVisits>(&spec.visits)) {
    double v = 0.0;
    while (true) {
      double gap = uniform(rng, u->lo, u->hi);
      while (gap == 0.0) gap = uniform(rng, u->lo, u->hi);
      v += gap;
      if (v > spec.horizon) break;
      visits.push_back(v);
    }
  } else {
    const auto& f = std::get<FixedGapJitterVisits>(spec.visits);
    for (int j = 1;; ++j) {
      double v = j * f.gap + uniform(rng, -f.jitter, f.jitter);
      if (v > spec.horizon) break;
      visits.push_back(v);
    }
  }
  return visits;
}

int state_at(const std::vector<Event>& events, int start_state, double t) {
  int state = start_state;
  for (const Event& e : events) {
    if (e.time > t) break;
    state = e.state;
  }
  return state;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t base, int replicate) {
  return splitmix64(base ^ splitmix64(static_cast<std::uint64_t>(replicate) + 1));
}

PanelDataset simulate_panel(const ScenarioSpec& spec, int n_subjects, std::uint64_t seed) {
  validate_scenario(spec);
  if (n_subjects < 1) throw InvalidSpecError("need at least one subject");

  std::mt19937_64 rng(seed);
  std::vector<PanelRow> rows;
  for (int i = 0; i < n_subjects; ++i) {
    std::string id = "s" + std::to_string(i + 1);

    double u = uniform01(rng);
    int start_state = spec.graph.num_states();
    double acc = 0.0;
    for (int g = 1; g <= spec.graph.num_states(); ++g) {
      acc += spec.start[g - 1];
      if (u < acc) {
        start_state = g;
        break;
      }
    }

    std::vector<double> visits = sample_visits(spec, rng);
    std::vector<Event> events = sample_trajectory(spec, start_state, rng);

    std::vector<Observation> obs;
    obs.push_back(Observation{0.0, start_state});
    for (double v : visits) obs.push_back(Observation{v, state_at(events, start_state, v)});
    for (const Event& e : events)
      if (spec.graph.is_exact(e.state)) obs.push_back(Observation{e.time, e.state});

    std::sort(obs.begin(), obs.end(), [](const Observation& a, const Observation& b) { return a.time < b.time; });
    obs.erase(std::unique(obs.begin(), obs.end(),
                          [](const Observation& a, const Observation& b) { return a.time == b.time; }),
              obs.end());

    for (const Observation& o : obs) rows.push_back(PanelRow{id, o.time, o.state});
  }
  return ingest_panel(rows, spec.graph);
}

// -- scenario file ---------------------------------------------------------

ScenarioSpec parse_scenario_spec(const std::string& text) {
  using detail::parse_double;
  using detail::parse_long;
  using detail::split_list_items;
  using detail::strip_brackets;
  using detail::unquote;

  int num_states = -1;
  std::vector<std::pair<int, int>> transitions;
  std::vector<int> exact;
  std::vector<std::string> labels;
  struct HazardRow {
    int from, to;
    Hazard hazard;
  };
  std::vector<HazardRow> hazard_rows;
  std::vector<double> start;
  VisitProcess visits = UniformGapVisits{0.0, 1.0};
  bool have_visits = false, have_horizon = false, have_hazard = false, have_start = false;
  double horizon = 0.0;
  std::uint64_t seed = 1;

  for (auto& [key, value] : detail::parse_key_values(text)) {
    if (key == "states") {
      num_states = static_cast<int>(parse_long(value, "states"));
    } else if (key == "transitions") {
      for (const std::string& item : split_list_items(strip_brackets(value, "transitions"), "transitions")) {
        auto pair = split_list_items(strip_brackets(item, "transition entry"), "transition entry");
        if (pair.size() != 2) throw ParseError("transition entry must be [from,to]");
        transitions.emplace_back(static_cast<int>(parse_long(pair[0], "from")),
                                 static_cast<int>(parse_long(pair[1], "to")));
      }
    } else if (key == "exact") {
      for (const std::string& item : split_list_items(strip_brackets(value, "exact"), "exact"))
        exact.push_back(static_cast<int>(parse_long(item, "exact state")));
    } else if (key == "labels") {
      for (const std::string& item : split_list_items(strip_brackets(value, "labels"), "labels"))
        labels.push_back(unquote(item, "label"));
    } else if (key == "hazard") {
      have_hazard = true;
      for (const std::string& item : split_list_items(strip_brackets(value, "hazard"), "hazard")) {
        auto f = split_list_items(strip_brackets(item, "hazard entry"), "hazard entry");
        if (f.size() < 4) throw ParseError("hazard entry must be [from,to,\"kind\",params...]");
        HazardRow row{static_cast<int>(parse_long(f[0], "hazard from")),
                      static_cast<int>(parse_long(f[1], "hazard to")), ExponentialHazard{}};
        std::string kind = unquote(f[2], "hazard kind");
        if (kind == "exp") {
          if (f.size() != 4) throw ParseError("exp hazard takes one rate parameter");
          row.hazard = ExponentialHazard{parse_double(f[3], "hazard rate")};
        } else if (kind == "weibull") {
          if (f.size() != 5) throw ParseError("weibull hazard takes rate and shape");
          row.hazard = WeibullHazard{parse_double(f[3], "weibull rate"), parse_double(f[4], "weibull shape")};
        } else {
          throw ParseError("unknown hazard kind '" + kind + "'");
        }
        hazard_rows.push_back(row);
      }
    } else if (key == "start") {
      have_start = true;
      for (const std::string& item : split_list_items(strip_brackets(value, "start"), "start"))
        start.push_back(parse_double(item, "start probability"));
    } else if (key == "visits") {
      have_visits = true;
      auto f = split_list_items(strip_brackets(value, "visits"), "visits");
      if (f.size() != 3) throw ParseError("visits must be [\"kind\",a,b]");
      std::string kind = unquote(f[0], "visit kind");
      if (kind == "uniform_gap")
        visits = UniformGapVisits{parse_double(f[1], "visit lo"), parse_double(f[2], "visit hi")};
      else if (kind == "fixed_gap_jitter")
        visits = FixedGapJitterVisits{parse_double(f[1], "visit gap"), parse_double(f[2], "visit jitter")};
      else
        throw ParseError("unknown visit process '" + kind + "'");
    } else if (key == "horizon") {
      have_horizon = true;
      horizon = parse_double(value, "horizon");
    } else if (key == "seed") {
      seed = static_cast<std::uint64_t>(parse_long(value, "seed"));
    } else {
      throw ParseError("unknown scenario key '" + key + "'");
    }
  }
  if (num_states < 0 || transitions.empty()) throw ParseError("scenario missing states/transitions");
  if (!have_hazard || !have_start || !have_visits || !have_horizon)
    throw ParseError("scenario missing one of hazard/start/visits/horizon");

  ScenarioSpec spec{build_graph(num_states, transitions, exact, labels), {}, std::move(start), visits, horizon, seed};
  spec.hazards.resize(spec.graph.num_transitions(), ExponentialHazard{0.0});
  std::vector<bool> seen(spec.hazards.size(), false);
  for (const HazardRow& row : hazard_rows) {
    int t = spec.graph.transition_index(row.from, row.to);
    if (t < 0)
      throw ParseError("hazard for transition " + std::to_string(row.from) + "->" + std::to_string(row.to) +
                       " not in the model");
    if (seen[t]) throw ParseError("duplicate hazard for a transition");
    seen[t] = true;
    spec.hazards[t] = row.hazard;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
    throw ParseError("every allowed transition needs a hazard");
  validate_scenario(spec);
  return spec;
}

std::string serialize_scenario_spec(const ScenarioSpec& spec) {
  using detail::format_double;
  std::ostringstream ss;
  ss << serialize_model_spec(spec.graph);
  ss << "hazard = [";
  for (int t = 0; t < spec.graph.num_transitions(); ++t) {
    if (t) ss << ",";
    auto [from, to] = spec.graph.transitions()[t];
    ss << "[" << from << "," << to << ",";
    if (const auto* e = std::get_if<ExponentialHazard>(&spec.hazards[t]))
      ss << "\"exp\"," << format_double(e->rate);
    else {
      const auto& w = std::get<WeibullHazard>(spec.hazards[t]);
      ss << "\"weibull\"," << format_double(w.rate) << "," << format_double(w.shape);
    }
    ss << "]";
  }
  ss << "]\n";
  ss << "start = [";
  for (size_t g = 0; g < spec.start.size(); ++g) {
    if (g) ss << ",";
    ss << format_double(spec.start[g]);
  }
  ss << "]\n";
  if (const auto* u = std::get_if<UniformGapVisits>(&spec.visits))
    ss << "visits = [\"uniform_gap\"," << format_double(u->lo) << "," << format_double(u->hi) << "]\n";
  else {
    const auto& f = std::get<FixedGapJitterVisits>(spec.visits);
    ss << "visits = [\"fixed_gap_jitter\"," << format_double(f.gap) << "," << format_double(f.jitter) << "]\n";
  }
  ss << "horizon = " << format_double(spec.horizon) << "\n";
  ss << "seed = " << spec.seed << "\n";
  return ss.str();
}

ScenarioSpec read_scenario_spec(const std::string& path) {
  try {
    return parse_scenario_spec(detail::read_text_file(path));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

void write_scenario_spec(const ScenarioSpec& spec, const std::string& path) {
  detail::write_text_file(path, serialize_scenario_spec(spec));
}

// -- targets, curves and metrics --------------------------------------------

std::vector<Target> parse_targets(const std::string& text, const TransitionGraph& graph) {
  std::vector<Target> out;
  for (std::string_view raw : detail::split(text, ',')) {
    std::string_view item = detail::trim(raw);
    if (item.empty()) continue;
    double s = 0.0;
    size_t at = item.find('@');
    if (at != std::string_view::npos) {
      s = detail::parse_double(item.substr(at + 1), "target start time");
      item = item.substr(0, at);
    }
    auto parts = detail::split(item, ':');
    std::string kind(parts[0]);
    if (kind == "intensities") {
      if (parts.size() != 1) throw ConfigError("'intensities' takes no arguments");
      for (auto [from, to] : graph.transitions())
        out.push_back(Target{Target::Kind::cumintensity, from, to, 0.0});
    } else if (kind == "probs") {
      if (parts.size() != 2) throw ConfigError("'probs' takes one from-state");
      int from = static_cast<int>(detail::parse_long(parts[1], "probs from"));
      for (int h = 1; h <= graph.num_states(); ++h) out.push_back(Target{Target::Kind::transprob, from, h, s});
    } else if (kind == "cumintensity" || kind == "transprob") {
      if (parts.size() != 3) throw ConfigError("target '" + std::string(item) + "' must be kind:from:to");
      Target t;
      t.kind = kind == "cumintensity" ? Target::Kind::cumintensity : Target::Kind::transprob;
      t.from = static_cast<int>(detail::parse_long(parts[1], "target from"));
      t.to = static_cast<int>(detail::parse_long(parts[2], "target to"));
      t.s = s;
      if (t.kind == Target::Kind::cumintensity && graph.transition_index(t.from, t.to) < 0)
        throw ConfigError("cumintensity target " + std::to_string(t.from) + "->" + std::to_string(t.to) +
                          " is not an allowed transition");
      out.push_back(t);
    } else {
      throw ConfigError("unknown target kind '" + kind + "'");
    }
  }
  if (out.empty()) throw ConfigError("no targets given");
  return out;
}

std::string target_label(const Target& target) {
  if (target.kind == Target::Kind::cumintensity) return "cumintensity";
  return target.s == 0.0 ? "transprob" : "transprob@" + detail::format_double(target.s);
}

std::vector<double> make_time_grid(double t0, double t1, double step) {
  if (!(step > 0.0) || !(t1 >= t0)) throw ConfigError("time grid needs t1 >= t0 and step > 0");
  std::vector<double> ts;
  double slack = step * 1e-9;
  for (double t = t0; t <= t1 + slack; t += step) ts.push_back(std::min(t, t1));
  return ts;
}

CurveSet evaluate_curves(const IntensityEstimate& estimate, const std::vector<Target>& targets,
                         const std::vector<double>& tgrid) {
  const BinGrid& grid = estimate.grid();
  CurveSet out;
  out.values.resize(targets.size());
  for (size_t i = 0; i < targets.size(); ++i) {
    const Target& target = targets[i];
    std::vector<double>& curve = out.values[i];
    curve.reserve(tgrid.size());
    if (target.kind == Target::Kind::cumintensity) {
      int t_idx = estimate.graph().transition_index(target.from, target.to);
      if (t_idx < 0) throw ConfigError("cumintensity target is not an allowed transition");
      double acc = 0.0;
      int k = 1;
      for (double t : tgrid) {
        int last = grid.last_bin_at_or_before(t);
        for (; k <= last; ++k) acc += estimate.at(t_idx, k);
        curve.push_back(acc);
      }
    } else {
      Matrix p = transition_matrix(estimate, target.s, tgrid.empty() ? target.s : std::max(target.s, tgrid.front()));
      int next = grid.first_bin_after(std::max(target.s, tgrid.empty() ? target.s : tgrid.front()));
      for (double t : tgrid) {
        if (t < target.s) {
          curve.push_back(0.0);  // undefined before s; report zero mass
          continue;
        }
        int last = grid.last_bin_at_or_before(t);
        for (; next <= last; ++next) p = multiply(p, bin_matrix(estimate, next));
        curve.push_back(p.at(target.from - 1, target.to - 1));
      }
    }
  }
  return out;
}

namespace {

// One product-integral sweep over [s, tgrid.back()] with substeps of at most
// `step`, recording P(s, t) entries at every grid time.
void oracle_prob_sweep(const ScenarioSpec& spec, double s, const std::vector<double>& tgrid, double step,
                       std::vector<Matrix>& out) {
  const int H = spec.graph.num_states();
  Matrix p = Matrix::identity(H);
  out.clear();
  double prev = s;
  for (double t : tgrid) {
    if (t > prev) {
      int substeps = std::max(1, static_cast<int>(std::ceil((t - prev) / step)));
      double h = (t - prev) / substeps;
      for (int j = 0; j < substeps; ++j) {
        double u0 = prev + j * h;
        double u1 = j + 1 == substeps ? t : u0 + h;
        Matrix inc = Matrix::identity(H);
        for (int tr = 0; tr < spec.graph.num_transitions(); ++tr) {
          auto [from, to] = spec.graph.transitions()[tr];
          double da = cumulative_hazard(spec.hazards[tr], u1) - cumulative_hazard(spec.hazards[tr], u0);
          inc.at(from - 1, to - 1) = da;
          inc.at(from - 1, from - 1) -= da;
        }
        p = multiply(p, inc);
      }
      prev = t;
    }
    out.push_back(p);
  }
}

}  // namespace

CurveSet true_values(const ScenarioSpec& spec, const std::vector<Target>& targets, const std::vector<double>& tgrid) {
  CurveSet out;
  out.values.resize(targets.size());

  // Shared probability sweeps per distinct start time, refined until halving
  // the step moves no entry by more than 1e-6.
  std::vector<double> starts;
  for (const Target& t : targets)
    if (t.kind == Target::Kind::transprob) starts.push_back(t.s);
  std::sort(starts.begin(), starts.end());
  starts.erase(std::unique(starts.begin(), starts.end()), starts.end());

  std::vector<std::vector<Matrix>> probs(starts.size());
  for (size_t si = 0; si < starts.size(); ++si) {
    double step = std::max(spec.horizon, tgrid.empty() ? 1.0 : tgrid.back()) * 1e-3;
    std::vector<Matrix> cur, next;
    oracle_prob_sweep(spec, starts[si], tgrid, step, cur);
    for (int round = 0; round < 12; ++round) {
      step /= 2.0;
      oracle_prob_sweep(spec, starts[si], tgrid, step, next);
      double diff = 0.0;
      for (size_t j = 0; j < cur.size(); ++j)
        for (size_t c = 0; c < cur[j].a.size(); ++c) diff = std::max(diff, std::abs(cur[j].a[c] - next[j].a[c]));
      cur.swap(next);
      if (diff < 1e-6) break;
    }
    probs[si] = std::move(cur);
  }

  for (size_t i = 0; i < targets.size(); ++i) {
    const Target& target = targets[i];
    std::vector<double>& curve = out.values[i];
    curve.reserve(tgrid.size());
    if (target.kind == Target::Kind::cumintensity) {
      const Hazard& hazard = spec.hazards[spec.graph.transition_index(target.from, target.to)];
      for (double t : tgrid) curve.push_back(cumulative_hazard(hazard, t));
    } else {
      size_t si = std::lower_bound(starts.begin(), starts.end(), target.s) - starts.begin();
      for (size_t j = 0; j < tgrid.size(); ++j)
        curve.push_back(tgrid[j] < target.s ? 0.0 : probs[si][j].at(target.from - 1, target.to - 1));
    }
  }
  return out;
}

MetricsSeries score(const std::vector<CurveSet>& replicates, const CurveSet& truth,
                    const std::vector<Target>& targets, const std::vector<double>& tgrid) {
  const size_t n_targets = targets.size();
  const size_t n_times = tgrid.size();
  if (replicates.size() < 2) throw ShapeMismatchError("scoring needs at least 2 replicates");
  if (truth.values.size() != n_targets) throw ShapeMismatchError("truth curves do not match the target list");
  for (const std::vector<double>& c : truth.values)
    if (c.size() != n_times) throw ShapeMismatchError("truth curve length does not match the time grid");
  for (const CurveSet& rep : replicates) {
    if (rep.values.size() != n_targets) throw ShapeMismatchError("replicate curves do not match the target list");
    for (const std::vector<double>& c : rep.values)
      if (c.size() != n_times) throw ShapeMismatchError("replicate curve length does not match the time grid");
  }

  const double N = static_cast<double>(replicates.size());
  MetricsSeries series;
  series.targets = targets;
  series.tgrid = tgrid;
  series.replications = static_cast<int>(replicates.size());
  series.bias.assign(n_targets, std::vector<double>(n_times, 0.0));
  series.variance.assign(n_targets, std::vector<double>(n_times, 0.0));
  series.rmse.assign(n_targets, std::vector<double>(n_times, 0.0));

  for (size_t i = 0; i < n_targets; ++i) {
    for (size_t j = 0; j < n_times; ++j) {
      double mean = 0.0;
      for (const CurveSet& rep : replicates) mean += rep.values[i][j];
      mean /= N;
      double var = 0.0;
      for (const CurveSet& rep : replicates) {
        double dev = rep.values[i][j] - mean;
        var += dev * dev;
      }
      var /= (N - 1.0);
      double bias = mean - truth.values[i][j];
      series.bias[i][j] = bias;
      series.variance[i][j] = var;
      series.rmse[i][j] = std::sqrt(var + bias * bias);
    }
  }
  return series;
}

std::string serialize_metrics_csv(const MetricsSeries& series) {
  using detail::format_double;
  std::ostringstream ss;
  ss << "target,from,to,t,bias,variance,rmse\n";
  for (size_t i = 0; i < series.targets.size(); ++i)
    for (size_t j = 0; j < series.tgrid.size(); ++j)
      ss << target_label(series.targets[i]) << "," << series.targets[i].from << "," << series.targets[i].to << ","
         << format_double(series.tgrid[j]) << "," << format_double(series.bias[i][j]) << ","
         << format_double(series.variance[i][j]) << "," << format_double(series.rmse[i][j]) << "\n";
  return ss.str();
}

}  // namespace pmsm
