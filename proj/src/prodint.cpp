#include "panelmsm/prodint.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "text_util.hpp"

namespace pmsm {

namespace {
constexpr double kRowSumSlack = 1e-12;
constexpr double kRenormFloor = 1e-250;
}  // namespace

Matrix Matrix::identity(int n) {
  Matrix m(n);
  for (int i = 0; i < n; ++i) m.at(i, i) = 1.0;
  return m;
}

Matrix multiply(const Matrix& lhs, const Matrix& rhs) {
  Matrix out(lhs.n);
  for (int i = 0; i < lhs.n; ++i)
    for (int k = 0; k < lhs.n; ++k) {
      double v = lhs.at(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < lhs.n; ++j) out.at(i, j) += v * rhs.at(k, j);
    }
  return out;
}

IntensityEstimate::IntensityEstimate(std::shared_ptr<const TransitionGraph> graph,
                                     std::shared_ptr<const BinGrid> grid, double initial_value)
    : graph_(std::move(graph)), grid_(std::move(grid)) {
  alpha_.assign(static_cast<size_t>(graph_->num_transitions()) * grid_->num_bins(), initial_value);
}

double IntensityEstimate::value(int from, int to, int bin) const {
  int t = graph_->transition_index(from, to);
  return t < 0 ? 0.0 : at(t, bin);
}

double IntensityEstimate::row_sum(int from, int bin) const {
  double s = 0.0;
  for (int to : graph_->successors(from)) s += at(graph_->transition_index(from, to), bin);
  return s;
}

double IntensityEstimate::max_infeasibility() const {
  double worst = 0.0;
  for (int g = 1; g <= graph_->num_states(); ++g) {
    if (graph_->successors(g).empty()) continue;
    for (int k = 1; k <= grid_->num_bins(); ++k) worst = std::max(worst, row_sum(g, k) - 1.0);
  }
  return worst;
}

namespace {

Matrix make_bin_matrix(const IntensityEstimate& estimate, int bin, bool clamp, int* clamped) {
  const TransitionGraph& graph = estimate.graph();
  int H = graph.num_states();
  Matrix m(H);
  for (int g = 1; g <= H; ++g) {
    double s = 0.0;
    for (int h : graph.successors(g)) {
      double a = estimate.value(g, h, bin);
      if (a < 0.0)
        throw InfeasibleEstimateError("negative intensity for transition " + std::to_string(g) + "->" +
                                      std::to_string(h) + " in bin " + std::to_string(bin));
      m.at(g - 1, h - 1) = a;
      s += a;
    }
    if (s > 1.0 + kRowSumSlack) {
      if (!clamp)
        throw InfeasibleEstimateError("intensities out of state " + std::to_string(g) + " sum to " +
                                      detail::format_double(s) + " > 1 in bin " + std::to_string(bin));
      if (clamped) ++*clamped;
    }
    m.at(g - 1, g - 1) = std::max(0.0, 1.0 - s);
  }
  return m;
}

}  // namespace

Matrix bin_matrix(const IntensityEstimate& estimate, int bin) { return make_bin_matrix(estimate, bin, false, nullptr); }

Matrix bin_matrix_clamped(const IntensityEstimate& estimate, int bin, int* clamped) {
  return make_bin_matrix(estimate, bin, true, clamped);
}

Matrix transition_matrix(const IntensityEstimate& estimate, double s, double t) {
  if (!(0.0 <= s) || !(s <= t))
    throw InvalidSpecError("transition_matrix requires 0 <= s <= t, got s=" + detail::format_double(s) +
                           ", t=" + detail::format_double(t));
  const BinGrid& grid = estimate.grid();
  Matrix p = Matrix::identity(estimate.graph().num_states());
  int first = grid.first_bin_after(s);
  int last = grid.last_bin_at_or_before(t);
  for (int k = first; k <= last; ++k) p = multiply(p, bin_matrix(estimate, k));
  return p;
}

// -- IntervalCache ------------------------------------------------------------

BinCoeffTable::BinCoeffTable(const IntensityEstimate& estimate, bool clamp_infeasible)
    : estimate_(&estimate),
      num_states_(estimate.graph().num_states()),
      num_transitions_(estimate.graph().num_transitions()) {
  const TransitionGraph& graph = estimate.graph();
  const int K = estimate.num_bins();
  diag_.assign(static_cast<size_t>(K) * num_states_, 1.0);
  alpha_.resize(static_cast<size_t>(K) * num_transitions_);
  for (int k = 1; k <= K; ++k) {
    for (int t = 0; t < num_transitions_; ++t) {
      double a = estimate.at(t, k);
      if (a < 0.0) throw InfeasibleEstimateError("negative intensity in bin " + std::to_string(k));
      alpha_[static_cast<size_t>(k - 1) * num_transitions_ + t] = a;
    }
    for (int g = 1; g <= num_states_; ++g) {
      if (graph.successors(g).empty()) continue;
      double s = estimate.row_sum(g, k);
      if (s > 1.0 + kRowSumSlack && !clamp_infeasible)
        throw InfeasibleEstimateError("intensities out of state " + std::to_string(g) + " sum to " +
                                      detail::format_double(s) + " > 1 in bin " + std::to_string(k));
      diag_[static_cast<size_t>(k - 1) * num_states_ + g - 1] = std::max(0.0, 1.0 - s);
    }
  }
}

IntervalCache::IntervalCache(const IntensityEstimate& estimate, const ObservationInterval& interval,
                             const std::string& subject_id, bool clamp_infeasible)
    : interval_(interval) {
  BinCoeffTable table(estimate, clamp_infeasible);
  build(table, subject_id);
}

IntervalCache::IntervalCache(const BinCoeffTable& table, const ObservationInterval& interval,
                             const std::string& subject_id)
    : interval_(interval) {
  build(table, subject_id);
}

void IntervalCache::build(const BinCoeffTable& table, const std::string& subject_id) {
  const TransitionGraph& graph = table.graph();
  num_states_ = graph.num_states();
  const int H = num_states_;
  const int k_l = interval_.k_l;
  const int k_r = interval_.k_r;
  const int n_fwd = k_r - k_l + 1;
  // Backward chain ends at r for interval censoring, at tau_{k_r-1} for exact
  // arrivals (the arrival transition itself is handled in transition_weight).
  const int n_bwd = interval_.exact_arrival ? n_fwd - 1 : n_fwd;
  const auto& transitions = graph.transitions();
  const int T = graph.num_transitions();

  fwd_.assign(static_cast<size_t>(n_fwd) * H, 0.0);
  fwd_scale_.assign(n_fwd, 0);
  bwd_.assign(static_cast<size_t>(n_bwd) * H, 0.0);
  bwd_scale_.assign(n_bwd, 0);

  auto renormalize = [H](double* row, int& scale) {
    double s = 0.0;
    for (int g = 0; g < H; ++g) s += row[g];
    if (s > 0.0 && s < kRenormFloor) {
      int exp = 0;
      std::frexp(s, &exp);
      for (int g = 0; g < H; ++g) row[g] = std::ldexp(row[g], -exp);
      scale += exp;
    }
  };

  fwd_[interval_.a - 1] = 1.0;
  for (int j = 1; j < n_fwd; ++j) {
    const int bin = k_l + j;
    const double* prev = fwd_.data() + static_cast<size_t>(j - 1) * H;
    double* cur = fwd_.data() + static_cast<size_t>(j) * H;
    for (int g = 0; g < H; ++g) cur[g] = prev[g] * table.diag(bin, g + 1);
    for (int t = 0; t < T; ++t) cur[transitions[t].second - 1] += prev[transitions[t].first - 1] * table.alpha(bin, t);
    fwd_scale_[j] = fwd_scale_[j - 1];
    renormalize(cur, fwd_scale_[j]);
  }

  double* terminal = bwd_.data() + static_cast<size_t>(n_bwd - 1) * H;
  if (interval_.exact_arrival) {
    for (int m : graph.predecessors(interval_.b))
      terminal[m - 1] = table.alpha(k_r, graph.transition_index(m, interval_.b));
  } else {
    terminal[interval_.b - 1] = 1.0;
  }
  for (int j = n_bwd - 2; j >= 0; --j) {
    const int bin = k_l + j + 1;
    const double* next = bwd_.data() + static_cast<size_t>(j + 1) * H;
    double* cur = bwd_.data() + static_cast<size_t>(j) * H;
    for (int g = 0; g < H; ++g) cur[g] = table.diag(bin, g + 1) * next[g];
    for (int t = 0; t < T; ++t) cur[transitions[t].first - 1] += table.alpha(bin, t) * next[transitions[t].second - 1];
    bwd_scale_[j] = bwd_scale_[j + 1];
    renormalize(cur, bwd_scale_[j]);
  }

  double dot = 0.0;
  for (int g = 0; g < H; ++g) dot += fwd_[g] * bwd_[g];
  denominator_mantissa_ = dot;
  denominator_scale_ = fwd_scale_[0] + bwd_scale_[0];
  denominator_ = std::ldexp(denominator_mantissa_, denominator_scale_);
  if (!(denominator_ >= kDenominatorFloor)) {
    std::string who = subject_id.empty() ? "interval" : "subject " + subject_id + ", interval";
    throw ZeroDenominatorError(who + " (" + detail::format_double(interval_.l) + ", " +
                               detail::format_double(interval_.r) + "] from state " + std::to_string(interval_.a) +
                               " to " + std::to_string(interval_.b) +
                               " has probability below the floor under the current estimate");
  }
}

double IntervalCache::forward(int k, int g) const {
  return std::ldexp(fwd_row(k)[g - 1], fwd_scale_[k - interval_.k_l]);
}

double IntervalCache::backward(int k, int g) const {
  return std::ldexp(bwd_row(k)[g - 1], bwd_scale_[k - interval_.k_l]);
}

double IntervalCache::fb_dot(int k) const {
  const double* f = fwd_row(k);
  const double* b = bwd_row(k);
  double dot = 0.0;
  for (int g = 0; g < num_states_; ++g) dot += f[g] * b[g];
  return std::ldexp(dot, fwd_scale_[k - interval_.k_l] + bwd_scale_[k - interval_.k_l]);
}

double IntervalCache::occupancy(int k, int g) const {
  const double* f = fwd_row(k - 1);
  const double* b = bwd_row(k - 1);
  double num = f[g - 1] * b[g - 1];
  if (num == 0.0) return 0.0;
  int scale = fwd_scale_[k - 1 - interval_.k_l] + bwd_scale_[k - 1 - interval_.k_l] - denominator_scale_;
  return std::ldexp(num, scale) / denominator_mantissa_;
}

double IntervalCache::transition_weight(int k, int g, int h) const {
  const double* f = fwd_row(k - 1);
  if (interval_.exact_arrival && k == interval_.k_r) {
    // Arrival bin: the transition at tau_{k_r} is into b with certainty.
    if (h != interval_.b) return 0.0;
    double num = f[g - 1];
    if (num == 0.0) return 0.0;
    return std::ldexp(num, fwd_scale_[k - 1 - interval_.k_l] - denominator_scale_) / denominator_mantissa_;
  }
  const double* b = bwd_row(k);
  double num = f[g - 1] * b[h - 1];
  if (num == 0.0) return 0.0;
  int scale = fwd_scale_[k - 1 - interval_.k_l] + bwd_scale_[k - interval_.k_l] - denominator_scale_;
  return std::ldexp(num, scale) / denominator_mantissa_;
}

// -- text formats --------------------------------------------------------------

std::string serialize_estimate_csv(const IntensityEstimate& estimate) {
  std::ostringstream ss;
  ss << "from,to,bin,tau,alpha\n";
  const TransitionGraph& graph = estimate.graph();
  const BinGrid& grid = estimate.grid();
  for (int t = 0; t < graph.num_transitions(); ++t)
    for (int k = 1; k <= grid.num_bins(); ++k)
      ss << graph.transitions()[t].first << "," << graph.transitions()[t].second << "," << k << ","
         << detail::format_double(grid.tau(k)) << "," << detail::format_double(estimate.at(t, k)) << "\n";
  return ss.str();
}

IntensityEstimate parse_estimate_csv(const std::string& text, std::shared_ptr<const TransitionGraph> graph) {
  auto lines = detail::split(text, '\n');
  if (lines.empty() || detail::trim(lines[0]) != "from,to,bin,tau,alpha")
    throw ParseError("estimate file must start with header 'from,to,bin,tau,alpha'");

  struct Row {
    int t;
    int bin;
    double tau;
    double alpha;
  };
  std::vector<Row> rows;
  std::map<int, double> tau_of_bin;
  for (size_t i = 1; i < lines.size(); ++i) {
    std::string_view line = detail::trim(lines[i]);
    if (line.empty()) continue;
    auto f = detail::split(line, ',');
    if (f.size() != 5) throw ParseError("estimate line " + std::to_string(i + 1) + ": expected 5 fields");
    std::string where = "estimate line " + std::to_string(i + 1);
    int from = static_cast<int>(detail::parse_long(detail::trim(f[0]), where));
    int to = static_cast<int>(detail::parse_long(detail::trim(f[1]), where));
    int bin = static_cast<int>(detail::parse_long(detail::trim(f[2]), where));
    double tau = detail::parse_double(detail::trim(f[3]), where);
    double alpha = detail::parse_double(detail::trim(f[4]), where);
    int t = graph->transition_index(from, to);
    if (t < 0)
      throw ParseError(where + ": transition " + std::to_string(from) + "->" + std::to_string(to) +
                       " not allowed by the model");
    auto [it, inserted] = tau_of_bin.try_emplace(bin, tau);
    if (!inserted && it->second != tau) throw ParseError(where + ": conflicting tau for bin " + std::to_string(bin));
    rows.push_back({t, bin, tau, alpha});
  }
  if (tau_of_bin.empty()) throw ParseError("estimate file has no rows");
  int K = tau_of_bin.rbegin()->first;
  if (static_cast<int>(tau_of_bin.size()) != K || tau_of_bin.begin()->first != 1)
    throw ParseError("estimate file bins must cover 1..K");
  std::vector<double> taus;
  for (auto& [bin, tau] : tau_of_bin) taus.push_back(tau);
  auto grid = std::make_shared<BinGrid>(std::move(taus));

  IntensityEstimate estimate(std::move(graph), grid);
  std::vector<bool> seen(estimate.values().size(), false);
  for (const Row& row : rows) {
    size_t c = estimate.cell(row.t, row.bin);
    if (seen[c]) throw ParseError("duplicate estimate row for bin " + std::to_string(row.bin));
    seen[c] = true;
    estimate.at(row.t, row.bin) = row.alpha;
  }
  if (!std::all_of(seen.begin(), seen.end(), [](bool b) { return b; }))
    throw ParseError("estimate file is missing transition/bin rows");
  return estimate;
}

void write_estimate_csv(const IntensityEstimate& estimate, const std::string& path) {
  detail::write_text_file(path, serialize_estimate_csv(estimate));
}

IntensityEstimate read_estimate_csv(const std::string& path, std::shared_ptr<const TransitionGraph> graph) {
  try {
    return parse_estimate_csv(detail::read_text_file(path), std::move(graph));
  } catch (const ParseError& e) {
    throw ParseError(path + ": " + e.what());
  }
}

std::string serialize_probability_table(const IntensityEstimate& estimate, double s, double t0, double t1,
                                        double step) {
  if (!(0.0 <= s) || !(s <= t0) || !(t0 <= t1))
    throw ConfigError("probability table requires 0 <= s <= t0 <= t1");
  if (t1 > t0 && !(step > 0.0)) throw ConfigError("probability table requires step > 0");

  const TransitionGraph& graph = estimate.graph();
  const BinGrid& grid = estimate.grid();
  int H = graph.num_states();

  std::vector<double> ts;
  if (t1 == t0) {
    ts.push_back(t0);
  } else {
    double slack = step * 1e-9;
    for (double t = t0; t <= t1 + slack; t += step) ts.push_back(std::min(t, t1));
  }

  std::ostringstream ss;
  ss << "from,to,s,t,prob\n";
  Matrix p = transition_matrix(estimate, s, ts.front());
  int next_bin = grid.first_bin_after(ts.front());
  for (double t : ts) {
    int last = grid.last_bin_at_or_before(t);
    for (; next_bin <= last; ++next_bin) p = multiply(p, bin_matrix(estimate, next_bin));
    for (int g = 1; g <= H; ++g)
      for (int h = 1; h <= H; ++h)
        ss << g << "," << h << "," << detail::format_double(s) << "," << detail::format_double(t) << ","
           << detail::format_double(p.at(g - 1, h - 1)) << "\n";
  }
  return ss.str();
}

}  // namespace pmsm
