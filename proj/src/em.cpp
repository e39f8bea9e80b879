#include "panelmsm/em.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <sstream>
#include <thread>

#include "em_internal.hpp"
#include "text_util.hpp"

namespace pmsm {

namespace detail {

namespace {

constexpr int kChunkSize = 64;

int resolve_threads(int requested) {
  if (requested > 0) return requested;
  unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Expected counts of one subject, emitted into a chunk-local accumulator.
void accumulate_subject(const BinCoeffTable& table, const SubjectRecord& subject, const BinGrid& grid,
                        const TransitionGraph& graph, const EStepInternalOptions& opt,
                        const std::vector<double>& poisson_exp_factor, EStepData& acc,
                        ExpectedCounts::PerSubject* per_subject) {
  const IntensityEstimate& estimate = table.estimate();
  const int K = grid.num_bins();
  const int H = graph.num_states();

  for (const ObservationInterval& iv : subject_intervals(subject, grid, graph)) {
    IntervalCache cache(table, iv, subject.id);
    acc.loglik += std::log(cache.denominator());

    for (int k = iv.k_l + 1; k <= iv.k_r; ++k) {
      acc.at_risk[k - 1] += 1.0;
      for (int g = 1; g <= H; ++g) {
        const auto& succ = graph.successors(g);
        const double y = cache.occupancy(k, g);
        if (y != 0.0) {
          acc.y[static_cast<size_t>(g - 1) * K + k - 1] += y;
          if (per_subject) per_subject->y[static_cast<size_t>(g - 1) * K + k - 1] += y;
        }
        // occupancy can round to 1 + 1ulp; its complement is a probability
        const double away = y < 1.0 ? 1.0 - y : 0.0;
        for (int h : succ) {
          const int t = graph.transition_index(g, h);
          const size_t cell = static_cast<size_t>(t) * K + k - 1;
          const double weight = cache.transition_weight(k, g, h);  // d / alpha
          const double dval = weight * estimate.at(t, k);
          if (dval != 0.0) {
            acc.d[cell] += dval;
            if (per_subject) per_subject->d[cell] += dval;
          }
          if (opt.poisson) acc.w_ratio[cell] += away + weight * poisson_exp_factor[cell];
        }
      }
    }
  }
}

void merge_into(EStepData& total, const EStepData& part) {
  for (size_t i = 0; i < total.d.size(); ++i) total.d[i] += part.d[i];
  for (size_t i = 0; i < total.y.size(); ++i) total.y[i] += part.y[i];
  for (size_t i = 0; i < total.w_ratio.size(); ++i) total.w_ratio[i] += part.w_ratio[i];
  for (size_t i = 0; i < total.at_risk.size(); ++i) total.at_risk[i] += part.at_risk[i];
  total.loglik += part.loglik;
}

}  // namespace

EStepData run_estep_engine(const IntensityEstimate& estimate, const PanelDataset& dataset, const BinGrid& grid,
                           const TransitionGraph& graph, const EStepInternalOptions& opt) {
  const int K = grid.num_bins();
  const int T = graph.num_transitions();
  const int H = graph.num_states();
  const int n = dataset.num_subjects();

  // Poisson second-term factor exp(-(row_sum - alpha_gh)) per transition/bin.
  std::vector<double> poisson_exp_factor;
  if (opt.poisson) {
    poisson_exp_factor.resize(static_cast<size_t>(T) * K);
    for (int t = 0; t < T; ++t) {
      int from = graph.transitions()[t].first;
      for (int k = 1; k <= K; ++k)
        poisson_exp_factor[static_cast<size_t>(t) * K + k - 1] =
            std::exp(estimate.at(t, k) - estimate.row_sum(from, k));
    }
  }

  auto make_empty = [&]() {
    EStepData data;
    data.d.assign(static_cast<size_t>(T) * K, 0.0);
    data.y.assign(static_cast<size_t>(H) * K, 0.0);
    if (opt.poisson) data.w_ratio.assign(static_cast<size_t>(T) * K, 0.0);
    data.at_risk.assign(K, 0.0);
    return data;
  };

  EStepData total = make_empty();
  if (opt.keep_per_subject) {
    total.per_subject.assign(n, ExpectedCounts::PerSubject{std::vector<double>(static_cast<size_t>(T) * K, 0.0),
                                                           std::vector<double>(static_cast<size_t>(H) * K, 0.0)});
  }

  const BinCoeffTable table(estimate, opt.clamp_infeasible);
  const int num_chunks = (n + kChunkSize - 1) / kChunkSize;
  const int threads = std::min(resolve_threads(opt.threads), std::max(num_chunks, 1));

  if (threads <= 1 || num_chunks <= 1) {
    for (int i = 0; i < n; ++i)
      accumulate_subject(table, dataset.subjects[i], grid, graph, opt, poisson_exp_factor, total,
                         opt.keep_per_subject ? &total.per_subject[i] : nullptr);
    return total;
  }

  // Chunk partials are merged in chunk order so results are identical for
  // any thread count.
  std::vector<EStepData> partials(num_chunks);
  std::vector<std::exception_ptr> failures(num_chunks);
  std::atomic<int> next_chunk{0};
  auto worker = [&]() {
    while (true) {
      int c = next_chunk.fetch_add(1);
      if (c >= num_chunks) return;
      partials[c] = make_empty();
      try {
        int begin = c * kChunkSize;
        int end = std::min(n, begin + kChunkSize);
        for (int i = begin; i < end; ++i)
          accumulate_subject(table, dataset.subjects[i], grid, graph, opt, poisson_exp_factor, partials[c],
                             opt.keep_per_subject ? &total.per_subject[i] : nullptr);
      } catch (...) {
        failures[c] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(threads);
  for (int w = 0; w < threads; ++w) pool.emplace_back(worker);
  for (std::thread& th : pool) th.join();
  for (int c = 0; c < num_chunks; ++c)
    if (failures[c]) std::rethrow_exception(failures[c]);
  for (int c = 0; c < num_chunks; ++c) merge_into(total, partials[c]);
  return total;
}

ExpectedCounts to_expected_counts(EStepData&& data, std::shared_ptr<const TransitionGraph> graph,
                                  std::shared_ptr<const BinGrid> grid) {
  ExpectedCounts counts;
  counts.graph = std::move(graph);
  counts.grid = std::move(grid);
  counts.d = std::move(data.d);
  counts.y = std::move(data.y);
  counts.at_risk = std::move(data.at_risk);
  counts.loglik = data.loglik;
  counts.per_subject = std::move(data.per_subject);
  return counts;
}

void enforce_row_budget(std::vector<double*>& row) {
  while (true) {
    double sum = 0.0;
    for (double* v : row) sum += *v;
    if (sum <= 1.0) return;
    double* largest = row.front();
    for (double* v : row)
      if (*v > *largest) largest = v;
    *largest = std::nextafter(*largest, 0.0);
  }
}

IntensityEstimate validated_initial(const EMConfig& config, std::shared_ptr<const TransitionGraph> graph,
                                    std::shared_ptr<const BinGrid> grid) {
  if (!config.initial) return make_uniform_initial(graph, grid);
  const IntensityEstimate& init = *config.initial;
  if (init.graph().num_states() != graph->num_states() || init.num_transitions() != graph->num_transitions() ||
      init.num_bins() != grid->num_bins())
    throw ConfigError("initial estimate does not match the model/grid shape");
  for (int t = 0; t < init.num_transitions(); ++t)
    for (int k = 1; k <= init.num_bins(); ++k)
      if (!(init.at(t, k) > 0.0) || init.at(t, k) > 1.0)
        throw ConfigError("initial estimate must be strictly positive on allowed transitions and at most 1");
  for (int g = 1; g <= graph->num_states(); ++g)
    for (int k = 1; k <= grid->num_bins(); ++k)
      if (init.row_sum(g, k) > 1.0)
        throw ConfigError("initial estimate leaves state " + std::to_string(g) + " with probability above 1 in bin " +
                          std::to_string(k));
  IntensityEstimate out(graph, grid);
  out.values() = init.values();
  return out;
}

}  // namespace detail

ExpectedCounts estep(const IntensityEstimate& estimate, const PanelDataset& dataset, const BinGrid& grid,
                     const TransitionGraph& graph, const EStepOptions& options) {
  detail::EStepInternalOptions opt;
  opt.threads = options.threads;
  opt.clamp_infeasible = options.clamp_infeasible;
  opt.keep_per_subject = options.keep_per_subject;
  auto data = detail::run_estep_engine(estimate, dataset, grid, graph, opt);
  return detail::to_expected_counts(std::move(data), estimate.graph_ptr(), estimate.grid_ptr());
}

IntensityEstimate mstep(const ExpectedCounts& counts) {
  const TransitionGraph& graph = *counts.graph;
  const int K = counts.num_bins();
  IntensityEstimate out(counts.graph, counts.grid);

  std::vector<double*> row;
  for (int g = 1; g <= graph.num_states(); ++g) {
    const auto& succ = graph.successors(g);
    if (succ.empty()) continue;
    for (int k = 1; k <= K; ++k) {
      double sum_d = 0.0;
      for (int h : succ) sum_d += counts.d_at(graph.transition_index(g, h), k);
      const double y = counts.y_at(g, k);
      const double mu = std::max(0.0, sum_d - y);
      const double denom = mu > 0.0 ? sum_d : y;
      row.clear();
      for (int h : succ) {
        const int t = graph.transition_index(g, h);
        const double d = counts.d_at(t, k);
        out.at(t, k) = d == 0.0 ? 0.0 : d / denom;  // 0/0 := 0
        row.push_back(&out.at(t, k));
      }
      detail::enforce_row_budget(row);
    }
  }
  return out;
}

double observed_loglik(const IntensityEstimate& estimate, const PanelDataset& dataset, const BinGrid& grid,
                       const TransitionGraph& graph, bool clamp_infeasible) {
  double total = 0.0;
  const int H = graph.num_states();
  std::vector<double> f(H), next(H);
  for (const SubjectRecord& subject : dataset.subjects) {
    for (const ObservationInterval& iv : subject_intervals(subject, grid, graph)) {
      // Forward row of P(l, .) from e_a; exact arrivals stop at tau_{k_r-1}
      // and close with the predecessor-weighted arrival term.
      std::fill(f.begin(), f.end(), 0.0);
      f[iv.a - 1] = 1.0;
      const int last_bin = iv.exact_arrival ? iv.k_r - 1 : iv.k_r;
      for (int k = iv.k_l + 1; k <= last_bin; ++k) {
        Matrix m = clamp_infeasible ? bin_matrix_clamped(estimate, k) : bin_matrix(estimate, k);
        std::fill(next.begin(), next.end(), 0.0);
        for (int g = 0; g < H; ++g) {
          if (f[g] == 0.0) continue;
          for (int h = 0; h < H; ++h) next[h] += f[g] * m.at(g, h);
        }
        std::swap(f, next);
      }
      double term = 0.0;
      if (iv.exact_arrival) {
        for (int m : graph.predecessors(iv.b))
          term += f[m - 1] * estimate.value(m, iv.b, iv.k_r);
      } else {
        term = f[iv.b - 1];
      }
      if (!(term > 0.0))
        throw NonFiniteLoglikError("subject " + subject.id + ": interval (" + detail::format_double(iv.l) + ", " +
                                   detail::format_double(iv.r) + "] has probability " + detail::format_double(term) +
                                   " under the estimate");
      total += std::log(term);
    }
  }
  return total;
}

ReducedGradient reduced_gradient(const IntensityEstimate& estimate, const ExpectedCounts& counts) {
  const TransitionGraph& graph = *counts.graph;
  const int K = counts.num_bins();
  ReducedGradient grad;
  grad.values.assign(static_cast<size_t>(graph.num_transitions()) * K, 0.0);
  grad.max_value = -std::numeric_limits<double>::infinity();
  bool any = false;

  for (int g = 1; g <= graph.num_states(); ++g) {
    const auto& succ = graph.successors(g);
    if (succ.empty()) continue;
    for (int k = 1; k <= K; ++k) {
      double sum_d = 0.0;
      for (int h : succ) sum_d += counts.d_at(graph.transition_index(g, h), k);
      const double y = counts.y_at(g, k);
      const double mu = std::max(0.0, sum_d - y);
      for (int h : succ) {
        const int t = graph.transition_index(g, h);
        const double a = estimate.at(t, k);
        const double d = counts.d_at(t, k);
        double value = 0.0;
        if (a == 0.0 && d == 0.0) {
          value = 0.0;  // boundary optimum, 0/0 := 0
        } else {
          value = y - d / a + mu;
        }
        grad.values[static_cast<size_t>(t) * K + k - 1] = value;
        grad.max_value = std::max(grad.max_value, value);
        grad.max_abs = std::max(grad.max_abs, std::abs(value));
        any = true;
      }
    }
  }
  if (!any) grad.max_value = 0.0;
  return grad;
}

bool is_local_max(const IntensityEstimate& estimate, const ExpectedCounts& counts, double tolerance) {
  // Two-sided: a negative entry means the objective improves by raising that
  // intensity, so the point is not a maximum either.
  return reduced_gradient(estimate, counts).max_abs <= tolerance;
}

const char* to_string(StopReason reason) {
  switch (reason) {
    case StopReason::intensity_tol: return "intensity_tol";
    case StopReason::loglik_tol: return "loglik_tol";
    case StopReason::kkt: return "kkt";
    case StopReason::max_iter: return "max_iter";
  }
  return "unknown";
}

const char* to_string(StopCriterion criterion) {
  switch (criterion) {
    case StopCriterion::max_intensity_change: return "intensity";
    case StopCriterion::loglik_change: return "loglik";
    case StopCriterion::reduced_gradient: return "kkt";
  }
  return "unknown";
}

std::vector<double> FitResult::loglik_trace() const {
  std::vector<double> out;
  out.reserve(trace.size());
  for (const TraceRow& row : trace) out.push_back(row.loglik);
  return out;
}

IntensityEstimate make_uniform_initial(std::shared_ptr<const TransitionGraph> graph,
                                       std::shared_ptr<const BinGrid> grid) {
  double v = 1.0 / grid->num_bins();
  return IntensityEstimate(std::move(graph), std::move(grid), v);
}

IntensityEstimate make_front_loaded_initial(std::shared_ptr<const TransitionGraph> graph,
                                            std::shared_ptr<const BinGrid> grid) {
  const int K = grid->num_bins();
  const int head = K / 10;
  if (head < 1) throw ConfigError("front-loaded initial estimate needs at least 10 bins");
  IntensityEstimate out(std::move(graph), std::move(grid));
  const double head_value = 0.9 / head;
  const double tail_value = 0.1 / (K - head);
  for (int t = 0; t < out.num_transitions(); ++t)
    for (int k = 1; k <= K; ++k) out.at(t, k) = k <= head ? head_value : tail_value;
  return out;
}

namespace {

struct MultinomialStepper {
  const PanelDataset& dataset;
  const BinGrid& grid;
  const TransitionGraph& graph;
  const IntensityEstimate* shape;
  int threads;
  ExpectedCounts latest;

  const ExpectedCounts& estep_at(const IntensityEstimate& estimate) {
    detail::EStepInternalOptions opt;
    opt.threads = threads;
    auto data = detail::run_estep_engine(estimate, dataset, grid, graph, opt);
    latest = detail::to_expected_counts(std::move(data), estimate.graph_ptr(), estimate.grid_ptr());
    return latest;
  }
  const ExpectedCounts& estep(const IntensityEstimate& estimate) { return estep_at(estimate); }
  IntensityEstimate mstep(const ExpectedCounts& counts) { return pmsm::mstep(counts); }
};

}  // namespace

FitResult run_em(const PanelDataset& dataset, const TransitionGraph& graph, const EMConfig& config) {
  auto graph_ptr = std::make_shared<const TransitionGraph>(graph);
  auto grid_ptr = std::make_shared<const BinGrid>(build_bin_grid(dataset));
  MultinomialStepper stepper{dataset, *grid_ptr, *graph_ptr, nullptr, config.threads, {}};
  return detail::run_em_loop(stepper, config, graph_ptr, grid_ptr, "multinomial");
}

std::string serialize_trace_csv(const FitResult& result) {
  std::ostringstream ss;
  ss << "iteration,loglik,max_delta,max_reduced_gradient\n";
  for (const TraceRow& row : result.trace)
    ss << row.iteration << "," << detail::format_double(row.loglik) << "," << detail::format_double(row.max_delta)
       << "," << detail::format_double(row.max_reduced_gradient) << "\n";
  return ss.str();
}

std::string serialize_gradient_csv(const FitResult& result) {
  std::ostringstream ss;
  ss << "from,to,bin,tau,reduced_gradient\n";
  const TransitionGraph& graph = result.estimate.graph();
  const BinGrid& grid = result.estimate.grid();
  const int K = grid.num_bins();
  for (int t = 0; t < graph.num_transitions(); ++t)
    for (int k = 1; k <= K; ++k)
      ss << graph.transitions()[t].first << "," << graph.transitions()[t].second << "," << k << ","
         << detail::format_double(grid.tau(k)) << ","
         << detail::format_double(result.final_reduced_gradient[static_cast<size_t>(t) * K + k - 1]) << "\n";
  return ss.str();
}

}  // namespace pmsm
