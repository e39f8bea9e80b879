#pragma once

#include <cstdint>
#include <variant>

#include "panelmsm/em.hpp"

namespace pmsm {

/// Cumulative transition hazard rate*t.
struct ExponentialHazard {
  double rate = 0.0;
};

/// Cumulative transition hazard rate * t^shape (density
/// f(x) = rate*shape*x^{shape-1} exp(-rate*x^shape)).
struct WeibullHazard {
  double rate = 0.0;
  double shape = 0.0;
};

using Hazard = std::variant<ExponentialHazard, WeibullHazard>;

double cumulative_hazard(const Hazard& hazard, double t);
/// Time t with Lambda(t) - Lambda(s) = u.
double hazard_inverse_increment(const Hazard& hazard, double s, double u);

/// Visit gaps drawn uniformly from [lo, hi], accumulated from 0.
struct UniformGapVisits {
  double lo = 0.0;
  double hi = 0.0;
};

/// Visit j scheduled at j*gap, jittered uniformly by at most +-jitter.
struct FixedGapJitterVisits {
  double gap = 0.0;
  double jitter = 0.0;
};

using VisitProcess = std::variant<UniformGapVisits, FixedGapJitterVisits>;

struct ScenarioSpec {
  TransitionGraph graph;
  std::vector<Hazard> hazards;  // aligned with graph.transitions()
  std::vector<double> start;    // start-state probabilities, one per state
  VisitProcess visits;
  double horizon = 0.0;
  std::uint64_t seed = 1;
};

void validate_scenario(const ScenarioSpec& spec);

/// Scenario file: the model spec keys plus
///   hazard = [[1,2,"exp",0.1],[2,3,"weibull",0.007854,2]]   (rate[, shape])
///   start = [0.5,0.5,0]
///   visits = ["uniform_gap",0,4.4]    or ["fixed_gap_jitter",3,0.1]
///   horizon = 15
///   seed = 1
ScenarioSpec parse_scenario_spec(const std::string& text);
std::string serialize_scenario_spec(const ScenarioSpec& spec);
ScenarioSpec read_scenario_spec(const std::string& path);
void write_scenario_spec(const ScenarioSpec& spec, const std::string& path);

/// Independent replicate stream seed for (base seed, replicate index).
std::uint64_t derive_seed(std::uint64_t base, int replicate);

/// Samples continuous-time Markov trajectories under per-transition
/// cause-specific hazards on study time, discretizes them to visit-process
/// observation times, censors at the horizon, and records arrivals into
/// exact states at their true times. Every subject is observed on its visit
/// schedule until the horizon. Deterministic given the seed.
PanelDataset simulate_panel(const ScenarioSpec& spec, int n_subjects, std::uint64_t seed);

struct Target {
  enum class Kind { cumintensity, transprob };
  Kind kind = Kind::cumintensity;
  int from = 0;
  int to = 0;
  double s = 0.0;  // start time for transition probabilities
};

/// "cumintensity:g:h", "transprob:g:h", "transprob:g:h@s"; "intensities"
/// expands to all allowed transitions, "probs:g[@s]" to all P_gh from g.
std::vector<Target> parse_targets(const std::string& text, const TransitionGraph& graph);
std::string target_label(const Target& target);

/// Curves evaluated on a shared time grid, one row per target.
struct CurveSet {
  std::vector<std::vector<double>> values;  // [target][time]
};

/// Right-continuous step-function evaluation of a fitted estimate.
CurveSet evaluate_curves(const IntensityEstimate& estimate, const std::vector<Target>& targets,
                         const std::vector<double>& tgrid);

/// Oracle curves under the scenario's true hazards: closed-form cumulative
/// intensities and fine-grid product-integral transition probabilities whose
/// step is refined until halving changes nothing beyond 1e-6.
CurveSet true_values(const ScenarioSpec& spec, const std::vector<Target>& targets, const std::vector<double>& tgrid);

struct MetricsSeries {
  std::vector<Target> targets;
  std::vector<double> tgrid;
  int replications = 0;
  std::vector<std::vector<double>> bias;      // [target][time]
  std::vector<std::vector<double>> variance;  // [target][time]
  std::vector<std::vector<double>> rmse;      // [target][time]
};

/// Bias (mean error), variance (N-1 divisor) and rmse = sqrt(var + bias^2)
/// across replicate curve sets against the truth.
MetricsSeries score(const std::vector<CurveSet>& replicates, const CurveSet& truth,
                    const std::vector<Target>& targets, const std::vector<double>& tgrid);

/// Metrics export: "target,from,to,t,bias,variance,rmse".
std::string serialize_metrics_csv(const MetricsSeries& series);

std::vector<double> make_time_grid(double t0, double t1, double step);

}  // namespace pmsm
