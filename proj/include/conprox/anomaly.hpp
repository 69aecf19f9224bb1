#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "conprox/array.hpp"
#include "conprox/consensus.hpp"
#include "conprox/step_rules.hpp"
#include "conprox/trace.hpp"

namespace conprox {

/// P series sharing one set of coefficient maps:
///   1/2 sum_p ||sum_m d_{m,p} * x_m + e_p - s_p||^2 + lambda P ||x||_1 + beta sum_p ||e_p||_2
/// With `group_per_timestep` the last term becomes beta sum_t ||(e_1[t], ..., e_P[t])||_2.
struct AnomalyProblem {
  std::vector<Dictionary> dicts;  // one per series, all on a 1-D frame of the series length
  SignalSet series;               // P series of length T
  double lambda = 0.1;
  double beta = 1.0;
  bool group_per_timestep = false;

  void validate() const;
  std::size_t series_count() const { return series.count; }
  std::size_t filters() const { return dicts.empty() ? 0 : dicts[0].filters; }
};

struct AnomalySolution {
  CoefficientMaps maps;  // P identical copies of the shared maps
  SignalSet anomalies;   // e_p
  std::vector<double> score;
};

struct AnomalyOptions {
  std::size_t iters = 200;
  StepConfig step{StepRule::bb3};
  InertialConfig inertial;
  double rho0 = 0.0;  // <= 0: 100 lambda + 1
  double relax = 1.8;
  PenaltyPolicy penalty;
  double divergence_factor = 1e3;
  unsigned workers = 1;
  std::vector<double> init;  // warm-start maps (M x T); empty starts from zero
};

struct AnomalyResult {
  AnomalySolution solution;
  ConvergenceTrace trace;
};

struct AnomalyObjective {
  double total = 0.0;
  double fidelity = 0.0;
  double l1 = 0.0;
  double group = 0.0;
};

/// Objective at shared maps `x` (M x T) and anomalies `e`.
AnomalyObjective caddict_objective(const AnomalyProblem& p, std::span<const double> x, const SignalSet& e);

/// Exact minimizer over e for fixed x: group shrinkage of the residuals s_p - D_p x.
SignalSet anomaly_update(const AnomalyProblem& p, const SignalSet& residuals);

/// Alternates one APG-consensus step on x with the exact e update.
AnomalyResult caddict_apg_consensus(const AnomalyProblem& p, const AnomalyOptions& opts);
/// Consensus ADMM on x (per-series Sherman-Morrison local solves) with the e update interleaved.
AnomalyResult caddict_admm_consensus(const AnomalyProblem& p, const AnomalyOptions& opts);

/// score[t] = sqrt(sum_p e_p[t]^2)
std::vector<double> anomaly_score(const SignalSet& anomalies);

/// mean + k standard deviations of the scores.
double score_threshold(std::span<const double> score, double k = 3.0);

/// Joint training of per-series dictionaries with shared maps (e = 0): alternates a few APG-consensus
/// steps on the maps with one APG dictionary step per series. Filters are aligned across series
/// because every series is explained by the same maps.
struct SeriesDictConfig {
  std::size_t filters = 8;
  std::size_t length = 32;
  double lambda = 0.05;
  std::size_t iters = 200;
  std::size_t coef_inner = 5;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

std::vector<Dictionary> train_series_dictionaries(const SignalSet& series, const SeriesDictConfig& cfg,
                                                  ConvergenceTrace* trace = nullptr);

struct Window {
  std::size_t begin = 0;  // first flagged index
  std::size_t end = 0;    // one past the last

  bool operator==(const Window& o) const { return begin == o.begin && end == o.end; }
};

std::vector<bool> flag_scores(std::span<const double> score, double threshold);
/// Maximal runs of flagged samples; runs separated by at most `merge_gap` unflagged samples are merged.
std::vector<Window> flagged_windows(const std::vector<bool>& flags, std::size_t merge_gap = 0);

struct FlagOptions {
  double k = 3.0;                   // threshold = mean + k stddev ...
  std::optional<double> threshold;  // ... unless given
  std::size_t edge_guard = 0;       // samples at each end never flagged and left out of the statistics
  std::size_t merge_gap = 0;
  std::size_t min_length = 1;  // shorter windows are dropped
};

struct Detection {
  double threshold = 0.0;
  std::vector<bool> flags;  // membership in the reported windows
  std::vector<Window> windows;
};

Detection detect_anomalies(std::span<const double> score, const FlagOptions& opts = {});

}  // namespace conprox
