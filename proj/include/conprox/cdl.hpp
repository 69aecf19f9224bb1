#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "conprox/array.hpp"
#include "conprox/consensus.hpp"
#include "conprox/csc.hpp"
#include "conprox/step_rules.hpp"
#include "conprox/trace.hpp"

namespace conprox {

enum class CoefSolver { admm, fista, fista3k };
enum class DictSolver { admm_cns, apg, apg_cns };

CoefSolver parse_coef_solver(const std::string& name);
DictSolver parse_dict_solver(const std::string& name);
std::string to_string(CoefSolver s);
std::string to_string(DictSolver s);

/// Unit-norm filters with standard normal entries on the support.
Dictionary random_dictionary(Shape support, Shape frame, std::size_t m, std::uint64_t seed);

/// Spectra of fixed coefficient maps and signals, shared by all dictionary updates.
struct DictData {
  Shape support;
  Shape frame;
  std::size_t filters = 0;
  std::vector<FreqBlock> xhat;         // per image, N x M
  std::vector<std::vector<cplx>> shat;  // per image, N

  std::size_t images() const { return xhat.size(); }
};

DictData make_dict_data(const CoefficientMaps& maps, const SignalSet& signals, Shape support);

/// Iterates carried between dictionary updates. Filters are stored zero-padded (M x N).
struct DictUpdateState {
  std::vector<double> dict;   // current dictionary in C_PN: G (ADMM-consensus) or H (APG variants)
  std::vector<double> point;  // APG extrapolation point
  std::vector<double> local;  // K x M x N local dictionaries D_k (ADMM-consensus)
  std::vector<double> duals;  // K x M x N scaled duals H_k (ADMM-consensus)
  double sigma = 1.0;
  double t = 1.0;
  std::size_t iter = 0;
  double last_step = 0.0;
  StepController steps;
  std::optional<FreqBlock> prev_point_hat;
  std::optional<FreqBlock> prev_grad_hat;
  std::size_t replacements = 0;
  std::uint64_t seed = 0;
};

DictUpdateState init_dict_state(const Dictionary& d0, std::size_t images, double sigma0,
                                const InertialConfig& inertial, std::uint64_t seed);

struct DictUpdateOptions {
  std::size_t iters = 1;
  double relax = 1.8;
  PenaltyPolicy penalty;
  StepConfig step{StepRule::bb3};
  InertialConfig inertial;
  bool keep_history = true;  // keep BB secant history between calls
  unsigned workers = 1;
};

/// Local Sherman-Morrison solves per image, G = project onto C_PN of mean(D_k + H_k), dual update.
void dict_admm_consensus_update(const DictData& data, DictUpdateState& state, const DictUpdateOptions& opts);
/// APG on the stacked problem with the projection onto C_PN as prox.
void dict_apg_update(const DictData& data, DictUpdateState& state, const DictUpdateOptions& opts);
/// Gradient step per image at G, H = projection of the mean, G = H + gamma (H - H_prev).
void dict_apg_consensus_update(const DictData& data, DictUpdateState& state, const DictUpdateOptions& opts);

Dictionary state_dictionary(const DictUpdateState& state, Shape support, Shape frame, std::size_t filters);

/// Projects each of the M padded filters onto C_PN. Degenerate filters are replaced by seeded random
/// unit-norm filters; `replacements` is incremented for each.
std::vector<double> project_filters(std::span<const double> frames, Shape support, Shape frame, std::size_t filters,
                                    std::uint64_t seed, std::size_t& replacements);

CscObjective cdl_objective(const Dictionary& dict, const CoefficientMaps& maps, const SignalSet& signals,
                           double lambda);

struct CdlConfig {
  std::size_t filters = 36;
  Shape support = Shape::plane(8, 8);
  double lambda = 0.1;
  std::size_t iters = 1000;
  CoefSolver coef = CoefSolver::fista;
  DictSolver dict = DictSolver::apg_cns;
  std::size_t coef_inner = 1;
  std::size_t dict_inner = 1;
  std::uint64_t seed = 0;

  double rho0 = 0.0;    // <= 0: 100 lambda + 1
  double sigma0 = 0.0;  // <= 0: same rule as rho0
  double relax = 1.8;
  PenaltyPolicy penalty;
  StepConfig coef_step{StepRule::fixed};
  InertialConfig coef_inertial;
  std::optional<StepConfig> dict_step;  // default: cauchy for apg, bb3 for apg_cns
  InertialConfig dict_inertial;
  bool keep_history = true;

  double divergence_factor = 1e3;
  unsigned workers = 1;
  std::size_t checkpoint_every = 0;
  std::function<void(std::size_t, const Dictionary&)> checkpoint;

  void validate() const;
  StepConfig resolved_dict_step() const;
};

struct CdlResult {
  Dictionary dict;
  CoefficientMaps maps;
  ConvergenceTrace trace;
  std::size_t replacements = 0;
};

/// Alternates coefficient and dictionary updates. Row 0 of the trace holds the initialization.
CdlResult cdl_train(const CdlConfig& cfg, const SignalSet& signals, const Dictionary* init = nullptr);

}  // namespace conprox
