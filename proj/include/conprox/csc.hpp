#pragma once

#include <span>
#include <vector>

#include "conprox/array.hpp"
#include "conprox/consensus.hpp"
#include "conprox/step_rules.hpp"
#include "conprox/trace.hpp"

namespace conprox {

/// min_X sum_k 1/2 ||sum_m d_m * x_{k,m} - s_k||^2 + lambda ||X_k||_1
struct CscProblem {
  Dictionary dict;
  SignalSet signals;
  double lambda = 0.1;

  void validate() const;
};

/// Per bin, solves (a_n a_n^H + rho I) x_n = b_n where a_n is row n of `a`.
FreqBlock sherman_morrison_solve(const FreqBlock& a, double rho, const FreqBlock& rhs);

struct CscObjective {
  double total = 0.0;
  double fidelity = 0.0;
  double l1 = 0.0;
};

CscObjective csc_objective(const Dictionary& dict, const CoefficientMaps& maps, const SignalSet& signals,
                           double lambda);

struct CscResult {
  CoefficientMaps maps;
  ConvergenceTrace trace;
};

struct CscAdmmOptions {
  double rho0 = 0.0;  // <= 0: 100 lambda + 1
  double relax = 1.8;
  PenaltyPolicy penalty;
  std::size_t iters = 200;
  std::size_t trace_every = 1;
  double divergence_factor = 1e3;
  unsigned workers = 1;
  bool mean_subtract = false;
};

/// Warm-start state: sparse variable Y, scaled duals U and the penalty of every image.
struct CscAdmmState {
  CoefficientMaps y;
  CoefficientMaps u;
  std::vector<double> rho;
  std::vector<std::size_t> iter;

  bool empty() const { return rho.empty(); }
};

/// Independent ADMM per image. Returns Y; the trace objective is evaluated at Y.
CscResult csc_admm_solve(const CscProblem& p, const CscAdmmOptions& opts, CscAdmmState* state = nullptr);

enum class CscVariant { fista, fista3k };

struct CscFistaOptions {
  StepConfig step{StepRule::fixed};  // fista: fixed step, <= 0 selects 1/L; fista3k: uses step.c
  InertialConfig inertial;
  CscVariant variant = CscVariant::fista;
  std::size_t iters = 200;
  std::size_t trace_every = 1;
  double divergence_factor = 1e3;
  unsigned workers = 1;
  bool mean_subtract = false;
};

struct CscFistaState {
  CoefficientMaps x;
  CoefficientMaps z;
  std::vector<double> t;
  std::vector<StepController> steps;
  std::vector<std::size_t> iter;

  bool empty() const { return t.empty(); }
};

CscResult csc_fista_solve(const CscProblem& p, const CscFistaOptions& opts, CscFistaState* state = nullptr);

struct CbpdnResult {
  CoefficientMaps maps;
  double objective = 0.0;
};

/// Single-signal sparse coding with ADMM.
CbpdnResult cbpdn_solve(const Dictionary& dict, std::span<const double> signal, double lambda = 0.1,
                        std::size_t iters = 200);

}  // namespace conprox
