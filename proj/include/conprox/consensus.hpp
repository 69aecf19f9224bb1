#pragma once

#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "conprox/step_rules.hpp"
#include "conprox/trace.hpp"

namespace conprox {

using Vec = std::vector<double>;

/// One local smooth term f_i. When `op` is set the term is 1/2 ||op x - b||^2 for some b, which
/// enables the Cauchy-type step rules.
struct SmoothTerm {
  std::function<double(std::span<const double>)> value;
  std::function<Vec(std::span<const double>)> gradient;
  std::optional<LinearOperator> op;
};

/// A proximable term g: prox(v, s) = argmin_u 1/2 ||u - v||^2 + s g(u).
struct ProxTerm {
  std::function<Vec(std::span<const double>, double)> prox;
  std::function<double(std::span<const double>)> value;

  static ProxTerm zero();
  static ProxTerm l1(double lambda);
};

struct SolveResult {
  Vec x;
  ConvergenceTrace trace;
};

// Both consensus solvers target sum_i [f_i(x) + g(x)], i.e. the regularizer is attached to every
// replica. The trace objective is sum_i f_i(x) + R g(x).

/// x+ = prox_{alpha_c g}( (1/R) sum_i (x_i - alpha_c grad f_i(x_i)) ).
Vec pg_consensus_step(std::span<const Vec> points, std::span<const SmoothTerm> terms, const ProxTerm& prox,
                      double alpha_c, unsigned workers = 1);
Vec pg_consensus_step(std::span<const double> x, std::span<const SmoothTerm> terms, const ProxTerm& prox,
                      double alpha_c, unsigned workers = 1);

/// The same update obtained by alternating the y-subproblem (quadratic pull towards
/// v_i = x - alpha grad f_i(x) and, with penalty rho, towards x) and the projection onto the
/// consensus set. Agrees with pg_consensus_step at alpha_c = alpha / (1 + rho alpha).
Vec split_consensus_step(std::span<const double> x, std::span<const SmoothTerm> terms, const ProxTerm& prox,
                         double alpha, double rho);

struct ApgOptions {
  Vec x0;
  StepConfig step;
  InertialConfig inertial;
  std::size_t iters = 100;
  double rel_tol = 0.0;  // relative objective change; 0 disables
  double divergence_factor = 1e3;
  unsigned workers = 1;
};

SolveResult apg_consensus_run(std::span<const SmoothTerm> terms, const ProxTerm& prox, const ApgOptions& opts);

/// The x-subproblem of an ADMM splitting: argmin_x f(x) + rho/2 ||x - v||^2.
struct LocalSolve {
  std::function<Vec(std::span<const double> v, double rho)> solve;
  std::function<double(std::span<const double>)> value;
};

/// Residual balancing: every `period` iterations, rho doubles when the primal residual exceeds
/// `ratio` times the dual one and halves in the opposite case; scaled duals are rescaled.
struct PenaltyPolicy {
  bool adaptive = true;
  std::size_t period = 10;
  double ratio = 10.0;
  double factor = 2.0;
};

struct AdmmOptions {
  Vec y0;
  double rho0 = 1.0;
  double relax = 1.8;
  PenaltyPolicy penalty;
  std::size_t iters = 100;
  double rel_tol = 0.0;
  double divergence_factor = 1e3;
  unsigned workers = 1;
};

/// Returns the new rho (possibly unchanged) and the factor by which scaled duals must be multiplied.
std::pair<double, double> balance_penalty(const PenaltyPolicy& p, std::size_t iter, double rho, double primal,
                                          double dual);

/// Scaled ADMM for f(x) + g(y) s.t. x = y, with over-relaxation. Returns y.
SolveResult admm_run(const LocalSolve& f, const ProxTerm& prox, const AdmmOptions& opts);

/// Consensus ADMM for sum_i [f_i(x_i) + g(y)] s.t. x_i = y. Returns y.
SolveResult admm_consensus_run(std::span<const LocalSolve> locals, const ProxTerm& prox, const AdmmOptions& opts);

/// Throws DivergenceError when `objective` is non-finite or exceeds factor * reference.
void check_divergence(double objective, double reference, double factor, std::size_t iter);

}  // namespace conprox
