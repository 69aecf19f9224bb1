#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace conprox {

// ---------------------------------------------------------------------------
// Inertial sequences
// ---------------------------------------------------------------------------

enum class InertialScheme { nesterov, linear, generalized, none };

/// t_1 = 1 for nesterov and linear. The generalized rule t_k = (k-1+a)/b is used from k = 1,
/// since forcing t_1 = 1 with a > b breaks t_{k+1}^2 - t_{k+1} <= t_k^2 at k = 1.
struct InertialConfig {
  InertialScheme scheme = InertialScheme::nesterov;
  double a = 50.0;
  double b = 2.0;

  void validate() const;
  double first_t() const;
};

struct InertialStep {
  double t;
  double gamma;
};

/// Given t_k (`t_prev`) at index k, returns t_{k+1} and gamma_k = (t_k - 1) / t_{k+1}.
InertialStep inertial_next(const InertialConfig& cfg, double t_prev, std::size_t k);

// ---------------------------------------------------------------------------
// Step sizes
// ---------------------------------------------------------------------------

enum class StepRule { fixed, bb1, bb2, bb3, cauchy, cauchy_support, cauchy_modified, fista3k };
enum class BbMode { v1, v2, v3 };
enum class CauchyMode { standard, support, modified };

StepRule parse_step_rule(const std::string& name);
std::string to_string(StepRule rule);
InertialScheme parse_inertial_scheme(const std::string& name);

struct StepConfig {
  StepRule rule = StepRule::bb3;
  double fixed = 0.0;  // <= 0 selects the operator-derived default where a solver has one
  double c = 0.2;      // fista3k factor

  void validate() const;
};

/// Inner products of the iterate difference z and gradient difference r.
struct SecantPair {
  double zz = 0.0;
  double zr = 0.0;
  double rr = 0.0;
};

SecantPair secant_pair(std::span<const double> z, std::span<const double> r);

/// Barzilai-Borwein step; nullopt when a denominator vanishes or the value is not positive.
std::optional<double> bb_step(const SecantPair& p, BbMode mode);
std::optional<double> bb_step(std::span<const double> z, std::span<const double> r, BbMode mode);

using VecOp = std::function<std::vector<double>(std::span<const double>)>;

/// A linear map with its transpose.
struct LinearOperator {
  VecOp apply;
  VecOp adjoint;
};

/// ||v||^2 / ||Phi v||^2 from precomputed norms; nullopt on a vanishing numerator or denominator.
std::optional<double> cauchy_from_norms(double v_sq, double phi_v_sq);

/// Cauchy-type step. `support` is only used in support mode (nonzero entries mark the support).
std::optional<double> cauchy_step(std::span<const double> g, const LinearOperator& op, CauchyMode mode,
                                  std::span<const double> support = {});

/// c times the support-restricted Cauchy step.
std::optional<double> fista3k_step(std::span<const double> g, const LinearOperator& op,
                                   std::span<const double> support, double c);

/// alpha / (1 + rho alpha).
double consensus_alpha(double alpha, double rho);

/// Exact line-search step along the averaged gradient for sum_i ||Phi_i x - b_i||^2.
std::optional<double> consensus_cauchy(std::span<const double> gbar, std::span<const LinearOperator> ops);

/// 1 / lambda_max(Phi^T Phi) by power iteration from a seeded random start.
double inverse_lipschitz_estimate(const LinearOperator& op, std::size_t dim, std::size_t iters = 10,
                                  std::uint64_t seed = 7);
/// Same estimate given the normal operator Phi^T Phi directly.
double inverse_lipschitz_estimate(const VecOp& normal_op, std::size_t dim, std::size_t iters = 10,
                                  std::uint64_t seed = 7);

/// Applies the fallback policy to candidate steps: an invalid candidate reuses the last accepted
/// step, or the fallback value when nothing was accepted yet. With `non_decreasing` set, each
/// accepted step is at least the previous one.
class StepController {
 public:
  StepController() = default;
  StepController(double fallback, bool non_decreasing);

  double accept(std::optional<double> candidate);
  std::optional<double> previous() const { return previous_; }
  void set_fallback(double f) { fallback_ = f; }
  std::size_t fallbacks_used() const { return fallbacks_; }

 private:
  double fallback_ = 1.0;
  bool non_decreasing_ = false;
  std::optional<double> previous_;
  std::size_t fallbacks_ = 0;
};

}  // namespace conprox
