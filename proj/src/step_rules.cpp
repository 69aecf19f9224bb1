#include "conprox/step_rules.hpp"

#include <cmath>
#include <random>
#include <stdexcept>

#include "conprox/array.hpp"
#include "conprox/errors.hpp"

namespace conprox {

void InertialConfig::validate() const {
  if (scheme == InertialScheme::linear || scheme == InertialScheme::generalized) {
    if (!(b >= 2.0)) throw std::invalid_argument("inertial sequence: b must be >= 2");
  }
  if (scheme == InertialScheme::generalized && !(a >= b - 1.0)) {
    throw std::invalid_argument("inertial sequence: a must be >= b - 1");
  }
}

double InertialConfig::first_t() const {
  if (scheme == InertialScheme::generalized) return a / b;
  return 1.0;
}

InertialStep inertial_next(const InertialConfig& cfg, double t_prev, std::size_t k) {
  cfg.validate();
  if (cfg.scheme == InertialScheme::none) return {1.0, 0.0};
  if (!(t_prev >= 1.0 - 1.0 / cfg.b) || !std::isfinite(t_prev)) {
    throw std::invalid_argument("inertial_next: t_prev out of range");
  }
  const double kk = static_cast<double>(k);
  double t = 0.0;
  switch (cfg.scheme) {
    case InertialScheme::nesterov:
      t = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t_prev * t_prev));
      break;
    case InertialScheme::linear:
      t = (kk + cfg.b) / cfg.b;
      break;
    case InertialScheme::generalized:
      t = (kk + cfg.a) / cfg.b;
      break;
    case InertialScheme::none:
      break;
  }
  // Rounding can push the Nesterov recursion one ulp past t^2 - t = t_prev^2.
  while (t * t - t > t_prev * t_prev) t = std::nextafter(t, 0.0);
  const double gamma = std::max(0.0, (t_prev - 1.0) / t);
  return {t, gamma};
}

StepRule parse_step_rule(const std::string& name) {
  if (name == "fixed") return StepRule::fixed;
  if (name == "bb1") return StepRule::bb1;
  if (name == "bb2") return StepRule::bb2;
  if (name == "bb3") return StepRule::bb3;
  if (name == "cauchy") return StepRule::cauchy;
  if (name == "cauchy_support") return StepRule::cauchy_support;
  if (name == "cauchy_modified") return StepRule::cauchy_modified;
  if (name == "fista3k") return StepRule::fista3k;
  throw std::invalid_argument("unknown step rule '" + name + "'");
}

std::string to_string(StepRule rule) {
  switch (rule) {
    case StepRule::fixed: return "fixed";
    case StepRule::bb1: return "bb1";
    case StepRule::bb2: return "bb2";
    case StepRule::bb3: return "bb3";
    case StepRule::cauchy: return "cauchy";
    case StepRule::cauchy_support: return "cauchy_support";
    case StepRule::cauchy_modified: return "cauchy_modified";
    case StepRule::fista3k: return "fista3k";
  }
  return "?";
}

InertialScheme parse_inertial_scheme(const std::string& name) {
  if (name == "nesterov") return InertialScheme::nesterov;
  if (name == "linear") return InertialScheme::linear;
  if (name == "generalized") return InertialScheme::generalized;
  if (name == "none") return InertialScheme::none;
  throw std::invalid_argument("unknown inertial scheme '" + name + "'");
}

void StepConfig::validate() const {
  if (!(c > 0.0)) throw std::invalid_argument("step config: c must be > 0");
  if (rule == StepRule::fixed && fixed < 0.0) throw std::invalid_argument("step config: fixed step must be > 0");
}

SecantPair secant_pair(std::span<const double> z, std::span<const double> r) {
  return {squared_norm(z), dot(z, r), squared_norm(r)};
}

std::optional<double> bb_step(const SecantPair& p, BbMode mode) {
  double alpha = 0.0;
  switch (mode) {
    case BbMode::v1:
      if (p.rr <= 0.0) return std::nullopt;
      alpha = p.zr / p.rr;
      break;
    case BbMode::v2:
      if (p.zr == 0.0) return std::nullopt;
      alpha = p.zz / p.zr;
      break;
    case BbMode::v3:
      if (p.rr <= 0.0) return std::nullopt;
      alpha = std::sqrt(p.zz / p.rr);
      break;
  }
  if (!(alpha > 0.0) || !std::isfinite(alpha)) return std::nullopt;
  return alpha;
}

std::optional<double> bb_step(std::span<const double> z, std::span<const double> r, BbMode mode) {
  return bb_step(secant_pair(z, r), mode);
}

std::optional<double> cauchy_from_norms(double v_sq, double phi_v_sq) {
  if (!(v_sq > 0.0) || !(phi_v_sq > 0.0)) return std::nullopt;
  const double a = v_sq / phi_v_sq;
  if (!std::isfinite(a)) return std::nullopt;
  return a;
}

std::optional<double> cauchy_step(std::span<const double> g, const LinearOperator& op, CauchyMode mode,
                                  std::span<const double> support) {
  switch (mode) {
    case CauchyMode::standard:
      return cauchy_from_norms(squared_norm(g), squared_norm(op.apply(g)));
    case CauchyMode::support: {
      if (support.size() != g.size()) throw ShapeError("cauchy_step: support does not match gradient");
      std::vector<double> sg(g.size());
      for (std::size_t i = 0; i < g.size(); ++i) sg[i] = support[i] != 0.0 ? g[i] : 0.0;
      return cauchy_from_norms(squared_norm(sg), squared_norm(op.apply(sg)));
    }
    case CauchyMode::modified: {
      const auto ng = op.adjoint(op.apply(g));
      auto sq = cauchy_from_norms(squared_norm(g), squared_norm(ng));
      if (!sq) return std::nullopt;
      return std::sqrt(*sq);
    }
  }
  return std::nullopt;
}

std::optional<double> fista3k_step(std::span<const double> g, const LinearOperator& op,
                                   std::span<const double> support, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("fista3k_step: c must be > 0");
  auto a = cauchy_step(g, op, CauchyMode::support, support);
  if (!a) return std::nullopt;
  return c * *a;
}

double consensus_alpha(double alpha, double rho) { return alpha / (1.0 + rho * alpha); }

std::optional<double> consensus_cauchy(std::span<const double> gbar, std::span<const LinearOperator> ops) {
  if (ops.empty()) throw std::invalid_argument("consensus_cauchy: no operators");
  double denom = 0.0;
  for (const auto& op : ops) denom += squared_norm(op.apply(gbar));
  denom /= static_cast<double>(ops.size());
  return cauchy_from_norms(squared_norm(gbar), denom);
}

double inverse_lipschitz_estimate(const LinearOperator& op, std::size_t dim, std::size_t iters,
                                  std::uint64_t seed) {
  return inverse_lipschitz_estimate([&op](std::span<const double> v) { return op.adjoint(op.apply(v)); }, dim,
                                    iters, seed);
}

double inverse_lipschitz_estimate(const VecOp& normal_op, std::size_t dim, std::size_t iters,
                                  std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  std::vector<double> v(dim);
  for (double& x : v) x = normal(rng);
  double lambda = 0.0;
  for (std::size_t i = 0; i < iters; ++i) {
    const double nv = std::sqrt(squared_norm(v));
    if (nv == 0.0) break;
    for (double& x : v) x /= nv;
    auto w = normal_op(v);
    lambda = dot(v, w);
    v = std::move(w);
  }
  if (!(lambda > 0.0)) return 1.0;
  return 1.0 / lambda;
}

StepController::StepController(double fallback, bool non_decreasing)
    : fallback_(fallback), non_decreasing_(non_decreasing) {}

double StepController::accept(std::optional<double> candidate) {
  double alpha = 0.0;
  if (candidate && *candidate > 0.0 && std::isfinite(*candidate)) {
    alpha = *candidate;
  } else {
    ++fallbacks_;
    alpha = previous_ ? *previous_ : fallback_;
  }
  if (non_decreasing_ && previous_) alpha = std::max(alpha, *previous_);
  previous_ = alpha;
  return alpha;
}

}  // namespace conprox
