#include <cmath>
#include <random>

#include "conprox/array.hpp"
#include "conprox/step_rules.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace conprox;

namespace {

// Dense row-major matrix as a LinearOperator.
LinearOperator dense_op(const std::vector<double>& a, std::size_t rows, std::size_t cols) {
  LinearOperator op;
  op.apply = [a, rows, cols](std::span<const double> v) {
    std::vector<double> out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r] += a[r * cols + c] * v[c];
    return out;
  };
  op.adjoint = [a, rows, cols](std::span<const double> v) {
    std::vector<double> out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[c] += a[r * cols + c] * v[r];
    return out;
  };
  return op;
}

}  // namespace

TEST_CASE("inertial sequences satisfy t_{k+1}^2 - t_{k+1} <= t_k^2 exactly") {
  for (auto scheme : {InertialScheme::nesterov, InertialScheme::linear, InertialScheme::generalized}) {
    for (auto [a, b] : {std::pair{50.0, 2.0}, std::pair{3.0, 4.0}, std::pair{1.0, 2.0}}) {
      const InertialConfig cfg{scheme, a, b};
      double t = cfg.first_t();
      for (std::size_t k = 1; k <= 10000; ++k) {
        const auto step = inertial_next(cfg, t, k);
        REQUIRE(step.t * step.t - step.t <= t * t);
        REQUIRE(step.gamma >= 0.0);
        REQUIRE(step.gamma < 1.0);
        t = step.t;
      }
    }
  }
}

TEST_CASE("inertial sequence values") {
  const InertialConfig nest{InertialScheme::nesterov};
  auto s = inertial_next(nest, 1.0, 1);
  CHECK(s.t == doctest::Approx((1.0 + std::sqrt(5.0)) / 2.0));
  CHECK(s.gamma == 0.0);

  const InertialConfig lin{InertialScheme::linear, 0.0, 2.0};
  CHECK(inertial_next(lin, 1.0, 1).t == doctest::Approx(1.5));
  CHECK(inertial_next(lin, 1.5, 2).t == doctest::Approx(2.0));

  const InertialConfig gen{InertialScheme::generalized, 50.0, 2.0};
  CHECK(gen.first_t() == doctest::Approx(25.0));
  CHECK(inertial_next(gen, 25.0, 1).t == doctest::Approx(25.5));

  CHECK(inertial_next({InertialScheme::none}, 1.0, 1).gamma == 0.0);
  CHECK_THROWS_AS(inertial_next({InertialScheme::linear, 0.0, 1.0}, 1.0, 1), std::invalid_argument);
  CHECK_THROWS_AS(inertial_next({InertialScheme::generalized, 0.5, 2.0}, 1.0, 1), std::invalid_argument);
}

TEST_CASE("BB steps on a diagonal quadratic") {
  // f(x) = 1/2 x^T diag(h) x, so r = diag(h) z.
  const std::vector<double> h{1.0, 4.0}, z{1.0, 1.0};
  const std::vector<double> r{h[0] * z[0], h[1] * z[1]};
  const auto p = secant_pair(z, r);
  CHECK(*bb_step(p, BbMode::v1) == doctest::Approx(5.0 / 17.0));
  CHECK(*bb_step(p, BbMode::v2) == doctest::Approx(2.0 / 5.0));
  CHECK(*bb_step(p, BbMode::v3) == doctest::Approx(std::sqrt(2.0 / 17.0)));
  // v3 is the geometric mean of v1 and v2.
  CHECK(*bb_step(p, BbMode::v3) == doctest::Approx(std::sqrt(*bb_step(p, BbMode::v1) * *bb_step(p, BbMode::v2))));

  const std::vector<double> zero{0.0, 0.0};
  CHECK_FALSE(bb_step(z, zero, BbMode::v1));
  CHECK_FALSE(bb_step(z, zero, BbMode::v2));
  CHECK_FALSE(bb_step(z, zero, BbMode::v3));
  // Negative curvature along z.
  const std::vector<double> neg{-1.0, -1.0};
  CHECK_FALSE(bb_step(z, neg, BbMode::v1));
}

TEST_CASE("Cauchy step is the exact line-search minimizer") {
  std::mt19937_64 rng(31);
  const std::size_t rows = 7, cols = 4;
  const auto a = oracle::random_vector(rows * cols, rng);
  const auto op = dense_op(a, rows, cols);
  const auto b = oracle::random_vector(rows, rng);
  const auto x = oracle::random_vector(cols, rng);
  auto f = [&](std::span<const double> v) {
    auto ax = op.apply(v);
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += 0.5 * (ax[i] - b[i]) * (ax[i] - b[i]);
    return s;
  };
  auto res = op.apply(x);
  for (std::size_t i = 0; i < rows; ++i) res[i] -= b[i];
  const auto g = op.adjoint(res);
  auto line = [&](double alpha) {
    std::vector<double> y(cols);
    for (std::size_t i = 0; i < cols; ++i) y[i] = x[i] - alpha * g[i];
    return f(y);
  };
  const double best = oracle::golden_section(line, 0.0, 10.0);
  const auto alpha = cauchy_step(g, op, CauchyMode::standard);
  REQUIRE(alpha);
  CHECK(*alpha == doctest::Approx(best).epsilon(1e-6));

  // Full support equals the standard rule.
  std::vector<double> ones(cols, 1.0);
  CHECK(*cauchy_step(g, op, CauchyMode::support, ones) == doctest::Approx(*alpha));
  CHECK(*fista3k_step(g, op, ones, 0.2) == doctest::Approx(0.2 * *alpha));

  // Modified rule: sqrt(||g||^2 / ||Phi^T Phi g||^2).
  const auto ng = op.adjoint(op.apply(g));
  CHECK(*cauchy_step(g, op, CauchyMode::modified) == doctest::Approx(std::sqrt(squared_norm(g) / squared_norm(ng))));

  std::vector<double> zero(cols, 0.0);
  CHECK_FALSE(cauchy_step(zero, op, CauchyMode::standard));
  CHECK_FALSE(cauchy_step(g, op, CauchyMode::support, zero));
}

TEST_CASE("consensus Cauchy step averages the operator curvature") {
  std::mt19937_64 rng(17);
  std::vector<LinearOperator> ops;
  for (int i = 0; i < 3; ++i) ops.push_back(dense_op(oracle::random_vector(20, rng), 5, 4));
  const auto g = oracle::random_vector(4, rng);
  double denom = 0.0;
  for (const auto& op : ops) denom += squared_norm(op.apply(g));
  CHECK(*consensus_cauchy(g, ops) == doctest::Approx(squared_norm(g) / (denom / 3.0)));
  CHECK(consensus_alpha(2.0, 0.5) == doctest::Approx(1.0));
  CHECK(consensus_alpha(1.0, 0.0) == doctest::Approx(1.0));
}

TEST_CASE("power iteration estimates 1/L") {
  std::vector<double> a{3.0, 0.0, 0.0, 1.0};
  const auto op = dense_op(a, 2, 2);
  CHECK(inverse_lipschitz_estimate(op, 2, 50) == doctest::Approx(1.0 / 9.0).epsilon(1e-6));
}

TEST_CASE("StepController fallback and monotonicity") {
  StepController plain(0.5, false);
  CHECK(plain.accept(std::nullopt) == 0.5);
  CHECK(plain.accept(2.0) == 2.0);
  CHECK(plain.accept(std::nullopt) == 2.0);
  CHECK(plain.accept(-1.0) == 2.0);
  CHECK(plain.accept(1.0) == 1.0);
  CHECK(plain.fallbacks_used() == 3);

  StepController mono(0.5, true);
  CHECK(mono.accept(1.0) == 1.0);
  CHECK(mono.accept(0.3) == 1.0);
  CHECK(mono.accept(1.5) == 1.5);
}

TEST_CASE("step rule names round-trip") {
  for (auto r : {StepRule::fixed, StepRule::bb1, StepRule::bb2, StepRule::bb3, StepRule::cauchy,
                 StepRule::cauchy_support, StepRule::cauchy_modified, StepRule::fista3k}) {
    CHECK(parse_step_rule(to_string(r)) == r);
  }
  CHECK_THROWS(parse_step_rule("newton"));
  CHECK(parse_inertial_scheme("generalized") == InertialScheme::generalized);
}
