#include <cmath>
#include <random>

#include "conprox/cdl.hpp"
#include "conprox/conv.hpp"
#include "conprox/errors.hpp"
#include "conprox/fft.hpp"
#include "conprox/prox.hpp"
#include "doctest.h"
#include "oracles.hpp"

using namespace conprox;

namespace {

struct Instance {
  Dictionary dict;
  CoefficientMaps maps;
  SignalSet signals;
};

Instance random_instance(Shape frame, Shape support, std::size_t m, std::size_t k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  Instance in;
  in.dict = random_dictionary(support, frame, m, seed);
  in.maps = CoefficientMaps(frame, k, m);
  in.maps.data = oracle::random_vector(in.maps.data.size(), rng);
  in.signals = SignalSet(frame, k, oracle::random_vector(k * frame.size(), rng));
  return in;
}

// Signals that the maps reproduce exactly with `dict`.
SignalSet exact_signals(const Dictionary& dict, const CoefficientMaps& maps) {
  SignalSet s(dict.frame, maps.signals);
  for (std::size_t k = 0; k < maps.signals; ++k) {
    const auto fit = conv_sum(dict, maps, k);
    std::copy(fit.begin(), fit.end(), s.signal(k).begin());
  }
  return s;
}

bool in_cpn(std::span<const double> padded, Shape support, Shape frame, std::size_t m, double tol = 1e-12) {
  const ConstraintSetPN set{support, frame};
  for (std::size_t j = 0; j < m; ++j) {
    if (!set.contains(padded.subspan(j * frame.size(), frame.size()), tol)) return false;
  }
  return true;
}

// Spatial gradient of sum_k 1/2 ||X_k d - s_k||^2 with respect to the padded filters.
std::vector<double> spatial_dict_gradient(const std::vector<double>& padded, const CoefficientMaps& maps,
                                          const SignalSet& s) {
  auto f = [&](const std::vector<double>& d) {
    double total = 0.0;
    for (std::size_t k = 0; k < maps.signals; ++k) {
      const auto fit = oracle::conv_sum_spatial(d, {maps.maps(k).begin(), maps.maps(k).end()}, maps.filters, maps.frame);
      total += oracle::half_sq_residual(fit, {s.signal(k).begin(), s.signal(k).end()});
    }
    return total;
  };
  return oracle::fd_gradient(f, padded);
}

}  // namespace

TEST_CASE("random_dictionary and project_filters stay in C_PN") {
  const Shape frame = Shape::plane(12, 12), support = Shape::plane(4, 3);
  const auto d = random_dictionary(support, frame, 5, 7);
  CHECK(in_cpn(d.padded(), support, frame, 5));
  CHECK(random_dictionary(support, frame, 5, 7).data == d.data);

  std::mt19937_64 rng(1);
  auto frames = oracle::random_vector(5 * frame.size(), rng);
  // Filter 2 has no energy on the support.
  for (std::size_t i = 0; i < frame.size(); ++i) {
    if (ConstraintSetPN{support, frame}.in_support(i)) frames[2 * frame.size() + i] = 0.0;
  }
  std::size_t repl = 0;
  const auto p = project_filters(frames, support, frame, 5, 3, repl);
  CHECK(repl == 1);
  CHECK(in_cpn(p, support, frame, 5));
}

TEST_CASE("cdl_objective") {
  auto in = random_instance(Shape::plane(10, 10), Shape::plane(3, 3), 3, 2, 4);
  Dictionary zero_d(in.dict.support, in.dict.frame, 3);
  CoefficientMaps zero_x(in.dict.frame, 2, 3);
  const auto o = cdl_objective(zero_d, zero_x, in.signals, 0.1);
  CHECK(o.total == doctest::Approx(0.5 * squared_norm(in.signals.data)).epsilon(1e-12));
  CHECK(cdl_objective(in.dict, zero_x, in.signals, 0.1).l1 == 0.0);

  double fid = 0.0, l1 = 0.0;
  const auto padded = in.dict.padded();
  for (std::size_t k = 0; k < 2; ++k) {
    const auto fit = oracle::conv_sum_spatial(padded, {in.maps.maps(k).begin(), in.maps.maps(k).end()}, 3, in.dict.frame);
    fid += oracle::half_sq_residual(fit, {in.signals.signal(k).begin(), in.signals.signal(k).end()});
  }
  for (double v : in.maps.data) l1 += std::abs(v);
  const auto r = cdl_objective(in.dict, in.maps, in.signals, 0.1);
  CHECK(std::abs(r.total - (fid + 0.1 * l1)) <= 1e-10 * r.total);
}

TEST_CASE("ADMM-consensus dictionary update") {
  SUBCASE("a dominant penalty pins the local dictionary to G") {
    auto in = random_instance(Shape::plane(8, 8), Shape::plane(3, 3), 2, 1, 5);
    auto st = init_dict_state(in.dict, 1, 1e9, {}, 1);
    DictUpdateOptions opts;
    opts.penalty.adaptive = false;
    dict_admm_consensus_update(make_dict_data(in.maps, in.signals, in.dict.support), st, opts);
    const auto g0 = in.dict.padded();
    CHECK(oracle::max_abs_diff(st.local, g0) < 1e-6);
    CHECK(oracle::max_abs_diff(st.dict, g0) < 1e-6);
  }
  SUBCASE("exactly represented signals are a fixed point") {
    auto in = random_instance(Shape::plane(8, 8), Shape::plane(3, 3), 2, 2, 6);
    const auto s = exact_signals(in.dict, in.maps);
    auto st = init_dict_state(in.dict, 2, 5.0, {}, 1);
    DictUpdateOptions opts;
    opts.iters = 5;
    dict_admm_consensus_update(make_dict_data(in.maps, s, in.dict.support), st, opts);
    CHECK(oracle::max_abs_diff(st.dict, in.dict.padded()) < 1e-10);
    for (std::size_t k = 0; k < 2; ++k) {
      CHECK(oracle::max_abs_diff({st.local.begin() + k * 128, st.local.begin() + (k + 1) * 128}, in.dict.padded()) < 1e-10);
    }
  }
  SUBCASE("long runs reach a KKT point") {
    // On the nonconvex constraint set a small penalty lets the iterates cycle; a penalty of the
    // order of the operator norm converges.
    auto in = random_instance(Shape::plane(16, 16), Shape::plane(3, 3), 2, 2, 7);
    auto st = init_dict_state(in.dict, 2, 1000.0, {}, 1);
    DictUpdateOptions opts;
    opts.penalty.adaptive = false;
    opts.iters = 3000;
    const auto data = make_dict_data(in.maps, in.signals, in.dict.support);
    dict_admm_consensus_update(data, st, opts);
    const std::size_t B = 2 * 256;
    CHECK(in_cpn(st.dict, in.dict.support, in.dict.frame, 2));
    const auto dhat = transform_stack(st.dict, 2, in.dict.frame);
    std::vector<double> hbar(B, 0.0);
    for (std::size_t k = 0; k < 2; ++k) {
      const std::vector<double> dk(st.local.begin() + k * B, st.local.begin() + (k + 1) * B);
      CHECK(oracle::max_abs_diff(dk, st.dict) < 1e-6);
      // Local stationarity: grad f_k(G) + sigma H_k = 0.
      const auto g = inverse_stack(freq_gradient_dict(data.xhat[k], dhat, data.shat[k]), in.dict.frame);
      double worst = 0.0, scale = 1.0;
      for (std::size_t i = 0; i < B; ++i) {
        worst = std::max(worst, std::abs(g[i] + st.sigma * st.duals[k * B + i]));
        scale = std::max(scale, std::abs(g[i]));
        hbar[i] += 0.5 * st.duals[k * B + i];
      }
      CHECK(worst <= 1e-6 * scale);
    }
    // Global step: G is the projection of G + mean(H_k).
    std::vector<double> v(B);
    for (std::size_t i = 0; i < B; ++i) v[i] = st.dict[i] + hbar[i];
    std::size_t repl = 0;
    CHECK(oracle::max_abs_diff(project_filters(v, in.dict.support, in.dict.frame, 2, 0, repl), st.dict) < 1e-6);
  }
}

TEST_CASE("APG dictionary update") {
  SUBCASE("a stationary dictionary is left unchanged") {
    auto in = random_instance(Shape::plane(8, 8), Shape::plane(3, 3), 2, 2, 8);
    const auto s = exact_signals(in.dict, in.maps);
    auto st = init_dict_state(in.dict, 2, 1.0, {}, 1);
    DictUpdateOptions opts;
    opts.step = StepConfig{StepRule::cauchy};
    dict_apg_update(make_dict_data(in.maps, s, in.dict.support), st, opts);
    CHECK(oracle::max_abs_diff(st.dict, in.dict.padded()) < 1e-12);
  }
  SUBCASE("the adaptive step is the exact line search along the gradient") {
    auto in = random_instance(Shape::line(12), Shape::line(3), 2, 2, 9);
    auto st = init_dict_state(in.dict, 2, 1.0, {}, 1);
    DictUpdateOptions opts;
    opts.step = StepConfig{StepRule::cauchy};
    dict_apg_update(make_dict_data(in.maps, in.signals, in.dict.support), st, opts);
    const auto d0 = in.dict.padded();
    const auto g = spatial_dict_gradient(d0, in.maps, in.signals);
    auto f = [&](double a) {
      std::vector<double> d(d0.size());
      for (std::size_t i = 0; i < d.size(); ++i) d[i] = d0[i] - a * g[i];
      double total = 0.0;
      for (std::size_t k = 0; k < 2; ++k) {
        const auto fit = oracle::conv_sum_spatial(d, {in.maps.maps(k).begin(), in.maps.maps(k).end()}, 2, in.dict.frame);
        total += oracle::half_sq_residual(fit, {in.signals.signal(k).begin(), in.signals.signal(k).end()});
      }
      return total;
    };
    CHECK(st.last_step == doctest::Approx(oracle::golden_section(f, 0.0, 1.0)).epsilon(1e-5));
    CHECK(in_cpn(st.dict, in.dict.support, in.dict.frame, 2));
  }
}

TEST_CASE("APG-consensus reduces to APG by symmetry") {
  auto in = random_instance(Shape::plane(8, 8), Shape::plane(3, 3), 2, 1, 10);
  for (auto rule : {StepRule::cauchy, StepRule::bb3}) {
    CAPTURE(to_string(rule));
    // K replicas of the same image.
    CoefficientMaps xr(in.maps.frame, 3, 2);
    SignalSet sr(in.signals.shape, 3);
    for (std::size_t k = 0; k < 3; ++k) {
      std::copy(in.maps.data.begin(), in.maps.data.end(), xr.maps(k).begin());
      std::copy(in.signals.data.begin(), in.signals.data.end(), sr.signal(k).begin());
    }
    DictUpdateOptions opts;
    opts.step = StepConfig{rule};
    opts.iters = 20;
    auto a = init_dict_state(in.dict, 3, 1.0, {}, 1);
    auto c = init_dict_state(in.dict, 3, 1.0, {}, 1);
    const auto data = make_dict_data(xr, sr, in.dict.support);
    dict_apg_update(data, a, opts);
    dict_apg_consensus_update(data, c, opts);
    CHECK(oracle::max_abs_diff(a.dict, c.dict) < 1e-12);

    // K = 1.
    auto a1 = init_dict_state(in.dict, 1, 1.0, {}, 1);
    auto c1 = init_dict_state(in.dict, 1, 1.0, {}, 1);
    const auto d1 = make_dict_data(in.maps, in.signals, in.dict.support);
    dict_apg_update(d1, a1, opts);
    dict_apg_consensus_update(d1, c1, opts);
    CHECK(oracle::max_abs_diff(a1.dict, c1.dict) < 1e-12);
  }
}

TEST_CASE("APG-consensus without extrapolation") {
  auto in = random_instance(Shape::plane(8, 8), Shape::plane(2, 2), 2, 3, 11);
  const auto data = make_dict_data(in.maps, in.signals, in.dict.support);
  const std::size_t B = 2 * 64;

  SUBCASE("matches the two-subproblem alternation") {
    std::vector<SmoothTerm> terms;
    for (std::size_t k = 0; k < 3; ++k) {
      SmoothTerm t;
      t.value = [](std::span<const double>) { return 0.0; };
      t.gradient = [&, k](std::span<const double> d) {
        const auto dhat = transform_stack(d, 2, in.dict.frame);
        return inverse_stack(freq_gradient_dict(data.xhat[k], dhat, data.shat[k]), in.dict.frame);
      };
      terms.push_back(t);
    }
    ProxTerm proj;
    proj.prox = [&](std::span<const double> v, double) {
      std::size_t r = 0;
      return project_filters(v, in.dict.support, in.dict.frame, 2, 0, r);
    };
    proj.value = [](std::span<const double>) { return 0.0; };
    for (double rho : {0.5, 4.0}) {
      const double alpha = 0.02;
      auto st = init_dict_state(in.dict, 3, 1.0, {InertialScheme::none}, 1);
      DictUpdateOptions opts;
      opts.step = StepConfig{StepRule::fixed, consensus_alpha(alpha, rho)};
      opts.inertial.scheme = InertialScheme::none;
      const auto split = split_consensus_step(in.dict.padded(), terms, proj, alpha, rho);
      dict_apg_consensus_update(data, st, opts);
      CHECK(oracle::max_abs_diff(split, st.dict) < 1e-12);
    }
  }
  SUBCASE("objective is non-increasing with the safe step") {
    auto st = init_dict_state(in.dict, 3, 1.0, {InertialScheme::none}, 1);
    DictUpdateOptions opts;
    opts.step = StepConfig{StepRule::fixed, 0.0};  // 1/L fallback
    opts.inertial.scheme = InertialScheme::none;
    double prev = cdl_objective(in.dict, in.maps, in.signals, 0.0).total;
    for (int it = 0; it < 30; ++it) {
      dict_apg_consensus_update(data, st, opts);
      CHECK(in_cpn(st.dict, in.dict.support, in.dict.frame, 2));
      const auto d = state_dictionary(st, in.dict.support, in.dict.frame, 2);
      const double obj = cdl_objective(d, in.maps, in.signals, 0.0).total;
      CHECK(obj <= prev * (1.0 + 1e-12));
      prev = obj;
    }
    (void)B;
  }
}

TEST_CASE("APG and ADMM-consensus reach the same objective on a small instance") {
  auto in = random_instance(Shape::plane(16, 16), Shape::plane(3, 3), 2, 2, 12);
  const auto data = make_dict_data(in.maps, in.signals, in.dict.support);
  auto a = init_dict_state(in.dict, 2, 1000.0, {}, 1);
  auto b = init_dict_state(in.dict, 2, 1000.0, {}, 1);
  DictUpdateOptions opts;
  opts.penalty.adaptive = false;
  opts.iters = 3000;
  opts.step = StepConfig{StepRule::cauchy};
  dict_apg_update(data, a, opts);
  dict_admm_consensus_update(data, b, opts);
  const auto fa = cdl_objective(state_dictionary(a, in.dict.support, in.dict.frame, 2), in.maps, in.signals, 0.0).total;
  const auto fb = cdl_objective(state_dictionary(b, in.dict.support, in.dict.frame, 2), in.maps, in.signals, 0.0).total;
  CHECK(std::abs(fa - fb) <= 1e-4 * fb);
}

TEST_CASE("APG-consensus performs no per-bin solves") {
  auto in = random_instance(Shape::plane(16, 16), Shape::plane(3, 3), 4, 3, 13);
  const auto data = make_dict_data(in.maps, in.signals, in.dict.support);
  DictUpdateOptions opts;
  opts.iters = 2;

  auto a = init_dict_state(in.dict, 3, 1.0, {}, 1);
  ops::reset();
  dict_admm_consensus_update(data, a, opts);
  const auto admm = ops::snapshot();

  auto c = init_dict_state(in.dict, 3, 1.0, {}, 1);
  ops::reset();
  dict_apg_consensus_update(data, c, opts);
  const auto apg = ops::snapshot();

  CHECK(admm.bin_solves == 2 * 256 * 3);
  CHECK(apg.bin_solves == 0);
  CHECK(apg.transforms < admm.transforms);
}

TEST_CASE("cdl_train") {
  std::mt19937_64 rng(14);
  const Shape frame = Shape::plane(16, 16);
  SignalSet s(frame, 2, oracle::random_vector(2 * frame.size(), rng));

  SUBCASE("trace starts at the objective of the initialization and stays finite") {
    for (auto [coef, dict] : {std::pair{CoefSolver::admm, DictSolver::admm_cns}, std::pair{CoefSolver::fista, DictSolver::apg_cns},
                              std::pair{CoefSolver::fista3k, DictSolver::apg}}) {
      CdlConfig cfg;
      cfg.filters = 4;
      cfg.support = Shape::plane(4, 4);
      cfg.iters = 20;
      cfg.coef = coef;
      cfg.dict = dict;
      cfg.seed = 5;
      std::size_t calls = 0;
      cfg.checkpoint_every = 5;
      cfg.checkpoint = [&](std::size_t, const Dictionary& d) {
        ++calls;
        CHECK(in_cpn(d.padded(), d.support, d.frame, 4));
      };
      const auto res = cdl_train(cfg, s);
      const auto init = random_dictionary(cfg.support, frame, 4, 5);
      CHECK(res.trace.rows[0].objective == doctest::Approx(cdl_objective(init, CoefficientMaps(frame, 2, 4), s, 0.1).total));
      CHECK(res.trace.rows.size() == 21);
      for (const auto& r : res.trace.rows) CHECK(std::isfinite(r.objective));
      CHECK(res.trace.back().objective < res.trace.rows[0].objective);
      CHECK(res.trace.back().objective ==
            doctest::Approx(cdl_objective(res.dict, res.maps, s, 0.1).total).epsilon(1e-9));
      CHECK(in_cpn(res.dict.padded(), cfg.support, frame, 4));
      CHECK(calls == 4);
    }
  }
  SUBCASE("huge lambda keeps maps at zero and the dictionary fixed") {
    for (auto dict : {DictSolver::admm_cns, DictSolver::apg, DictSolver::apg_cns}) {
      CdlConfig cfg;
      cfg.filters = 3;
      cfg.support = Shape::plane(3, 3);
      cfg.iters = 5;
      cfg.lambda = 1e6;
      cfg.rho0 = cfg.sigma0 = 10.0;
      cfg.dict = dict;
      const auto res = cdl_train(cfg, s);
      for (double v : res.maps.data) CHECK(v == 0.0);
      CHECK(oracle::max_abs_diff(res.dict.data, random_dictionary(cfg.support, frame, 3, 0).data) < 1e-12);
    }
  }
  SUBCASE("bad configurations are rejected") {
    CdlConfig cfg;
    cfg.support = Shape::plane(32, 32);
    CHECK_THROWS_AS(cdl_train(cfg, s), ShapeError);
    cfg = CdlConfig{};
    cfg.lambda = -1.0;
    CHECK_THROWS_AS(cdl_train(cfg, s), std::invalid_argument);
    CHECK_THROWS(parse_dict_solver("ksvd"));
    CHECK(parse_coef_solver(to_string(CoefSolver::fista3k)) == CoefSolver::fista3k);
  }
}

TEST_CASE("cdl_train recovers a planted filter") {
  // The alternation is nonconvex, so a single random start can stall; the best of a few seeded
  // starts must find the planted filter.
  const Shape frame = Shape::plane(16, 16), support = Shape::plane(4, 4);
  const auto planted = random_dictionary(support, frame, 1, 99);
  CoefficientMaps x(frame, 1, 1);
  x.data[5 * 16 + 9] = 1.0;
  const auto s = exact_signals(planted, x);
  for (auto [coef, dict] : {std::pair{CoefSolver::admm, DictSolver::admm_cns}, std::pair{CoefSolver::fista, DictSolver::apg_cns}}) {
    CAPTURE(to_string(dict));
    double best_obj = INFINITY;
    Dictionary best_dict;
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      CdlConfig cfg;
      cfg.filters = 1;
      cfg.support = support;
      cfg.lambda = 0.1;
      cfg.iters = 500;
      cfg.coef = coef;
      cfg.dict = dict;
      cfg.seed = seed;
      const auto res = cdl_train(cfg, s);
      if (res.trace.back().objective < best_obj) {
        best_obj = res.trace.back().objective;
        best_dict = res.dict;
      }
    }
    const auto learned = best_dict.padded(), target = planted.padded();
    double best = 0.0;
    for (std::size_t dr = 0; dr < 16; ++dr) {
      for (std::size_t dc = 0; dc < 16; ++dc) {
        double c = 0.0;
        for (std::size_t r = 0; r < 16; ++r)
          for (std::size_t q = 0; q < 16; ++q) c += learned[((r + dr) % 16) * 16 + (q + dc) % 16] * target[r * 16 + q];
        best = std::max(best, std::abs(c));
      }
    }
    CHECK(best >= 0.99);
  }
}
