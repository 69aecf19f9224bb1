// Acceptance checks 1-9. Prints one PASS/FAIL line per criterion; exit status is the number of failures.
// Usage: acceptance [criterion numbers...]

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "conprox/anomaly.hpp"
#include "conprox/bench.hpp"
#include "conprox/cdl.hpp"
#include "conprox/consensus.hpp"
#include "conprox/conv.hpp"
#include "conprox/csc.hpp"
#include "conprox/fft.hpp"
#include "conprox/prox.hpp"
#include "conprox/step_rules.hpp"
#include "conprox/trace.hpp"
#include "oracles.hpp"

using namespace conprox;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) {
      pass = false;
      if (!detail.empty()) detail += "; ";
      detail += "failed: " + what;
    }
  }
  void note(const std::string& s) {
    if (!detail.empty()) detail += "; ";
    detail += s;
  }
};

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

// Dense least-squares term 1/2 ||A x - b||^2.
struct Lsq {
  std::vector<double> a, b;
  std::size_t rows, cols;

  Vec apply(std::span<const double> v) const {
    Vec out(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[r] += a[r * cols + c] * v[c];
    return out;
  }
  Vec adjoint(std::span<const double> v) const {
    Vec out(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) out[c] += a[r * cols + c] * v[r];
    return out;
  }
  double value(std::span<const double> x) const {
    auto ax = apply(x);
    double s = 0.0;
    for (std::size_t i = 0; i < rows; ++i) s += 0.5 * (ax[i] - b[i]) * (ax[i] - b[i]);
    return s;
  }
  Vec gradient(std::span<const double> x) const {
    auto ax = apply(x);
    for (std::size_t i = 0; i < rows; ++i) ax[i] -= b[i];
    return adjoint(ax);
  }
  LinearOperator op() const {
    return {[this](std::span<const double> v) { return apply(v); },
            [this](std::span<const double> v) { return adjoint(v); }};
  }
};

std::vector<SmoothTerm> smooth_terms(const std::vector<Lsq>& lsq) {
  std::vector<SmoothTerm> out;
  for (const auto& t : lsq) {
    SmoothTerm s;
    s.value = [&t](std::span<const double> x) { return t.value(x); };
    s.gradient = [&t](std::span<const double> x) { return t.gradient(x); };
    s.op = t.op();
    out.push_back(std::move(s));
  }
  return out;
}

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// ---------------------------------------------------------------------------

Outcome criterion1() {
  Outcome out;
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> replicas(1, 8), dims(1, 32), extra(0, 8);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  double worst_pg = 0.0, worst_split = 0.0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::size_t r = replicas(rng), n = dims(rng), m = n / 2 + 1 + extra(rng);
    std::vector<Lsq> lsq;
    double lip = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      lsq.push_back({oracle::random_vector(m * n, rng, 1.0 / std::sqrt(double(m))), oracle::random_vector(m, rng), m, n});
      lip += squared_norm(lsq.back().a) / double(r);
    }
    const auto terms = smooth_terms(lsq);
    const double alpha = (0.2 + 1.5 * unit(rng)) / lip, lambda = 0.5 * unit(rng), rho = 5.0 * unit(rng);
    const double alpha_c = consensus_alpha(alpha, rho);
    const auto prox = ProxTerm::l1(lambda);

    // Iterate the PG-consensus map and compare each step with PG on the mean objective.
    auto x = oracle::random_vector(n, rng);
    for (int it = 0; it < 5; ++it) {
      Vec mean_grad(n, 0.0);
      for (const auto& t : lsq) {
        const auto g = t.gradient(x);
        for (std::size_t j = 0; j < n; ++j) mean_grad[j] += g[j] / double(r);
      }
      Vec want(n);
      for (std::size_t j = 0; j < n; ++j) want[j] = x[j] - alpha_c * mean_grad[j];
      want = soft_threshold(want, alpha_c * lambda);
      const double scale = std::max(1.0, inf_norm(want));

      const auto got = pg_consensus_step(std::span<const double>(x), terms, prox, alpha_c);
      std::vector<Vec> points(r, x);
      const auto got_pts = pg_consensus_step(std::span<const Vec>(points), terms, prox, alpha_c);
      const auto split = split_consensus_step(x, terms, prox, alpha, rho);
      worst_pg = std::max({worst_pg, oracle::max_abs_diff(got, want) / scale, oracle::max_abs_diff(got_pts, want) / scale});
      worst_split = std::max(worst_split, oracle::max_abs_diff(split, got) / scale);
      x = got;
    }
  }
  out.require(worst_pg <= 1e-12, "PG-consensus vs mean-objective PG");
  out.require(worst_split <= 1e-12, "split alternation vs single step");
  out.note("max dev PG " + fmt("%.2e", worst_pg) + ", split " + fmt("%.2e", worst_split) + " (tol 1e-12)");
  return out;
}

Outcome criterion2() {
  Outcome out;
  std::mt19937_64 rng(77);
  std::normal_distribution<double> normal;

  // Sherman-Morrison vs dense per-bin solves.
  double sm = 0.0;
  for (std::size_t m = 1; m <= 8; ++m) {
    FreqBlock a(16, m), b(16, m);
    for (auto& v : a.data) v = {normal(rng), normal(rng)};
    for (auto& v : b.data) v = {normal(rng), normal(rng)};
    const double rho = 0.05 + std::abs(normal(rng));
    const auto got = sherman_morrison_solve(a, rho, b);
    for (std::size_t n = 0; n < 16; ++n) {
      std::vector<cplx> dense(m * m), rhs(b.row(n).begin(), b.row(n).end());
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < m; ++j) dense[i * m + j] = a.row(n)[i] * std::conj(a.row(n)[j]) + (i == j ? rho : 0.0);
      const auto want = oracle::dense_solve(dense, rhs, m);
      double num = 0.0, den = 0.0;
      for (std::size_t i = 0; i < m; ++i) {
        num += std::norm(got.row(n)[i] - want[i]);
        den += std::norm(want[i]);
      }
      sm = std::max(sm, std::sqrt(num / den));
    }
  }
  out.require(sm <= 1e-10, "Sherman-Morrison vs dense");

  // Frequency-domain gradients vs central differences of the spatial objective.
  double grad = 0.0;
  for (Shape frame : {Shape::line(16), Shape::plane(4, 4), Shape::plane(6, 5)}) {
    const std::size_t m = 3;
    const auto filters = oracle::random_vector(m * frame.size(), rng), maps = oracle::random_vector(m * frame.size(), rng);
    const auto signal = oracle::random_vector(frame.size(), rng);
    const auto dhat = transform_stack(filters, m, frame), xhat = transform_stack(maps, m, frame);
    const auto shat = dft_forward(signal, frame);
    const auto gx = inverse_stack(freq_gradient_csc(dhat, xhat, shat), frame);
    const auto gd = inverse_stack(freq_gradient_dict(xhat, dhat, shat), frame);
    auto fx = [&](const std::vector<double>& v) {
      return oracle::half_sq_residual(oracle::conv_sum_spatial(filters, v, m, frame), signal);
    };
    auto fd = [&](const std::vector<double>& v) {
      return oracle::half_sq_residual(oracle::conv_sum_spatial(v, maps, m, frame), signal);
    };
    grad = std::max({grad, oracle::rel_err(gx, oracle::fd_gradient(fx, maps)),
                     oracle::rel_err(gd, oracle::fd_gradient(fd, filters))});
  }
  out.require(grad <= 1e-6, "gradients vs finite differences");

  // conv_sum vs spatial circular convolution.
  double conv = 0.0;
  for (auto [frame, support] : {std::pair{Shape::plane(16, 16), Shape::plane(8, 8)},
                                std::pair{Shape::plane(12, 20), Shape::plane(5, 3)}, std::pair{Shape::line(40), Shape::line(7)}}) {
    Dictionary d(support, frame, 3);
    d.data = oracle::random_vector(d.data.size(), rng);
    CoefficientMaps x(frame, 2, 3);
    x.data = oracle::random_vector(x.data.size(), rng);
    const auto padded = d.padded();
    for (std::size_t k = 0; k < 2; ++k) {
      std::vector<double> maps(x.maps(k).begin(), x.maps(k).end());
      conv = std::max(conv, oracle::max_abs_diff(conv_sum(d, x, k), oracle::conv_sum_spatial(padded, maps, 3, frame)));
    }
  }
  out.require(conv <= 1e-10, "conv_sum vs spatial");

  // Cauchy and consensus-Cauchy steps vs golden-section line search.
  double cauchy = 0.0;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Lsq> lsq;
    for (int i = 0; i < 3; ++i) lsq.push_back({oracle::random_vector(7 * 4, rng), oracle::random_vector(7, rng), 7, 4});
    const auto x = oracle::random_vector(4, rng);
    const auto g0 = lsq[0].gradient(x);
    auto line0 = [&](double a) {
      Vec y(4);
      for (std::size_t j = 0; j < 4; ++j) y[j] = x[j] - a * g0[j];
      return lsq[0].value(y);
    };
    const auto c0 = cauchy_step(g0, lsq[0].op(), CauchyMode::standard);
    const double b0 = oracle::golden_section(line0, 0.0, 100.0);
    cauchy = std::max(cauchy, c0 ? std::abs(*c0 - b0) / b0 : 1.0);

    Vec gbar(4, 0.0);
    std::vector<LinearOperator> ops;
    for (const auto& t : lsq) {
      const auto g = t.gradient(x);
      for (std::size_t j = 0; j < 4; ++j) gbar[j] += g[j] / 3.0;
      ops.push_back(t.op());
    }
    auto line = [&](double a) {
      Vec y(4);
      for (std::size_t j = 0; j < 4; ++j) y[j] = x[j] - a * gbar[j];
      double s = 0.0;
      for (const auto& t : lsq) s += t.value(y) / 3.0;
      return s;
    };
    const auto cc = consensus_cauchy(gbar, ops);
    const double bc = oracle::golden_section(line, 0.0, 100.0);
    cauchy = std::max(cauchy, cc ? std::abs(*cc - bc) / bc : 1.0);
  }
  out.require(cauchy <= 1e-6, "Cauchy vs golden section");

  // BB-v3 is the geometric mean of BB-v1 and BB-v2.
  double bb = 0.0;
  int checked = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const auto z = oracle::random_vector(12, rng), r = oracle::random_vector(12, rng);
    const auto p = secant_pair(z, r);
    const auto v1 = bb_step(p, BbMode::v1), v2 = bb_step(p, BbMode::v2), v3 = bb_step(p, BbMode::v3);
    if (!v1 || !v2) continue;
    ++checked;
    bb = std::max(bb, v3 ? std::abs(*v3 - std::sqrt(*v1 * *v2)) / *v3 : 1.0);
  }
  out.require(checked > 0 && bb <= 1e-12, "BB-v3 geometric mean");

  out.note("SM " + fmt("%.1e", sm) + ", grad " + fmt("%.1e", grad) + ", conv " + fmt("%.1e", conv) + ", cauchy " +
           fmt("%.1e", cauchy) + ", bb3 " + fmt("%.1e", bb) + " over " + std::to_string(checked) + " pairs");
  return out;
}

Outcome criterion3() {
  Outcome out;
  std::size_t checks = 0;
  const std::vector<std::pair<InertialScheme, std::string>> schemes{
      {InertialScheme::nesterov, "nesterov"}, {InertialScheme::linear, "linear"}, {InertialScheme::generalized, "generalized"}};
  for (const auto& [scheme, name] : schemes) {
    for (auto [a, b] : {std::pair{50.0, 2.0}, std::pair{80.0, 2.0}, std::pair{3.0, 4.0}}) {
      const InertialConfig cfg{scheme, a, b};
      double t = cfg.first_t();
      bool ok = true;
      for (std::size_t k = 1; k <= 10000; ++k) {
        const auto s = inertial_next(cfg, t, k);
        ok = ok && s.t * s.t - s.t <= t * t && s.gamma >= 0.0 && s.gamma < 1.0;
        t = s.t;
        ++checks;
      }
      out.require(ok, name + " a=" + fmt("%g", a) + " b=" + fmt("%g", b));
    }
  }
  out.note(std::to_string(checks) + " steps checked, k <= 10000");
  return out;
}

// Criteria 4 and 6 share the two trained dictionaries.
struct PipelineRun {
  CdlResult result;
  double seconds = 0.0;
};

std::optional<std::vector<PipelineRun>> g_pipelines;
const SignalSet& train_images() {
  static const SignalSet s = synthetic_images(64, 5, 11);
  return s;
}

const std::vector<PipelineRun>& pipelines() {
  if (!g_pipelines) {
    const auto high = split_lowpass(train_images(), Preprocess::highpass, 5.0).high;
    g_pipelines.emplace();
    for (auto [c, d] : {std::pair{CoefSolver::admm, DictSolver::admm_cns}, std::pair{CoefSolver::fista, DictSolver::apg_cns}}) {
      CdlConfig cfg;
      cfg.filters = 16;
      cfg.support = Shape::plane(8, 8);
      cfg.lambda = 0.1;
      cfg.iters = 250;
      cfg.seed = 1;
      cfg.coef = c;
      cfg.dict = d;
      Stopwatch clk;
      auto r = cdl_train(cfg, high);
      g_pipelines->push_back({std::move(r), clk.elapsed_ms() / 1000.0});
    }
  }
  return *g_pipelines;
}

Outcome criterion4() {
  Outcome out;
  const auto& runs = pipelines();
  const double admm = runs[0].result.trace.final_objective(), apg = runs[1].result.trace.final_objective();
  const double secs = runs[0].seconds + runs[1].seconds;
  out.require(apg <= 1.02 * admm, "FISTA-APGCns <= 1.02 x ADMM-ADMMCns");
  out.require(secs <= 300.0, "runtime <= 5 min");
  out.note("objective FISTA-APGCns " + fmt("%.4f", apg) + " vs ADMM-ADMMCns " + fmt("%.4f", admm) + ", ratio " +
           fmt("%.4f", apg / admm) + " (tol 1.02), " + fmt("%.1f", secs) + " s");
  return out;
}

Outcome criterion5() {
  Outcome out;
  const Shape frame = Shape::plane(64, 64), support = Shape::plane(8, 8);
  const std::size_t k = 20, m = 36;
  const auto images = split_lowpass(synthetic_images(64, k, 21), Preprocess::highpass, 5.0).high;
  CoefficientMaps maps(frame, k, m);
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> normal(0.0, 0.1);
  for (double& v : maps.data) v = unit(rng) < 0.05 ? normal(rng) : 0.0;
  const auto data = make_dict_data(maps, images, support);
  const auto d0 = random_dictionary(support, frame, m, 3);
  const double sigma0 = 100.0 * 0.1 + 1.0;

  DictUpdateOptions opts;
  const std::size_t reps = 5;
  auto measure = [&](auto update, std::uint64_t& solves) {
    auto state = init_dict_state(d0, k, sigma0, opts.inertial, 3);
    update(data, state, opts);  // warm-up
    ops::reset();
    update(data, state, opts);
    solves = ops::snapshot().bin_solves;
    Stopwatch clk;
    for (std::size_t i = 0; i < reps; ++i) update(data, state, opts);
    return clk.elapsed_ms() / double(reps);
  };
  std::uint64_t admm_solves = 0, apg_solves = 0;
  const double admm_ms = measure(dict_admm_consensus_update, admm_solves);
  const double apg_ms = measure(dict_apg_consensus_update, apg_solves);
  const std::uint64_t nk = frame.size() * k;
  out.require(apg_ms <= 0.8 * admm_ms, "time ratio <= 0.8");
  out.require(apg_solves == 0 && admm_solves == nk, "bin solves 0 vs N*K");
  out.note("APG-cns " + fmt("%.1f", apg_ms) + " ms vs ADMM-cns " + fmt("%.1f", admm_ms) + " ms per iteration, ratio " +
           fmt("%.3f", apg_ms / admm_ms) + " (tol 0.8); bin solves " + std::to_string(apg_solves) + " vs " +
           std::to_string(admm_solves) + " (N*K = " + std::to_string(nk) + ")");
  return out;
}

Outcome criterion6() {
  Outcome out;
  const auto& runs = pipelines();
  const auto test = synthetic_images(64, 5, 12);
  DenoiseOptions opts;
  opts.sigma = 0.1;
  opts.seed = 1000;
  const auto a = denoise_evaluate(runs[0].result.dict, test, opts);
  const auto b = denoise_evaluate(runs[1].result.dict, test, opts);
  double worst = 0.0;
  std::string per;
  for (std::size_t i = 0; i < test.count; ++i) {
    const double gap = std::abs(a.best_psnr[i] - b.best_psnr[i]);
    worst = std::max(worst, gap);
    per += (i ? " " : "") + fmt("%.2f", gap);
  }
  out.require(worst <= 0.5, "best-lambda PSNR gap <= 0.5 dB");
  out.note("per-image gap [" + per + "] dB, max " + fmt("%.3f", worst) + " (tol 0.5); mean best PSNR " +
           fmt("%.2f", (a.best_psnr[0] + a.best_psnr[1] + a.best_psnr[2] + a.best_psnr[3] + a.best_psnr[4]) / 5) +
           " dB, noisy " + fmt("%.2f", a.noisy_psnr[0]) + " dB");
  return out;
}

Outcome criterion7() {
  Outcome out;
  double sum2 = 0.0, sum10 = 0.0;
  std::string per;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto all = split_lowpass(synthetic_images(64, 10, 100 + seed), Preprocess::highpass, 5.0).high;
    const auto heldout = split_lowpass(synthetic_images(64, 5, 200 + seed), Preprocess::highpass, 5.0).high;
    SignalSet two(all.shape, 2);
    std::copy(all.data.begin(), all.data.begin() + 2 * all.shape.size(), two.data.begin());
    CdlConfig cfg;
    cfg.filters = 16;
    cfg.iters = 100;
    cfg.seed = seed;
    const auto d2 = cdl_train(cfg, two).dict;
    const auto d10 = cdl_train(cfg, all).dict;
    const double o2 = heldout_objective(d2, heldout, 0.1, 200), o10 = heldout_objective(d10, heldout, 0.1, 200);
    sum2 += o2 / 3.0;
    sum10 += o10 / 3.0;
    per += (seed > 1 ? " " : "") + fmt("%.3f", o10) + "/" + fmt("%.3f", o2);
  }
  out.require(sum10 <= sum2, "K=10 held-out objective <= K=2");
  out.note("mean held-out objective K=10 " + fmt("%.4f", sum10) + " vs K=2 " + fmt("%.4f", sum2) + "; per seed [" + per + "]");
  return out;
}

Outcome criterion8() {
  Outcome out;
  Stopwatch clk;
  const std::size_t sensors = 6, length = 2048, prefix = 1024;
  const auto syn = synthetic_series(sensors, length, 3, 1, prefix);
  SignalSet train(Shape::line(prefix), sensors);
  for (std::size_t p = 0; p < sensors; ++p)
    std::copy_n(syn.table.series.signal(p).begin(), prefix, train.signal(p).begin());
  SeriesDictConfig sc;
  sc.filters = 8;
  sc.length = 32;
  sc.lambda = 0.05;
  sc.iters = 200;
  sc.seed = 1;
  const auto dicts = train_series_dictionaries(train, sc);

  AnomalyProblem prob;
  prob.series = syn.table.series;
  for (const auto& d : dicts) prob.dicts.push_back(with_frame(d, Shape::line(length)));
  prob.lambda = 0.05;
  prob.beta = 0.2;
  prob.group_per_timestep = true;
  AnomalyOptions opts;
  opts.iters = 500;
  const auto apg = caddict_apg_consensus(prob, opts);
  const auto admm = caddict_admm_consensus(prob, opts);
  const double secs = clk.elapsed_ms() / 1000.0;

  const double fa = apg.trace.final_objective(), fb = admm.trace.final_objective();
  const double rel = std::abs(fa - fb) / std::min(fa, fb);
  FlagOptions fo;
  fo.merge_gap = 8;
  fo.min_length = 4;
  const auto wa = detect_anomalies(apg.solution.score, fo).windows;
  const auto wb = detect_anomalies(admm.solution.score, fo).windows;
  bool same = wa.size() == wb.size();
  for (std::size_t i = 0; same && i < wa.size(); ++i) same = wa[i].begin == wb[i].begin && wa[i].end == wb[i].end;
  std::size_t hit = 0;
  for (const auto& inj : syn.injected) {
    hit += std::any_of(wa.begin(), wa.end(), [&](const Window& w) { return w.begin < inj.end && inj.begin < w.end; });
  }
  out.require(rel <= 0.01, "objectives within 1%");
  out.require(same, "identical flagged windows");
  out.require(hit == syn.injected.size(), "every injected window flagged");
  out.require(secs <= 60.0, "runtime <= 60 s");
  std::string flagged;
  for (const auto& w : wa) flagged += (flagged.empty() ? "" : " ") + ("[" + std::to_string(w.begin) + "," + std::to_string(w.end) + ")");
  out.note("objective rel diff " + fmt("%.2e", rel) + " (tol 1e-2); flagged " + flagged + "; injected hit " +
           std::to_string(hit) + "/" + std::to_string(syn.injected.size()) + "; " + fmt("%.1f", secs) + " s");
  return out;
}

Outcome criterion9() {
  Outcome out;
  std::mt19937_64 rng(9);

  // Scalar prox optimality against a fine grid.
  double worst = 0.0;
  const auto x = oracle::random_vector(30, rng, 2.0);
  for (double gamma : {0.0, 0.25, 1.0, 3.0}) {
    const auto y = soft_threshold(x, gamma);
    for (std::size_t i = 0; i < x.size(); ++i) {
      auto f = [&](double u) { return 0.5 * (u - x[i]) * (u - x[i]) + gamma * std::abs(u); };
      double best = f(0.0);
      for (int j = -100000; j <= 100000; ++j) best = std::min(best, f(j * 1e-4));
      worst = std::max(worst, f(y[i]) - best);
    }
  }
  out.require(worst <= 1e-12, "soft_threshold grid optimality");

  // Block shrinkage: the minimizer lies on the ray through r, so a radial grid is exhaustive.
  double worst_block = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = oracle::random_vector(5, rng);
    const double tau = 2.0 * std::abs(oracle::random_vector(1, rng)[0]);
    const auto s = block_l2_shrink(r, tau);
    const double nr = std::sqrt(squared_norm(r));
    auto f = [&](double c) { return 0.5 * (c - nr) * (c - nr) + tau * std::abs(c); };
    double best = f(0.0);
    for (int j = 0; j <= 100000; ++j) best = std::min(best, f(j * 1e-4 * (nr + 1.0)));
    std::vector<double> d(5);
    for (std::size_t i = 0; i < 5; ++i) d[i] = s[i] - r[i];
    const double fs = 0.5 * squared_norm(d) + tau * std::sqrt(squared_norm(s));
    worst_block = std::max(worst_block, fs - best);
  }
  out.require(worst_block <= 1e-12, "block_l2_shrink grid optimality");

  // Projections: idempotence, unit norm, support.
  bool proj_ok = true;
  for (auto [support, frame] : {std::pair{Shape::plane(3, 3), Shape::plane(8, 8)}, std::pair{Shape::plane(8, 8), Shape::plane(64, 64)},
                                std::pair{Shape::line(32), Shape::line(256)}}) {
    const ConstraintSetPN set{support, frame};
    for (int trial = 0; trial < 10; ++trial) {
      const auto z = oracle::random_vector(frame.size(), rng);
      const auto p = project_cpn(z, set);
      proj_ok = proj_ok && std::abs(std::sqrt(squared_norm(p)) - 1.0) <= 1e-12;
      for (std::size_t i = 0; i < p.size(); ++i) proj_ok = proj_ok && (set.in_support(i) || p[i] == 0.0);
      proj_ok = proj_ok && oracle::max_abs_diff(project_cpn(p, set), p) <= 1e-14 && set.contains(p);
    }
  }
  out.require(proj_ok, "project_cpn unit norm, support, idempotence");

  bool cons_ok = true;
  for (std::size_t r = 1; r <= 8; ++r) {
    const auto v = oracle::random_vector(r * 17, rng);
    const auto p = project_consensus(v, r);
    cons_ok = cons_ok && ConsensusSet{r}.contains(p) && oracle::max_abs_diff(project_consensus(p, r), p) <= 1e-15;
  }
  out.require(cons_ok, "project_consensus idempotence");

  // Filters in a stack keep their own constraint.
  std::size_t repl = 0;
  const Shape frame = Shape::plane(16, 16), support = Shape::plane(4, 4);
  const auto stack = project_filters(oracle::random_vector(6 * frame.size(), rng), support, frame, 6, 1, repl);
  bool stack_ok = repl == 0;
  for (std::size_t m = 0; m < 6; ++m) {
    std::span<const double> f(stack.data() + m * frame.size(), frame.size());
    stack_ok = stack_ok && ConstraintSetPN{support, frame}.contains(f);
  }
  out.require(stack_ok, "project_filters");

  out.note("prox grid excess " + fmt("%.1e", std::max(worst, worst_block)) + " (tol 1e-12); projections checked");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  const std::map<int, std::function<Outcome()>> criteria{
      {1, criterion1}, {2, criterion2}, {3, criterion3}, {4, criterion4}, {5, criterion5},
      {6, criterion6}, {7, criterion7}, {8, criterion8}, {9, criterion9}};
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::stoi(argv[i]));
  int failures = 0;
  for (const auto& [n, run] : criteria) {
    if (!wanted.empty() && !wanted.count(n)) continue;
    Outcome o;
    try {
      o = run();
    } catch (const std::exception& e) {
      o.pass = false;
      o.detail = std::string("exception: ") + e.what();
    }
    std::printf("criterion %d: %s  %s\n", n, o.pass ? "PASS" : "FAIL", o.detail.c_str());
    std::fflush(stdout);
    failures += o.pass ? 0 : 1;
  }
  return failures;
}
