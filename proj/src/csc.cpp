#include "conprox/csc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "conprox/conv.hpp"
#include "conprox/errors.hpp"
#include "conprox/fft.hpp"
#include "conprox/parallel.hpp"
#include "conprox/prox.hpp"

namespace conprox {

namespace {

struct Spectra {
  FreqBlock dhat;      // N x M
  FreqBlock dhat_conj;
  double lipschitz = 0.0;  // max_n ||d_n||^2
};

Spectra dictionary_spectra(const Dictionary& dict) {
  Spectra s;
  s.dhat = transform_stack(dict.padded(), dict.filters, dict.frame);
  s.dhat_conj = s.dhat;
  for (auto& v : s.dhat_conj.data) v = std::conj(v);
  for (std::size_t n = 0; n < s.dhat.bins; ++n) s.lipschitz = std::max(s.lipschitz, squared_norm(s.dhat.row(n)));
  return s;
}

std::vector<double> prepared_signal(const CscProblem& p, std::size_t k, bool mean_subtract) {
  auto s = p.signals.signal(k);
  std::vector<double> out(s.begin(), s.end());
  if (mean_subtract && !out.empty()) {
    const double mean = std::accumulate(out.begin(), out.end(), 0.0) / static_cast<double>(out.size());
    for (double& v : out) v -= mean;
  }
  return out;
}

// 1/2 ||D x - s||^2 via Parseval, and the l1 norm of x.
CscObjective image_objective(const Spectra& sp, std::span<const double> x, std::span<const cplx> shat,
                             std::size_t m, Shape frame, double lambda) {
  const auto xhat = transform_stack(x, m, frame);
  auto r = apply_bins(sp.dhat, xhat);
  double fid = 0.0;
  for (std::size_t n = 0; n < r.size(); ++n) fid += std::norm(r[n] - shat[n]);
  fid *= 0.5 / static_cast<double>(frame.size());
  double l1 = 0.0;
  for (double v : x) l1 += std::abs(v);
  return {fid + lambda * l1, fid, l1};
}

bool trace_due(std::size_t it, std::size_t iters, std::size_t every) {
  return it % std::max<std::size_t>(every, 1) == 0 || it == iters;
}

// Sums per-image traces row by row. Steps and penalties are averaged, times take the maximum.
ConvergenceTrace combine_traces(const std::vector<ConvergenceTrace>& per_image) {
  ConvergenceTrace out;
  if (per_image.empty()) return out;
  const double k = static_cast<double>(per_image.size());
  for (std::size_t r = 0; r < per_image[0].rows.size(); ++r) {
    TraceRow row = per_image[0].rows[r];
    row.objective = row.fidelity = row.regularizer = row.step = row.rho = 0.0;
    row.primal_residual = row.dual_residual = 0.0;
    for (const auto& t : per_image) {
      const auto& src = t.rows[r];
      row.objective += src.objective;
      row.fidelity += src.fidelity;
      row.regularizer += src.regularizer;
      row.step += src.step / k;
      row.rho += src.rho / k;
      row.primal_residual += src.primal_residual;
      row.dual_residual += src.dual_residual;
      row.time_ms = std::max(row.time_ms, src.time_ms);
    }
    out.rows.push_back(row);
  }
  return out;
}

void check_iters(std::size_t iters, const char* who) {
  if (iters < 1) throw std::invalid_argument(std::string(who) + ": iters must be >= 1");
}

}  // namespace

void CscProblem::validate() const {
  if (!(lambda >= 0.0)) throw std::invalid_argument("csc: lambda must be >= 0");
  if (!(signals.shape == dict.frame)) {
    throw ShapeError("csc: signal shape " + signals.shape.str() + " does not match frame " + dict.frame.str());
  }
  if (signals.count == 0) throw ShapeError("csc: no signals");
  if (dict.filters == 0) throw ShapeError("csc: empty dictionary");
  require_finite(signals.data, "signals");
  require_finite(dict.data, "dictionary");
}

FreqBlock sherman_morrison_solve(const FreqBlock& a, double rho, const FreqBlock& rhs) {
  if (!(rho > 0.0)) throw std::invalid_argument("sherman_morrison_solve: rho must be > 0");
  if (a.bins != rhs.bins || a.width != rhs.width) throw ShapeError("sherman_morrison_solve: shape mismatch");
  FreqBlock x(a.bins, a.width);
  for (std::size_t n = 0; n < a.bins; ++n) {
    const auto an = a.row(n);
    const auto bn = rhs.row(n);
    auto xn = x.row(n);
    cplx ahb = 0.0;
    double aa = 0.0;
    for (std::size_t m = 0; m < a.width; ++m) {
      ahb += std::conj(an[m]) * bn[m];
      aa += std::norm(an[m]);
    }
    const cplx coef = ahb / (rho + aa);
    for (std::size_t m = 0; m < a.width; ++m) xn[m] = (bn[m] - an[m] * coef) / rho;
  }
  ops::count_bin_solves(a.bins);
  return x;
}

CscObjective csc_objective(const Dictionary& dict, const CoefficientMaps& maps, const SignalSet& signals,
                           double lambda) {
  if (!(maps.frame == dict.frame) || maps.filters != dict.filters || maps.signals != signals.count ||
      !(signals.shape == dict.frame)) {
    throw ShapeError("csc_objective: shape mismatch");
  }
  CscObjective out;
  for (std::size_t k = 0; k < signals.count; ++k) {
    const auto fit = conv_sum(dict, maps, k);
    const auto s = signals.signal(k);
    for (std::size_t i = 0; i < fit.size(); ++i) out.fidelity += 0.5 * (fit[i] - s[i]) * (fit[i] - s[i]);
  }
  for (double v : maps.data) out.l1 += std::abs(v);
  out.total = out.fidelity + lambda * out.l1;
  return out;
}

CscResult csc_admm_solve(const CscProblem& p, const CscAdmmOptions& opts, CscAdmmState* state) {
  p.validate();
  check_iters(opts.iters, "csc_admm_solve");
  if (!(opts.relax > 0.0 && opts.relax <= 2.0)) throw std::invalid_argument("csc_admm_solve: relax must be in (0, 2]");
  const std::size_t K = p.signals.count, M = p.dict.filters, N = p.dict.frame.size();
  const Shape frame = p.dict.frame;
  const double rho_init = opts.rho0 > 0.0 ? opts.rho0 : 100.0 * p.lambda + 1.0;

  CscAdmmState local;
  CscAdmmState& st = state ? *state : local;
  if (st.empty() || st.y.signals != K || st.y.filters != M || !(st.y.frame == frame)) {
    st.y = CoefficientMaps(frame, K, M);
    st.u = CoefficientMaps(frame, K, M);
    st.rho.assign(K, rho_init);
    st.iter.assign(K, 0);
  }

  const Spectra sp = dictionary_spectra(p.dict);
  std::vector<ConvergenceTrace> traces(K);

  parallel_for(K, opts.workers, [&](std::size_t k) {
    Stopwatch clock;
    const auto s = prepared_signal(p, k, opts.mean_subtract);
    const auto shat = dft_forward(s, frame);
    FreqBlock dhs(N, M);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < M; ++m) dhs.data[n * M + m] = sp.dhat_conj.data[n * M + m] * shat[n];
    }
    auto y = st.y.maps(k);
    auto u = st.u.maps(k);
    double& rho = st.rho[k];
    std::vector<double> v(M * N), y_prev(M * N), xr(M * N);
    const double ref = std::max(image_objective(sp, y, shat, M, frame, p.lambda).total, 0.5 * squared_norm(s));

    for (std::size_t it = 1; it <= opts.iters; ++it) {
      for (std::size_t i = 0; i < v.size(); ++i) v[i] = y[i] - u[i];
      FreqBlock rhs = transform_stack(v, M, frame);
      for (std::size_t i = 0; i < rhs.data.size(); ++i) rhs.data[i] = dhs.data[i] + rho * rhs.data[i];
      const auto x = inverse_stack(sherman_morrison_solve(sp.dhat_conj, rho, rhs), frame);

      std::copy(y.begin(), y.end(), y_prev.begin());
      double primal = 0.0, dual = 0.0;
      for (std::size_t i = 0; i < xr.size(); ++i) {
        xr[i] = opts.relax * x[i] + (1.0 - opts.relax) * y[i];
        v[i] = xr[i] + u[i];
      }
      soft_threshold_inplace(v, p.lambda / rho);
      for (std::size_t i = 0; i < xr.size(); ++i) {
        y[i] = v[i];
        u[i] += xr[i] - y[i];
        primal += (x[i] - y[i]) * (x[i] - y[i]);
        dual += (y[i] - y_prev[i]) * (y[i] - y_prev[i]);
      }
      primal = std::sqrt(primal);
      dual = rho * std::sqrt(dual);

      ++st.iter[k];
      const double rho_used = rho;
      const auto [rho_new, scale] = balance_penalty(opts.penalty, st.iter[k], rho, primal, dual);
      if (scale != 1.0) {
        for (double& w : u) w *= scale;
      }
      rho = rho_new;

      if (trace_due(it, opts.iters, opts.trace_every)) {
        const auto obj = image_objective(sp, y, shat, M, frame, p.lambda);
        check_divergence(obj.total, ref, opts.divergence_factor, it);
        TraceRow row;
        row.iter = it;
        row.objective = obj.total;
        row.fidelity = obj.fidelity;
        row.regularizer = p.lambda * obj.l1;
        row.rho = rho_used;
        row.time_ms = clock.elapsed_ms();
        row.primal_residual = primal;
        row.dual_residual = dual;
        traces[k].rows.push_back(row);
      }
    }
  });

  return {st.y, combine_traces(traces)};
}

CscResult csc_fista_solve(const CscProblem& p, const CscFistaOptions& opts, CscFistaState* state) {
  p.validate();
  check_iters(opts.iters, "csc_fista_solve");
  opts.step.validate();
  opts.inertial.validate();
  if (opts.variant == CscVariant::fista && opts.step.rule != StepRule::fixed) {
    throw std::invalid_argument("csc_fista_solve: the fista variant takes a fixed step");
  }
  const std::size_t K = p.signals.count, M = p.dict.filters, N = p.dict.frame.size();
  const Shape frame = p.dict.frame;
  const Spectra sp = dictionary_spectra(p.dict);
  const double inv_l = sp.lipschitz > 0.0 ? 1.0 / sp.lipschitz : 1.0;
  const bool three_k = opts.variant == CscVariant::fista3k;

  CscFistaState local;
  CscFistaState& st = state ? *state : local;
  if (st.empty() || st.x.signals != K || st.x.filters != M || !(st.x.frame == frame)) {
    st.x = CoefficientMaps(frame, K, M);
    st.z = CoefficientMaps(frame, K, M);
    st.t.assign(K, opts.inertial.first_t());
    st.steps.assign(K, StepController(inv_l, three_k));
    st.iter.assign(K, 0);
  }
  for (auto& c : st.steps) c.set_fallback(inv_l);

  std::vector<ConvergenceTrace> traces(K);

  parallel_for(K, opts.workers, [&](std::size_t k) {
    Stopwatch clock;
    const auto s = prepared_signal(p, k, opts.mean_subtract);
    const auto shat = dft_forward(s, frame);
    auto x = st.x.maps(k);
    auto z = st.z.maps(k);
    std::vector<double> x_new(M * N);
    const double ref = std::max(image_objective(sp, x, shat, M, frame, p.lambda).total, 0.5 * squared_norm(s));

    for (std::size_t it = 1; it <= opts.iters; ++it) {
      const auto zhat = transform_stack(z, M, frame);
      const auto ghat = freq_gradient_csc(sp.dhat, zhat, shat);
      const auto g = inverse_stack(ghat, frame);

      std::optional<double> cand;
      if (!three_k) {
        cand = opts.step.fixed > 0.0 ? opts.step.fixed : inv_l;
      } else {
        std::vector<double> gs(g.size(), 0.0);
        bool any = false;
        for (std::size_t i = 0; i < g.size(); ++i) {
          if (x[i] != 0.0) {
            gs[i] = g[i];
            any = true;
          }
        }
        // Empty support (first iteration from zero): standard Cauchy step along the full gradient.
        const FreqBlock dir = any ? transform_stack(gs, M, frame) : ghat;
        const auto phi = apply_bins(sp.dhat, dir);
        const double num = any ? squared_norm(gs) : squared_norm(g);
        cand = cauchy_from_norms(num, squared_norm(phi) / static_cast<double>(N));
        if (cand) *cand *= opts.step.c;
      }
      const double prev_step = st.steps[k].previous().value_or(0.0);
      const double alpha = st.steps[k].accept(cand);
      if (three_k && alpha < prev_step) throw std::logic_error("fista3k: step decreased");

      for (std::size_t i = 0; i < x_new.size(); ++i) x_new[i] = z[i] - alpha * g[i];
      soft_threshold_inplace(x_new, alpha * p.lambda);

      ++st.iter[k];
      const auto in = inertial_next(opts.inertial, st.t[k], st.iter[k]);
      for (std::size_t i = 0; i < x_new.size(); ++i) {
        z[i] = x_new[i] + in.gamma * (x_new[i] - x[i]);
        x[i] = x_new[i];
      }
      st.t[k] = in.t;

      if (trace_due(it, opts.iters, opts.trace_every)) {
        const auto obj = image_objective(sp, x, shat, M, frame, p.lambda);
        check_divergence(obj.total, ref, opts.divergence_factor, it);
        TraceRow row;
        row.iter = it;
        row.objective = obj.total;
        row.fidelity = obj.fidelity;
        row.regularizer = p.lambda * obj.l1;
        row.step = alpha;
        row.time_ms = clock.elapsed_ms();
        traces[k].rows.push_back(row);
      }
    }
  });

  return {st.x, combine_traces(traces)};
}

CbpdnResult cbpdn_solve(const Dictionary& dict, std::span<const double> signal, double lambda, std::size_t iters) {
  CscProblem p{dict, SignalSet(dict.frame, 1, std::vector<double>(signal.begin(), signal.end())), lambda};
  CscAdmmOptions opts;
  opts.iters = iters;
  opts.trace_every = iters;
  auto res = csc_admm_solve(p, opts);
  const double obj = csc_objective(dict, res.maps, p.signals, lambda).total;
  return {std::move(res.maps), obj};
}

}  // namespace conprox
