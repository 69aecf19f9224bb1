#include "conprox/anomaly.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "conprox/cdl.hpp"
#include "conprox/conv.hpp"
#include "conprox/csc.hpp"
#include "conprox/errors.hpp"
#include "conprox/fft.hpp"
#include "conprox/parallel.hpp"
#include "conprox/prox.hpp"

namespace conprox {

void AnomalyProblem::validate() const {
  if (!(lambda >= 0.0) || !(beta >= 0.0)) throw std::invalid_argument("anomaly: lambda and beta must be >= 0");
  if (series.count == 0) throw ShapeError("anomaly: no series");
  if (dicts.size() != series.count) {
    throw ShapeError("anomaly: need one dictionary per series (" + std::to_string(series.count) + "), got " +
                     std::to_string(dicts.size()));
  }
  for (const auto& d : dicts) {
    if (!(d.frame == series.shape)) throw ShapeError("anomaly: dictionary frame does not match series length");
    if (d.filters != dicts[0].filters) throw ShapeError("anomaly: dictionaries differ in filter count");
    require_finite(d.data, "anomaly dictionary");
  }
  require_finite(series.data, "series");
}

namespace {

struct SeriesSpectra {
  std::vector<FreqBlock> dhat;  // per series, T x M
  std::vector<FreqBlock> dconj;
  std::vector<std::vector<cplx>> shat;
  double lipschitz = 0.0;  // bound for the mean normal operator
};

SeriesSpectra series_spectra(const AnomalyProblem& p, unsigned workers) {
  const std::size_t P = p.series_count();
  SeriesSpectra sp;
  sp.dhat.resize(P);
  sp.dconj.resize(P);
  sp.shat.resize(P);
  parallel_for(P, workers, [&](std::size_t i) {
    sp.dhat[i] = transform_stack(p.dicts[i].padded(), p.filters(), p.series.shape);
    sp.dconj[i] = sp.dhat[i];
    for (auto& v : sp.dconj[i].data) v = std::conj(v);
    sp.shat[i] = dft_forward(p.series.signal(i), p.series.shape);
  });
  const std::size_t bins = p.series.shape.size();
  for (std::size_t n = 0; n < bins; ++n) {
    double s = 0.0;
    for (const auto& d : sp.dhat) s += squared_norm(d.row(n));
    sp.lipschitz = std::max(sp.lipschitz, s / static_cast<double>(P));
  }
  return sp;
}

// s_p - D_p x for every series.
SignalSet residuals(const AnomalyProblem& p, const SeriesSpectra& sp, std::span<const double> x, unsigned workers) {
  const Shape frame = p.series.shape;
  const auto xhat = transform_stack(x, p.filters(), frame);
  SignalSet r(frame, p.series_count());
  parallel_for(p.series_count(), workers, [&](std::size_t i) {
    const auto fit = dft_inverse_real(apply_bins(sp.dhat[i], xhat), frame);
    const auto s = p.series.signal(i);
    auto out = r.signal(i);
    for (std::size_t t = 0; t < fit.size(); ++t) out[t] = s[t] - fit[t];
  });
  return r;
}

AnomalyObjective objective_from(const AnomalyProblem& p, const SignalSet& r, std::span<const double> x,
                                const SignalSet& e) {
  AnomalyObjective o;
  for (std::size_t i = 0; i < r.data.size(); ++i) {
    const double d = e.data[i] - r.data[i];
    o.fidelity += 0.5 * d * d;
  }
  for (double v : x) o.l1 += std::abs(v);
  const std::size_t P = p.series_count(), T = p.series.shape.size();
  if (p.group_per_timestep) {
    for (std::size_t t = 0; t < T; ++t) {
      double s = 0.0;
      for (std::size_t i = 0; i < P; ++i) s += e.data[i * T + t] * e.data[i * T + t];
      o.group += std::sqrt(s);
    }
  } else {
    for (std::size_t i = 0; i < P; ++i) o.group += std::sqrt(squared_norm(e.signal(i)));
  }
  o.total = o.fidelity + p.lambda * static_cast<double>(P) * o.l1 + (o.group > 0.0 ? p.beta * o.group : 0.0);
  return o;
}

std::vector<std::vector<cplx>> spectra_minus(const SeriesSpectra& sp, const SignalSet& e, Shape frame) {
  std::vector<std::vector<cplx>> out(sp.shat.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    const auto eh = dft_forward(e.signal(i), frame);
    out[i] = sp.shat[i];
    for (std::size_t n = 0; n < eh.size(); ++n) out[i][n] -= eh[n];
  }
  return out;
}

AnomalySolution make_solution(const AnomalyProblem& p, std::span<const double> x, SignalSet e) {
  AnomalySolution sol;
  const std::size_t P = p.series_count();
  sol.maps = CoefficientMaps(p.series.shape, P, p.filters());
  for (std::size_t i = 0; i < P; ++i) std::copy(x.begin(), x.end(), sol.maps.maps(i).begin());
  sol.score = anomaly_score(e);
  sol.anomalies = std::move(e);
  return sol;
}

std::vector<double> initial_maps(const AnomalyProblem& p, const AnomalyOptions& opts) {
  const std::size_t n = p.filters() * p.series.shape.size();
  if (opts.init.empty()) return std::vector<double>(n, 0.0);
  if (opts.init.size() != n) throw ShapeError("anomaly: warm-start maps have the wrong size");
  require_finite(opts.init, "anomaly warm start");
  return opts.init;
}

TraceRow trace_row(std::size_t it, const AnomalyProblem& p, const AnomalyObjective& o, double step, double rho,
                   double ms) {
  TraceRow row;
  row.iter = it;
  row.objective = o.total;
  row.fidelity = o.fidelity;
  row.regularizer = o.total - o.fidelity;
  row.step = step;
  row.rho = rho;
  row.time_ms = ms;
  return row;
}

}  // namespace

AnomalyObjective caddict_objective(const AnomalyProblem& p, std::span<const double> x, const SignalSet& e) {
  p.validate();
  if (x.size() != p.filters() * p.series.shape.size()) throw ShapeError("caddict_objective: maps size mismatch");
  if (e.count != p.series_count() || !(e.shape == p.series.shape)) throw ShapeError("caddict_objective: anomaly shape");
  const auto sp = series_spectra(p, 1);
  return objective_from(p, residuals(p, sp, x, 1), x, e);
}

SignalSet anomaly_update(const AnomalyProblem& p, const SignalSet& r) {
  SignalSet e(r.shape, r.count);
  if (std::isinf(p.beta)) return e;
  const std::size_t P = r.count, T = r.shape.size();
  if (p.group_per_timestep) {
    std::vector<double> col(P);
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t i = 0; i < P; ++i) col[i] = r.data[i * T + t];
      const auto s = block_l2_shrink(col, p.beta);
      for (std::size_t i = 0; i < P; ++i) e.data[i * T + t] = s[i];
    }
  } else {
    for (std::size_t i = 0; i < P; ++i) {
      const auto s = block_l2_shrink(r.signal(i), p.beta);
      std::copy(s.begin(), s.end(), e.signal(i).begin());
    }
  }
  return e;
}

AnomalyResult caddict_apg_consensus(const AnomalyProblem& p, const AnomalyOptions& opts) {
  p.validate();
  if (opts.iters < 1) throw std::invalid_argument("caddict_apg_consensus: iters must be >= 1");
  opts.step.validate();
  opts.inertial.validate();
  const std::size_t P = p.series_count(), M = p.filters();
  const Shape frame = p.series.shape;
  const std::size_t T = frame.size();
  const double inv_p = 1.0 / static_cast<double>(P);
  const auto sp = series_spectra(p, opts.workers);

  std::vector<double> x = initial_maps(p, opts), z = x, x_new(M * T);
  SignalSet e(frame, P);
  double t = opts.inertial.first_t();
  StepController steps(sp.lipschitz > 0.0 ? 1.0 / sp.lipschitz : 1.0, opts.step.rule == StepRule::fista3k);
  std::optional<FreqBlock> prev_zhat;

  // mean_p D_p^H D_p v, per bin.
  auto mean_normal = [&](const FreqBlock& v) {
    FreqBlock out(v.bins, v.width);
    for (std::size_t i = 0; i < P; ++i) {
      const auto dv = apply_bins(sp.dhat[i], v);
      for (std::size_t n = 0; n < v.bins; ++n) {
        for (std::size_t m = 0; m < M; ++m) out.data[n * M + m] += inv_p * sp.dconj[i].data[n * M + m] * dv[n];
      }
    }
    ops::count_bin_products(P * v.bins);
    return out;
  };
  auto mean_energy = [&](const FreqBlock& v) {
    double s = 0.0;
    for (std::size_t i = 0; i < P; ++i) s += squared_norm(apply_bins(sp.dhat[i], v));
    return inv_p * s;
  };

  AnomalyResult res;
  Stopwatch clock;
  auto target = spectra_minus(sp, e, frame);
  const double ref = objective_from(p, residuals(p, sp, x, opts.workers), x, e).total;

  for (std::size_t it = 1; it <= opts.iters; ++it) {
    const FreqBlock zhat = transform_stack(z, M, frame);
    std::vector<FreqBlock> grads(P);
    parallel_for(P, opts.workers, [&](std::size_t i) { grads[i] = freq_gradient_csc(sp.dhat[i], zhat, target[i]); });
    FreqBlock gbar(T, M);
    for (const auto& g : grads) {
      for (std::size_t j = 0; j < g.data.size(); ++j) gbar.data[j] += inv_p * g.data[j];
    }

    std::optional<double> cand;
    auto cauchy = [&] { return cauchy_from_norms(squared_norm(gbar.data), mean_energy(gbar)); };
    switch (opts.step.rule) {
      case StepRule::fixed:
        if (opts.step.fixed > 0.0) cand = opts.step.fixed;
        break;
      case StepRule::cauchy:
        cand = cauchy();
        break;
      case StepRule::bb1:
      case StepRule::bb2:
      case StepRule::bb3:
        if (prev_zhat) {
          FreqBlock dz = zhat;
          for (std::size_t j = 0; j < dz.data.size(); ++j) dz.data[j] -= prev_zhat->data[j];
          const FreqBlock dr = mean_normal(dz);
          SecantPair sec;
          for (std::size_t j = 0; j < dz.data.size(); ++j) {
            sec.zz += std::norm(dz.data[j]);
            sec.zr += (std::conj(dz.data[j]) * dr.data[j]).real();
            sec.rr += std::norm(dr.data[j]);
          }
          const BbMode mode = opts.step.rule == StepRule::bb1   ? BbMode::v1
                              : opts.step.rule == StepRule::bb2 ? BbMode::v2
                                                                : BbMode::v3;
          cand = bb_step(sec, mode);
        } else {
          cand = cauchy();
        }
        break;
      default:
        throw std::invalid_argument("caddict_apg_consensus: step rule " + to_string(opts.step.rule) + " not supported");
    }
    const double alpha = steps.accept(cand);
    prev_zhat = zhat;

    FreqBlock v = zhat;
    for (std::size_t j = 0; j < v.data.size(); ++j) v.data[j] -= alpha * gbar.data[j];
    x_new = inverse_stack(v, frame);
    soft_threshold_inplace(x_new, alpha * p.lambda);

    const auto in = inertial_next(opts.inertial, t, it);
    for (std::size_t j = 0; j < x.size(); ++j) {
      z[j] = x_new[j] + in.gamma * (x_new[j] - x[j]);
      x[j] = x_new[j];
    }
    t = in.t;

    const auto r = residuals(p, sp, x, opts.workers);
    e = anomaly_update(p, r);
    target = spectra_minus(sp, e, frame);
    const auto obj = objective_from(p, r, x, e);
    check_divergence(obj.total, ref, opts.divergence_factor, it);
    res.trace.rows.push_back(trace_row(it, p, obj, alpha, 0.0, clock.elapsed_ms()));
  }

  res.solution = make_solution(p, x, std::move(e));
  return res;
}

AnomalyResult caddict_admm_consensus(const AnomalyProblem& p, const AnomalyOptions& opts) {
  p.validate();
  if (opts.iters < 1) throw std::invalid_argument("caddict_admm_consensus: iters must be >= 1");
  if (!(opts.relax > 0.0 && opts.relax <= 2.0)) throw std::invalid_argument("caddict_admm_consensus: relax must be in (0, 2]");
  const std::size_t P = p.series_count(), M = p.filters();
  const Shape frame = p.series.shape;
  const std::size_t T = frame.size(), B = M * T;
  const auto sp = series_spectra(p, opts.workers);
  double rho = opts.rho0 > 0.0 ? opts.rho0 : 100.0 * p.lambda + 1.0;

  std::vector<double> y = initial_maps(p, opts), y_prev(B), u(P * B, 0.0), xs(P * B), avg(B);
  SignalSet e(frame, P);
  auto target = spectra_minus(sp, e, frame);
  AnomalyResult res;
  Stopwatch clock;
  const double ref = objective_from(p, residuals(p, sp, y, opts.workers), y, e).total;

  for (std::size_t it = 1; it <= opts.iters; ++it) {
    parallel_for(P, opts.workers, [&](std::size_t i) {
      std::vector<double> v(B);
      for (std::size_t j = 0; j < B; ++j) v[j] = y[j] - u[i * B + j];
      FreqBlock rhs = transform_stack(v, M, frame);
      for (std::size_t n = 0; n < T; ++n) {
        for (std::size_t m = 0; m < M; ++m) {
          auto& r = rhs.data[n * M + m];
          r = sp.dconj[i].data[n * M + m] * target[i][n] + rho * r;
        }
      }
      const auto x = inverse_stack(sherman_morrison_solve(sp.dconj[i], rho, rhs), frame);
      std::copy(x.begin(), x.end(), xs.begin() + static_cast<std::ptrdiff_t>(i * B));
    });

    y_prev = y;
    std::fill(avg.begin(), avg.end(), 0.0);
    for (std::size_t i = 0; i < P; ++i) {
      for (std::size_t j = 0; j < B; ++j) {
        avg[j] += opts.relax * xs[i * B + j] + (1.0 - opts.relax) * y_prev[j] + u[i * B + j];
      }
    }
    for (double& a : avg) a /= static_cast<double>(P);
    y = soft_threshold(avg, p.lambda / rho);

    double primal = 0.0, dual = 0.0;
    for (std::size_t i = 0; i < P; ++i) {
      for (std::size_t j = 0; j < B; ++j) {
        const double xr = opts.relax * xs[i * B + j] + (1.0 - opts.relax) * y_prev[j];
        u[i * B + j] += xr - y[j];
        primal += (xs[i * B + j] - y[j]) * (xs[i * B + j] - y[j]);
      }
    }
    for (std::size_t j = 0; j < B; ++j) dual += (y[j] - y_prev[j]) * (y[j] - y_prev[j]);
    primal = std::sqrt(primal);
    dual = rho * std::sqrt(static_cast<double>(P) * dual);
    const double rho_used = rho;
    const auto [rho_new, scale] = balance_penalty(opts.penalty, it, rho, primal, dual);
    if (scale != 1.0) {
      for (double& w : u) w *= scale;
    }
    rho = rho_new;

    const auto r = residuals(p, sp, y, opts.workers);
    e = anomaly_update(p, r);
    target = spectra_minus(sp, e, frame);
    const auto obj = objective_from(p, r, y, e);
    check_divergence(obj.total, ref, opts.divergence_factor, it);
    auto row = trace_row(it, p, obj, 0.0, rho_used, clock.elapsed_ms());
    row.primal_residual = primal;
    row.dual_residual = dual;
    res.trace.rows.push_back(row);
  }

  res.solution = make_solution(p, y, std::move(e));
  return res;
}

std::vector<double> anomaly_score(const SignalSet& anomalies) {
  const std::size_t T = anomalies.shape.size();
  std::vector<double> score(T, 0.0);
  for (std::size_t i = 0; i < anomalies.count; ++i) {
    const auto e = anomalies.signal(i);
    for (std::size_t t = 0; t < T; ++t) score[t] += e[t] * e[t];
  }
  for (double& s : score) s = std::sqrt(s);
  return score;
}

double score_threshold(std::span<const double> score, double k) {
  if (score.empty()) return 0.0;
  const double n = static_cast<double>(score.size());
  const double mean = std::accumulate(score.begin(), score.end(), 0.0) / n;
  double var = 0.0;
  for (double s : score) var += (s - mean) * (s - mean);
  return mean + k * std::sqrt(var / n);
}

std::vector<bool> flag_scores(std::span<const double> score, double threshold) {
  std::vector<bool> f(score.size());
  for (std::size_t t = 0; t < score.size(); ++t) f[t] = score[t] > threshold;
  return f;
}

std::vector<Window> flagged_windows(const std::vector<bool>& flags, std::size_t merge_gap) {
  std::vector<Window> out;
  for (std::size_t t = 0; t < flags.size();) {
    if (!flags[t]) {
      ++t;
      continue;
    }
    std::size_t end = t;
    while (end < flags.size() && flags[end]) ++end;
    if (!out.empty() && t - out.back().end <= merge_gap && merge_gap > 0) {
      out.back().end = end;
    } else {
      out.push_back({t, end});
    }
    t = end;
  }
  return out;
}

Detection detect_anomalies(std::span<const double> score, const FlagOptions& opts) {
  if (opts.min_length == 0) throw std::invalid_argument("detect_anomalies: min_length must be >= 1");
  Detection d;
  d.flags.assign(score.size(), false);
  if (2 * opts.edge_guard >= score.size()) return d;
  const auto inner = score.subspan(opts.edge_guard, score.size() - 2 * opts.edge_guard);
  d.threshold = opts.threshold ? *opts.threshold : score_threshold(inner, opts.k);
  std::vector<bool> raw = flag_scores(score, d.threshold);
  for (std::size_t t = 0; t < opts.edge_guard; ++t) raw[t] = raw[score.size() - 1 - t] = false;
  for (const auto& w : flagged_windows(raw, opts.merge_gap)) {
    if (w.end - w.begin < opts.min_length) continue;
    d.windows.push_back(w);
    for (std::size_t t = w.begin; t < w.end; ++t) d.flags[t] = true;
  }
  return d;
}

std::vector<Dictionary> train_series_dictionaries(const SignalSet& series, const SeriesDictConfig& cfg,
                                                  ConvergenceTrace* trace) {
  if (cfg.filters == 0 || cfg.length == 0 || cfg.iters == 0 || cfg.coef_inner == 0) {
    throw std::invalid_argument("train_series_dictionaries: filters, length, iters and coef_inner must be > 0");
  }
  if (series.shape.ndim != 1 || cfg.length > series.shape.size()) {
    throw ShapeError("train_series_dictionaries: need 1-D series at least as long as the filters");
  }
  const std::size_t P = series.count, M = cfg.filters;
  const Shape frame = series.shape, support = Shape::line(cfg.length);
  AnomalyProblem prob;
  prob.series = series;
  prob.lambda = cfg.lambda;
  prob.beta = std::numeric_limits<double>::infinity();
  std::vector<DictUpdateState> states;
  for (std::size_t i = 0; i < P; ++i) {
    prob.dicts.push_back(random_dictionary(support, frame, M, cfg.seed + 7919 * i));
    states.push_back(init_dict_state(prob.dicts.back(), 1, 1.0, InertialConfig{}, cfg.seed + 104729 * (i + 1)));
  }
  AnomalyOptions xo;
  xo.iters = cfg.coef_inner;
  xo.workers = cfg.workers;
  DictUpdateOptions dopts;
  dopts.step = StepConfig{StepRule::bb3};
  Stopwatch clock;
  for (std::size_t it = 1; it <= cfg.iters; ++it) {
    auto res = caddict_apg_consensus(prob, xo);
    xo.init.assign(res.solution.maps.maps(0).begin(), res.solution.maps.maps(0).end());
    CoefficientMaps shared(frame, 1, M);
    shared.data = xo.init;
    parallel_for(P, cfg.workers, [&](std::size_t i) {
      const auto data = make_dict_data(shared, SignalSet(frame, 1, {series.signal(i).begin(), series.signal(i).end()}),
                                       support);
      dict_apg_update(data, states[i], dopts);
      prob.dicts[i] = state_dictionary(states[i], support, frame, M);
    });
    if (trace) {
      const auto o = caddict_objective(prob, xo.init, SignalSet(frame, P));
      trace->rows.push_back(trace_row(it, prob, o, states[0].last_step, 0.0, clock.elapsed_ms()));
    }
  }
  return prob.dicts;
}

}  // namespace conprox
