#include "conprox/cdl.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>

#include "conprox/conv.hpp"
#include "conprox/errors.hpp"
#include "conprox/fft.hpp"
#include "conprox/parallel.hpp"
#include "conprox/prox.hpp"

namespace conprox {

CoefSolver parse_coef_solver(const std::string& name) {
  if (name == "admm") return CoefSolver::admm;
  if (name == "fista") return CoefSolver::fista;
  if (name == "fista3k") return CoefSolver::fista3k;
  throw std::invalid_argument("unknown coefficient solver '" + name + "'");
}

DictSolver parse_dict_solver(const std::string& name) {
  if (name == "admm_cns") return DictSolver::admm_cns;
  if (name == "apg") return DictSolver::apg;
  if (name == "apg_cns") return DictSolver::apg_cns;
  throw std::invalid_argument("unknown dictionary solver '" + name + "'");
}

std::string to_string(CoefSolver s) {
  switch (s) {
    case CoefSolver::admm: return "admm";
    case CoefSolver::fista: return "fista";
    case CoefSolver::fista3k: return "fista3k";
  }
  return "?";
}

std::string to_string(DictSolver s) {
  switch (s) {
    case DictSolver::admm_cns: return "admm_cns";
    case DictSolver::apg: return "apg";
    case DictSolver::apg_cns: return "apg_cns";
  }
  return "?";
}

Dictionary random_dictionary(Shape support, Shape frame, std::size_t m, std::uint64_t seed) {
  if (!support.fits_in(frame)) throw ShapeError("random_dictionary: support larger than frame");
  Dictionary d(support, frame, m);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal;
  for (std::size_t j = 0; j < m; ++j) {
    auto f = d.filter(j);
    double n = 0.0;
    while (n <= 1e-12) {
      for (double& v : f) v = normal(rng);
      n = std::sqrt(squared_norm(f));
    }
    for (double& v : f) v /= n;
  }
  return d;
}

DictData make_dict_data(const CoefficientMaps& maps, const SignalSet& signals, Shape support) {
  if (maps.signals != signals.count || !(maps.frame == signals.shape)) {
    throw ShapeError("make_dict_data: maps do not match signals");
  }
  if (!support.fits_in(maps.frame)) throw ShapeError("make_dict_data: support larger than frame");
  DictData d;
  d.support = support;
  d.frame = maps.frame;
  d.filters = maps.filters;
  for (std::size_t k = 0; k < maps.signals; ++k) {
    d.xhat.push_back(transform_stack(maps.maps(k), maps.filters, maps.frame));
    d.shat.push_back(dft_forward(signals.signal(k), signals.shape));
  }
  return d;
}

DictUpdateState init_dict_state(const Dictionary& d0, std::size_t images, double sigma0,
                                const InertialConfig& inertial, std::uint64_t seed) {
  if (!(sigma0 > 0.0)) throw std::invalid_argument("init_dict_state: sigma0 must be > 0");
  DictUpdateState st;
  st.dict = d0.padded();
  st.point = st.dict;
  st.local.reserve(images * st.dict.size());
  for (std::size_t k = 0; k < images; ++k) st.local.insert(st.local.end(), st.dict.begin(), st.dict.end());
  st.duals.assign(st.local.size(), 0.0);
  st.sigma = sigma0;
  st.t = inertial.first_t();
  st.seed = seed;
  return st;
}

std::vector<double> project_filters(std::span<const double> frames, Shape support, Shape frame, std::size_t filters,
                                    std::uint64_t seed, std::size_t& replacements) {
  const std::size_t n = frame.size();
  if (frames.size() != filters * n) throw ShapeError("project_filters: size mismatch");
  const ConstraintSetPN set{support, frame};
  std::vector<double> out(frames.size());
  for (std::size_t m = 0; m < filters; ++m) {
    std::vector<double> p;
    try {
      p = project_cpn(frames.subspan(m * n, n), set);
    } catch (const DegenerateFilterError&) {
      ++replacements;
      p = random_dictionary(support, frame, 1, seed + 0x9e3779b97f4a7c15ULL * replacements).padded();
    }
    std::copy(p.begin(), p.end(), out.begin() + static_cast<std::ptrdiff_t>(m * n));
  }
  return out;
}

Dictionary state_dictionary(const DictUpdateState& state, Shape support, Shape frame, std::size_t filters) {
  return Dictionary::from_padded(state.dict, support, frame, filters);
}

namespace {

void check_data(const DictData& data, const DictUpdateState& st) {
  if (data.images() == 0) throw ShapeError("dictionary update: no images");
  if (st.dict.size() != data.filters * data.frame.size()) throw ShapeError("dictionary update: state size mismatch");
}

// Sum over images of the per-bin gradients at `dhat`, times `weight`.
FreqBlock summed_gradient(const DictData& data, const FreqBlock& dhat, double weight, unsigned workers) {
  const std::size_t K = data.images();
  std::vector<FreqBlock> parts(K);
  parallel_for(K, workers, [&](std::size_t k) { parts[k] = freq_gradient_dict(data.xhat[k], dhat, data.shat[k]); });
  FreqBlock g(dhat.bins, dhat.width);
  for (const auto& p : parts) {
    for (std::size_t i = 0; i < g.data.size(); ++i) g.data[i] += p.data[i];
  }
  for (auto& v : g.data) v *= weight;
  return g;
}

// weight * sum_k ||X_k v||^2, up to the common 1/N factor.
double operator_energy(const DictData& data, const FreqBlock& v, double weight) {
  double e = 0.0;
  for (const auto& xh : data.xhat) e += squared_norm(apply_bins(xh, v));
  return weight * e;
}

// Bound on the largest eigenvalue of weight * sum_k X_k^T X_k, taken per bin.
double lipschitz_bound(const DictData& data, double weight) {
  const std::size_t bins = data.xhat[0].bins;
  double l = 0.0;
  for (std::size_t n = 0; n < bins; ++n) {
    double s = 0.0;
    for (const auto& xh : data.xhat) s += squared_norm(xh.row(n));
    l = std::max(l, weight * s);
  }
  return l;
}

void apg_core(const DictData& data, DictUpdateState& st, const DictUpdateOptions& opts, bool consensus) {
  check_data(data, st);
  opts.step.validate();
  opts.inertial.validate();
  const std::size_t M = data.filters;
  const Shape frame = data.frame;
  const double weight = consensus ? 1.0 / static_cast<double>(data.images()) : 1.0;
  const double lip = lipschitz_bound(data, weight);
  st.steps.set_fallback(lip > 0.0 ? 1.0 / lip : 1.0);
  if (!opts.keep_history) {
    st.prev_point_hat.reset();
    st.prev_grad_hat.reset();
  }

  for (std::size_t it = 0; it < opts.iters; ++it) {
    const FreqBlock ghat_pt = transform_stack(st.point, M, frame);
    const FreqBlock grad = summed_gradient(data, ghat_pt, weight, opts.workers);

    auto cauchy = [&]() -> std::optional<double> {
      return cauchy_from_norms(squared_norm(grad.data), operator_energy(data, grad, weight));
    };
    std::optional<double> cand;
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
        if (st.prev_point_hat && st.prev_grad_hat) {
          SecantPair p;
          for (std::size_t i = 0; i < grad.data.size(); ++i) {
            const cplx z = ghat_pt.data[i] - st.prev_point_hat->data[i];
            const cplx r = grad.data[i] - st.prev_grad_hat->data[i];
            p.zz += std::norm(z);
            p.zr += (std::conj(z) * r).real();
            p.rr += std::norm(r);
          }
          const BbMode mode = opts.step.rule == StepRule::bb1   ? BbMode::v1
                              : opts.step.rule == StepRule::bb2 ? BbMode::v2
                                                                : BbMode::v3;
          cand = bb_step(p, mode);
        } else {
          cand = cauchy();
        }
        break;
      default:
        throw std::invalid_argument("dictionary update: step rule " + to_string(opts.step.rule) + " not supported");
    }
    const double alpha = st.steps.accept(cand);
    st.last_step = alpha;

    FreqBlock v = ghat_pt;
    for (std::size_t i = 0; i < v.data.size(); ++i) v.data[i] -= alpha * grad.data[i];
    const auto h = project_filters(inverse_stack(v, frame), data.support, frame, M, st.seed, st.replacements);

    const auto in = inertial_next(opts.inertial, st.t, ++st.iter);
    for (std::size_t i = 0; i < h.size(); ++i) st.point[i] = h[i] + in.gamma * (h[i] - st.dict[i]);
    st.dict = h;
    st.t = in.t;
    st.prev_point_hat = ghat_pt;
    st.prev_grad_hat = grad;
  }
}

}  // namespace

void dict_apg_update(const DictData& data, DictUpdateState& state, const DictUpdateOptions& opts) {
  apg_core(data, state, opts, false);
}

void dict_apg_consensus_update(const DictData& data, DictUpdateState& state, const DictUpdateOptions& opts) {
  apg_core(data, state, opts, true);
}

void dict_admm_consensus_update(const DictData& data, DictUpdateState& st, const DictUpdateOptions& opts) {
  check_data(data, st);
  if (!(opts.relax > 0.0 && opts.relax <= 2.0)) throw std::invalid_argument("dictionary update: relax must be in (0, 2]");
  const std::size_t K = data.images(), M = data.filters, N = data.frame.size(), B = M * N;
  const Shape frame = data.frame;
  if (st.local.size() != K * B || st.duals.size() != K * B) {
    throw ShapeError("dict_admm_consensus_update: state was initialized for a different image count");
  }

  std::vector<FreqBlock> a(K), xs(K);
  parallel_for(K, opts.workers, [&](std::size_t k) {
    a[k] = data.xhat[k];
    for (auto& v : a[k].data) v = std::conj(v);
    xs[k] = FreqBlock(N, M);
    for (std::size_t n = 0; n < N; ++n) {
      for (std::size_t m = 0; m < M; ++m) xs[k].data[n * M + m] = a[k].data[n * M + m] * data.shat[k][n];
    }
  });

  for (std::size_t it = 0; it < opts.iters; ++it) {
    const double sigma = st.sigma;
    parallel_for(K, opts.workers, [&](std::size_t k) {
      std::vector<double> v(B);
      const double* h = st.duals.data() + k * B;
      for (std::size_t i = 0; i < B; ++i) v[i] = st.dict[i] - h[i];
      FreqBlock rhs = transform_stack(v, M, frame);
      for (std::size_t i = 0; i < rhs.data.size(); ++i) rhs.data[i] = xs[k].data[i] + sigma * rhs.data[i];
      const auto d = inverse_stack(sherman_morrison_solve(a[k], sigma, rhs), frame);
      std::copy(d.begin(), d.end(), st.local.begin() + static_cast<std::ptrdiff_t>(k * B));
    });

    const std::vector<double> g_prev = st.dict;
    std::vector<double> avg(B, 0.0);
    for (std::size_t k = 0; k < K; ++k) {
      const double* d = st.local.data() + k * B;
      const double* h = st.duals.data() + k * B;
      for (std::size_t i = 0; i < B; ++i) avg[i] += opts.relax * d[i] + (1.0 - opts.relax) * g_prev[i] + h[i];
    }
    for (double& v : avg) v /= static_cast<double>(K);
    st.dict = project_filters(avg, data.support, frame, M, st.seed, st.replacements);

    double primal = 0.0, dual = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      const double* d = st.local.data() + k * B;
      double* h = st.duals.data() + k * B;
      for (std::size_t i = 0; i < B; ++i) {
        h[i] += opts.relax * d[i] + (1.0 - opts.relax) * g_prev[i] - st.dict[i];
        primal += (d[i] - st.dict[i]) * (d[i] - st.dict[i]);
      }
    }
    for (std::size_t i = 0; i < B; ++i) dual += (st.dict[i] - g_prev[i]) * (st.dict[i] - g_prev[i]);
    primal = std::sqrt(primal);
    dual = sigma * std::sqrt(static_cast<double>(K) * dual);

    const auto [sigma_new, scale] = balance_penalty(opts.penalty, ++st.iter, sigma, primal, dual);
    if (scale != 1.0) {
      for (double& h : st.duals) h *= scale;
    }
    st.sigma = sigma_new;
    st.last_step = 0.0;
  }
}

CscObjective cdl_objective(const Dictionary& dict, const CoefficientMaps& maps, const SignalSet& signals,
                           double lambda) {
  return csc_objective(dict, maps, signals, lambda);
}

void CdlConfig::validate() const {
  if (filters == 0) throw std::invalid_argument("cdl: filters must be > 0");
  if (support.size() == 0) throw std::invalid_argument("cdl: empty filter support");
  if (!(lambda >= 0.0)) throw std::invalid_argument("cdl: lambda must be >= 0");
  if (coef_inner == 0 || dict_inner == 0) throw std::invalid_argument("cdl: inner iteration counts must be > 0");
  coef_step.validate();
  coef_inertial.validate();
  dict_inertial.validate();
  resolved_dict_step().validate();
}

StepConfig CdlConfig::resolved_dict_step() const {
  if (dict_step) return *dict_step;
  return StepConfig{dict == DictSolver::apg ? StepRule::cauchy : StepRule::bb3};
}

namespace {

// Fidelity and l1 of the alternation from the spectra already held by the dictionary update.
CscObjective spectral_objective(const DictData& data, std::span<const double> dict_padded,
                                const CoefficientMaps& maps, double lambda) {
  const auto dhat = transform_stack(dict_padded, data.filters, data.frame);
  CscObjective o;
  for (std::size_t k = 0; k < data.images(); ++k) {
    const auto fit = apply_bins(data.xhat[k], dhat);
    for (std::size_t n = 0; n < fit.size(); ++n) o.fidelity += std::norm(fit[n] - data.shat[k][n]);
  }
  o.fidelity *= 0.5 / static_cast<double>(data.frame.size());
  for (double v : maps.data) o.l1 += std::abs(v);
  o.total = o.fidelity + lambda * o.l1;
  return o;
}

}  // namespace

CdlResult cdl_train(const CdlConfig& cfg, const SignalSet& signals, const Dictionary* init) {
  cfg.validate();
  if (signals.count == 0) throw ShapeError("cdl_train: no training signals");
  require_finite(signals.data, "training signals");
  const Shape frame = signals.shape;
  if (!cfg.support.fits_in(frame)) throw ShapeError("cdl_train: filter support larger than signal frame");

  Dictionary d0 = init ? *init : random_dictionary(cfg.support, frame, cfg.filters, cfg.seed);
  if (!(d0.frame == frame) || !(d0.support == cfg.support) || d0.filters != cfg.filters) {
    throw ShapeError("cdl_train: initial dictionary does not match the configuration");
  }
  const double rho0 = cfg.rho0 > 0.0 ? cfg.rho0 : 100.0 * cfg.lambda + 1.0;
  const double sigma0 = cfg.sigma0 > 0.0 ? cfg.sigma0 : 100.0 * cfg.lambda + 1.0;

  DictUpdateState dst = init_dict_state(d0, signals.count, sigma0, cfg.dict_inertial, cfg.seed + 1);
  DictUpdateOptions dopts;
  dopts.iters = cfg.dict_inner;
  dopts.relax = cfg.relax;
  dopts.penalty = cfg.penalty;
  dopts.step = cfg.resolved_dict_step();
  dopts.inertial = cfg.dict_inertial;
  dopts.keep_history = cfg.keep_history;
  dopts.workers = cfg.workers;

  CscAdmmState admm_state;
  CscFistaState fista_state;
  CscAdmmOptions aopts;
  aopts.rho0 = rho0;
  aopts.relax = cfg.relax;
  aopts.penalty = cfg.penalty;
  aopts.iters = cfg.coef_inner;
  aopts.trace_every = cfg.coef_inner;
  aopts.divergence_factor = cfg.divergence_factor;
  aopts.workers = cfg.workers;
  CscFistaOptions fopts;
  fopts.step = cfg.coef_step;
  fopts.inertial = cfg.coef_inertial;
  fopts.variant = cfg.coef == CoefSolver::fista3k ? CscVariant::fista3k : CscVariant::fista;
  fopts.iters = cfg.coef_inner;
  fopts.trace_every = cfg.coef_inner;
  fopts.divergence_factor = cfg.divergence_factor;
  fopts.workers = cfg.workers;

  CdlResult res;
  res.maps = CoefficientMaps(frame, signals.count, cfg.filters);
  const auto obj0 = cdl_objective(d0, res.maps, signals, cfg.lambda);
  res.trace.rows.push_back({0, obj0.total, obj0.fidelity, cfg.lambda * obj0.l1, 0.0, 0.0, 0.0, 0.0, 0.0});
  const double ref = obj0.total;
  Stopwatch clock;

  CscProblem problem{d0, signals, cfg.lambda};
  for (std::size_t it = 1; it <= cfg.iters; ++it) {
    problem.dict = state_dictionary(dst, cfg.support, frame, cfg.filters);
    double rho_used = 0.0;
    if (cfg.coef == CoefSolver::admm) {
      res.maps = csc_admm_solve(problem, aopts, &admm_state).maps;
      for (double r : admm_state.rho) rho_used += r / static_cast<double>(admm_state.rho.size());
    } else {
      res.maps = csc_fista_solve(problem, fopts, &fista_state).maps;
    }

    const DictData data = make_dict_data(res.maps, signals, cfg.support);
    switch (cfg.dict) {
      case DictSolver::admm_cns:
        rho_used = dst.sigma;
        dict_admm_consensus_update(data, dst, dopts);
        break;
      case DictSolver::apg:
        dict_apg_update(data, dst, dopts);
        break;
      case DictSolver::apg_cns:
        dict_apg_consensus_update(data, dst, dopts);
        break;
    }

    const auto obj = spectral_objective(data, dst.dict, res.maps, cfg.lambda);
    check_divergence(obj.total, ref, cfg.divergence_factor, it);
    res.trace.rows.push_back({it, obj.total, obj.fidelity, cfg.lambda * obj.l1, dst.last_step, rho_used,
                              clock.elapsed_ms(), 0.0, 0.0});
    if (cfg.checkpoint && cfg.checkpoint_every > 0 && it % cfg.checkpoint_every == 0) {
      cfg.checkpoint(it, state_dictionary(dst, cfg.support, frame, cfg.filters));
    }
  }

  res.dict = state_dictionary(dst, cfg.support, frame, cfg.filters);
  res.replacements = dst.replacements;
  return res;
}

}  // namespace conprox
