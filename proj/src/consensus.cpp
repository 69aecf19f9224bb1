#include "conprox/consensus.hpp"

#include <cmath>
#include <sstream>

#include "conprox/array.hpp"
#include "conprox/errors.hpp"
#include "conprox/parallel.hpp"
#include "conprox/prox.hpp"

namespace conprox {

ProxTerm ProxTerm::zero() {
  return {[](std::span<const double> v, double) { return Vec(v.begin(), v.end()); },
          [](std::span<const double>) { return 0.0; }};
}

ProxTerm ProxTerm::l1(double lambda) {
  if (!(lambda >= 0.0)) throw std::invalid_argument("l1 prox: lambda must be >= 0");
  return {[lambda](std::span<const double> v, double s) { return soft_threshold(v, lambda * s); },
          [lambda](std::span<const double> x) {
            double a = 0.0;
            for (double v : x) a += std::abs(v);
            return lambda * a;
          }};
}

void check_divergence(double objective, double reference, double factor, std::size_t iter) {
  if (!std::isfinite(objective)) {
    throw DivergenceError("objective became non-finite at iteration " + std::to_string(iter));
  }
  if (factor > 0.0 && objective > factor * reference && objective > 1e-12) {
    std::ostringstream msg;
    msg << "objective " << objective << " exceeded " << factor << " x initial objective " << reference
        << " at iteration " << iter;
    throw DivergenceError(msg.str());
  }
}

namespace {

void check_terms(std::span<const SmoothTerm> terms) {
  if (terms.empty()) throw std::invalid_argument("consensus: at least one smooth term is required");
}

std::vector<Vec> local_gradients(std::span<const Vec> points, std::span<const SmoothTerm> terms,
                                 unsigned workers) {
  std::vector<Vec> grads(terms.size());
  parallel_for(terms.size(), workers, [&](std::size_t i) {
    grads[i] = terms[i].gradient(points.size() == 1 ? points[0] : points[i]);
    require_finite(grads[i], "consensus gradient");
  });
  return grads;
}

// (1/R) sum_i (x_i - alpha g_i), summed in index order.
Vec averaged_step(std::span<const Vec> points, const std::vector<Vec>& grads, double alpha) {
  const std::size_t r = grads.size();
  Vec avg(grads[0].size(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const Vec& x = points.size() == 1 ? points[0] : points[i];
    if (x.size() != avg.size() || grads[i].size() != avg.size()) {
      throw ShapeError("consensus: block shapes differ");
    }
    for (std::size_t j = 0; j < avg.size(); ++j) avg[j] += x[j] - alpha * grads[i][j];
  }
  for (double& v : avg) v /= static_cast<double>(r);
  return avg;
}

Vec mean_of(const std::vector<Vec>& vs) {
  Vec m(vs[0].size(), 0.0);
  for (const auto& v : vs) {
    for (std::size_t j = 0; j < m.size(); ++j) m[j] += v[j];
  }
  for (double& v : m) v /= static_cast<double>(vs.size());
  return m;
}

struct Objective {
  double fidelity;
  double regularizer;
  double total() const { return fidelity + regularizer; }
};

Objective consensus_objective(std::span<const double> x, std::span<const SmoothTerm> terms, const ProxTerm& prox) {
  double f = 0.0;
  for (const auto& t : terms) f += t.value(x);
  return {f, static_cast<double>(terms.size()) * prox.value(x)};
}

bool all_have_ops(std::span<const SmoothTerm> terms) {
  for (const auto& t : terms) {
    if (!t.op) return false;
  }
  return true;
}

// Step selection for the averaged gradient direction.
class ConsensusStepper {
 public:
  ConsensusStepper(const StepConfig& cfg, std::span<const SmoothTerm> terms, std::size_t dim) : cfg_(cfg) {
    cfg_.validate();
    if (all_have_ops(terms)) {
      for (const auto& t : terms) ops_.push_back(*t.op);
    }
    double fallback = cfg_.fixed > 0.0 ? cfg_.fixed : 1.0;
    if (!ops_.empty() && !(cfg_.rule == StepRule::fixed && cfg_.fixed > 0.0)) {
      fallback = inverse_lipschitz_estimate([this](std::span<const double> v) { return mean_normal(v); }, dim);
    }
    controller_ = StepController(fallback, cfg_.rule == StepRule::fista3k);
  }

  double next(const Vec& point, const Vec& gbar, std::span<const double> current) {
    std::optional<double> cand;
    switch (cfg_.rule) {
      case StepRule::fixed:
        cand = cfg_.fixed > 0.0 ? std::optional<double>(cfg_.fixed) : std::nullopt;
        break;
      case StepRule::bb1:
      case StepRule::bb2:
      case StepRule::bb3:
        if (prev_point_) {
          Vec z(point.size()), r(point.size());
          for (std::size_t j = 0; j < z.size(); ++j) {
            z[j] = point[j] - (*prev_point_)[j];
            r[j] = gbar[j] - (*prev_grad_)[j];
          }
          const BbMode mode = cfg_.rule == StepRule::bb1 ? BbMode::v1
                              : cfg_.rule == StepRule::bb2 ? BbMode::v2
                                                           : BbMode::v3;
          cand = bb_step(z, r, mode);
        } else {
          cand = cauchy(gbar);
        }
        break;
      case StepRule::cauchy:
        cand = cauchy(gbar);
        break;
      case StepRule::cauchy_support:
      case StepRule::fista3k: {
        Vec sg(gbar.size(), 0.0);
        bool any = false;
        for (std::size_t j = 0; j < sg.size(); ++j) {
          if (current[j] != 0.0) {
            sg[j] = gbar[j];
            any = true;
          }
        }
        cand = any ? cauchy(sg) : cauchy(gbar);
        if (cand && cfg_.rule == StepRule::fista3k) *cand *= cfg_.c;
        break;
      }
      case StepRule::cauchy_modified:
        if (!ops_.empty()) {
          auto sq = cauchy_from_norms(squared_norm(gbar), squared_norm(mean_normal(gbar)));
          if (sq) cand = std::sqrt(*sq);
        }
        break;
    }
    prev_point_ = point;
    prev_grad_ = gbar;
    return controller_.accept(cand);
  }

 private:
  std::optional<double> cauchy(const Vec& v) const {
    if (ops_.empty()) return std::nullopt;
    return consensus_cauchy(v, ops_);
  }

  Vec mean_normal(std::span<const double> v) const {
    Vec out(v.size(), 0.0);
    for (const auto& op : ops_) {
      const Vec w = op.adjoint(op.apply(v));
      for (std::size_t j = 0; j < out.size(); ++j) out[j] += w[j];
    }
    for (double& x : out) x /= static_cast<double>(ops_.size());
    return out;
  }

  StepConfig cfg_;
  std::vector<LinearOperator> ops_;
  StepController controller_;
  std::optional<Vec> prev_point_;
  std::optional<Vec> prev_grad_;
};

}  // namespace

Vec pg_consensus_step(std::span<const Vec> points, std::span<const SmoothTerm> terms, const ProxTerm& prox,
                      double alpha_c, unsigned workers) {
  check_terms(terms);
  if (points.size() != 1 && points.size() != terms.size()) {
    throw ShapeError("pg_consensus_step: need one point or one point per term");
  }
  const auto grads = local_gradients(points, terms, workers);
  return prox.prox(averaged_step(points, grads, alpha_c), alpha_c);
}

Vec pg_consensus_step(std::span<const double> x, std::span<const SmoothTerm> terms, const ProxTerm& prox,
                      double alpha_c, unsigned workers) {
  const Vec point(x.begin(), x.end());
  return pg_consensus_step(std::span<const Vec>(&point, 1), terms, prox, alpha_c, workers);
}

Vec split_consensus_step(std::span<const double> x, std::span<const SmoothTerm> terms, const ProxTerm& prox,
                         double alpha, double rho) {
  check_terms(terms);
  if (!(alpha > 0.0) || !(rho >= 0.0)) throw std::invalid_argument("split_consensus_step: bad alpha or rho");
  const std::size_t r = terms.size();
  const double r_d = static_cast<double>(r);
  // y-subproblem: sum_i [1/(2 alpha) ||y - v_i||^2 + rho/2 ||y - x||^2 + g(y)]. Its quadratic part
  // has curvature R (1/alpha + rho) and linear coefficient sum_i (v_i / alpha + rho x).
  const double curvature = 1.0 / alpha + rho;
  Vec lin(x.size(), 0.0);
  for (std::size_t i = 0; i < r; ++i) {
    const Vec g = terms[i].gradient(x);
    for (std::size_t j = 0; j < x.size(); ++j) lin[j] += (x[j] - alpha * g[j]) / alpha + rho * x[j];
  }
  Vec center(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) center[j] = lin[j] / (r_d * curvature);
  const Vec y = prox.prox(center, 1.0 / curvature);
  // x-subproblem: projection of (y, ..., y) onto the consensus set.
  Vec stacked;
  stacked.reserve(r * y.size());
  for (std::size_t i = 0; i < r; ++i) stacked.insert(stacked.end(), y.begin(), y.end());
  const Vec projected = project_consensus(stacked, r);
  return Vec(projected.begin(), projected.begin() + static_cast<std::ptrdiff_t>(y.size()));
}

SolveResult apg_consensus_run(std::span<const SmoothTerm> terms, const ProxTerm& prox, const ApgOptions& opts) {
  check_terms(terms);
  if (opts.iters < 1) throw std::invalid_argument("apg_consensus_run: iters must be >= 1");
  opts.inertial.validate();
  const std::size_t dim = opts.x0.size();
  ConsensusStepper stepper(opts.step, terms, dim);
  Stopwatch clock;

  SolveResult res;
  Vec x = opts.x0;
  Vec z = x;
  double t = opts.inertial.first_t();
  const double f0 = consensus_objective(x, terms, prox).total();
  double prev_obj = f0;

  for (std::size_t k = 1; k <= opts.iters; ++k) {
    const std::vector<Vec> point{z};
    const auto grads = local_gradients(point, terms, opts.workers);
    const Vec gbar = mean_of(grads);
    const double alpha = stepper.next(z, gbar, x);
    Vec x_new = prox.prox(averaged_step(point, grads, alpha), alpha);

    const auto in = inertial_next(opts.inertial, t, k);
    for (std::size_t j = 0; j < dim; ++j) z[j] = x_new[j] + in.gamma * (x_new[j] - x[j]);
    x = std::move(x_new);
    t = in.t;

    const auto obj = consensus_objective(x, terms, prox);
    check_divergence(obj.total(), f0, opts.divergence_factor, k);
    res.trace.rows.push_back({k, obj.total(), obj.fidelity, obj.regularizer, alpha, 0.0, clock.elapsed_ms()});
    if (opts.rel_tol > 0.0 && std::abs(prev_obj - obj.total()) <= opts.rel_tol * std::abs(obj.total())) break;
    prev_obj = obj.total();
  }
  res.x = std::move(x);
  return res;
}

std::pair<double, double> balance_penalty(const PenaltyPolicy& p, std::size_t iter, double rho, double primal,
                                          double dual) {
  if (!p.adaptive || p.period == 0 || iter % p.period != 0) return {rho, 1.0};
  if (primal > p.ratio * dual) return {rho * p.factor, 1.0 / p.factor};
  if (dual > p.ratio * primal) return {rho / p.factor, p.factor};
  return {rho, 1.0};
}

SolveResult admm_run(const LocalSolve& f, const ProxTerm& prox, const AdmmOptions& opts) {
  const LocalSolve locals[] = {f};
  return admm_consensus_run(locals, prox, opts);
}

SolveResult admm_consensus_run(std::span<const LocalSolve> locals, const ProxTerm& prox, const AdmmOptions& opts) {
  if (locals.empty()) throw std::invalid_argument("admm_consensus_run: at least one local term is required");
  if (!(opts.rho0 > 0.0)) throw std::invalid_argument("admm: rho0 must be > 0");
  if (!(opts.relax > 0.0 && opts.relax <= 2.0)) throw std::invalid_argument("admm: relax must be in (0, 2]");
  const std::size_t r = locals.size();
  const double r_d = static_cast<double>(r);
  const std::size_t dim = opts.y0.size();
  Stopwatch clock;

  auto objective = [&](std::span<const double> y) {
    double fv = 0.0;
    for (const auto& l : locals) fv += l.value(y);
    return Objective{fv, r_d * prox.value(y)};
  };

  Vec y = opts.y0;
  std::vector<Vec> u(r, Vec(dim, 0.0));
  std::vector<Vec> xr(r);
  double rho = opts.rho0;
  const double f0 = objective(y).total();
  double prev_obj = f0;
  SolveResult res;

  for (std::size_t k = 1; k <= opts.iters; ++k) {
    parallel_for(r, opts.workers, [&](std::size_t i) {
      Vec v(dim);
      for (std::size_t j = 0; j < dim; ++j) v[j] = y[j] - u[i][j];
      Vec x = locals[i].solve(v, rho);
      if (x.size() != dim) throw ShapeError("admm: local solve returned wrong length");
      require_finite(x, "admm local solve");
      for (std::size_t j = 0; j < dim; ++j) x[j] = opts.relax * x[j] + (1.0 - opts.relax) * y[j];
      xr[i] = std::move(x);
    });

    Vec avg(dim, 0.0);
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < dim; ++j) avg[j] += xr[i][j] + u[i][j];
    }
    for (double& v : avg) v /= r_d;
    // R copies of g against curvature R rho: prox scale 1/rho.
    Vec y_new = prox.prox(avg, 1.0 / rho);

    double primal_sq = 0.0;
    for (std::size_t i = 0; i < r; ++i) {
      for (std::size_t j = 0; j < dim; ++j) {
        const double d = xr[i][j] - y_new[j];
        u[i][j] += d;
        primal_sq += d * d;
      }
    }
    double dy_sq = 0.0;
    for (std::size_t j = 0; j < dim; ++j) dy_sq += (y_new[j] - y[j]) * (y_new[j] - y[j]);
    const double primal = std::sqrt(primal_sq);
    const double dual = rho * std::sqrt(r_d * dy_sq);
    y = std::move(y_new);

    const auto obj = objective(y);
    check_divergence(obj.total(), f0, opts.divergence_factor, k);
    TraceRow row{k, obj.total(), obj.fidelity, obj.regularizer, 0.0, rho, clock.elapsed_ms()};
    row.primal_residual = primal;
    row.dual_residual = dual;
    res.trace.rows.push_back(row);

    const auto [new_rho, dual_scale] = balance_penalty(opts.penalty, k, rho, primal, dual);
    if (new_rho != rho) {
      rho = new_rho;
      for (auto& ui : u) {
        for (double& v : ui) v *= dual_scale;
      }
    }
    if (opts.rel_tol > 0.0 && std::abs(prev_obj - obj.total()) <= opts.rel_tol * std::abs(obj.total())) break;
    prev_obj = obj.total();
  }
  res.x = std::move(y);
  return res;
}

}  // namespace conprox
