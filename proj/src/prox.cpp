#include "conprox/prox.hpp"

#include <cmath>
#include <string>

#include "conprox/errors.hpp"

namespace conprox {

namespace {
constexpr double kDegenerateNorm = 1e-12;

void require_nonnegative(double v, const char* what) {
  if (!(v >= 0.0) || !std::isfinite(v)) {
    throw std::invalid_argument(std::string(what) + ": threshold must be finite and >= 0");
  }
}
}  // namespace

std::vector<double> soft_threshold(std::span<const double> x, double gamma) {
  std::vector<double> out(x.begin(), x.end());
  soft_threshold_inplace(out, gamma);
  return out;
}

void soft_threshold_inplace(std::span<double> x, double gamma) {
  require_nonnegative(gamma, "soft_threshold");
  require_finite(x, "soft_threshold");
  for (double& v : x) {
    const double a = std::abs(v) - gamma;
    v = a > 0.0 ? std::copysign(a, v) : 0.0;
  }
}

std::vector<double> block_l2_shrink(std::span<const double> r, double tau) {
  require_nonnegative(tau, "block_l2_shrink");
  require_finite(r, "block_l2_shrink");
  const double norm = std::sqrt(squared_norm(r));
  std::vector<double> out(r.size(), 0.0);
  if (norm <= tau) return out;
  const double factor = 1.0 - tau / norm;
  for (std::size_t i = 0; i < r.size(); ++i) out[i] = factor * r[i];
  return out;
}

bool ConstraintSetPN::contains(std::span<const double> z, double tol) const {
  if (z.size() != frame.size()) return false;
  double ss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (in_support(i)) {
      ss += z[i] * z[i];
    } else if (std::abs(z[i]) > tol) {
      return false;
    }
  }
  return std::abs(std::sqrt(ss) - 1.0) <= tol;
}

std::vector<double> project_cpn(std::span<const double> z, const ConstraintSetPN& set) {
  if (z.size() != set.frame.size()) throw ShapeError("project_cpn: filter does not match frame");
  require_finite(z, "project_cpn");
  std::vector<double> out(z.size(), 0.0);
  double ss = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (set.in_support(i)) {
      out[i] = z[i];
      ss += z[i] * z[i];
    }
  }
  const double norm = std::sqrt(ss);
  if (norm <= kDegenerateNorm) throw DegenerateFilterError("project_cpn: supported part has zero norm");
  for (double& v : out) v /= norm;
  return out;
}

bool ConsensusSet::contains(std::span<const double> blocks, double tol) const {
  if (replicas == 0 || blocks.size() % replicas != 0) return false;
  const std::size_t len = blocks.size() / replicas;
  for (std::size_t r = 1; r < replicas; ++r) {
    for (std::size_t i = 0; i < len; ++i) {
      if (std::abs(blocks[r * len + i] - blocks[i]) > tol) return false;
    }
  }
  return true;
}

std::vector<double> block_mean(std::span<const double> blocks, std::size_t replicas) {
  if (replicas == 0 || blocks.size() % replicas != 0) {
    throw ShapeError("block_mean: length is not a multiple of the replica count");
  }
  const std::size_t len = blocks.size() / replicas;
  std::vector<double> mean(len, 0.0);
  for (std::size_t r = 0; r < replicas; ++r) {
    for (std::size_t i = 0; i < len; ++i) mean[i] += blocks[r * len + i];
  }
  for (double& v : mean) v /= static_cast<double>(replicas);
  return mean;
}

std::vector<double> project_consensus(std::span<const double> blocks, std::size_t replicas) {
  const auto mean = block_mean(blocks, replicas);
  std::vector<double> out;
  out.reserve(blocks.size());
  for (std::size_t r = 0; r < replicas; ++r) out.insert(out.end(), mean.begin(), mean.end());
  return out;
}

}  // namespace conprox
