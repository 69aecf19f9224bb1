#pragma once

#include <span>
#include <vector>

#include "conprox/array.hpp"

namespace conprox {

/// Elementwise shrinkage sign(x) max(0, |x| - gamma).
std::vector<double> soft_threshold(std::span<const double> x, double gamma);
void soft_threshold_inplace(std::span<double> x, double gamma);

/// Prox of tau ||.||_2: max(0, 1 - tau/||r||) r.
std::vector<double> block_l2_shrink(std::span<const double> r, double tau);

/// The set of frame-sized filters that vanish off a support region and have unit l2 norm.
struct ConstraintSetPN {
  Shape support;
  Shape frame;

  bool in_support(std::size_t index) const {
    return index / frame.cols < support.rows && index % frame.cols < support.cols;
  }
  bool contains(std::span<const double> z, double tol = 1e-12) const;
};

/// Zeroes `z` off the support and rescales the rest to unit norm. Throws DegenerateFilterError
/// when the supported part has norm <= 1e-12.
std::vector<double> project_cpn(std::span<const double> z, const ConstraintSetPN& set);

/// R equal-length blocks stored contiguously.
struct ConsensusSet {
  std::size_t replicas = 1;
  bool contains(std::span<const double> blocks, double tol = 1e-12) const;
};

/// Replaces every block with the blockwise mean.
std::vector<double> project_consensus(std::span<const double> blocks, std::size_t replicas);
std::vector<double> block_mean(std::span<const double> blocks, std::size_t replicas);

}  // namespace conprox
