#pragma once

#include <span>
#include <vector>

#include "conprox/array.hpp"

namespace conprox {

/// Circular sum of convolutions sum_m d_m * x_{k,m}, evaluated through the DFT.
std::vector<double> conv_sum(const Dictionary& dict, const CoefficientMaps& maps, std::size_t k);

/// Per-bin operator application: out[n] = sum_m op[n,m] * v[n,m].
std::vector<cplx> apply_bins(const FreqBlock& op, const FreqBlock& v);

/// Gradient of 1/2 ||D X_k - s_k||^2 with respect to X_k, per bin: conj(d_n) (d_n^T x_n - s_n).
/// Its inverse transform is the spatial gradient.
FreqBlock freq_gradient_csc(const FreqBlock& dhat, const FreqBlock& xhat, std::span<const cplx> shat);

/// Gradient of 1/2 ||X_k D - s_k||^2 with respect to D; same per-bin structure with X_k as operator.
FreqBlock freq_gradient_dict(const FreqBlock& xhat_k, const FreqBlock& dhat, std::span<const cplx> shat_k);

}  // namespace conprox
