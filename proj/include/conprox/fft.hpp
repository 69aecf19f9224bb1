#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "conprox/array.hpp"

namespace conprox {

/// Instrumented operation counters, used to compare per-iteration work of solvers.
namespace ops {
struct Counts {
  std::uint64_t transforms = 0;    // single-frame forward or inverse DFTs
  std::uint64_t bin_solves = 0;    // per-bin linear solves
  std::uint64_t bin_products = 0;  // per-bin operator applications (length-M inner products)
};
void reset();
Counts snapshot();
void count_transforms(std::uint64_t n);
void count_bin_solves(std::uint64_t n);
void count_bin_products(std::uint64_t n);
}  // namespace ops

// Unnormalized forward transform; the inverse carries the 1/N factor.
void fft_forward(std::span<const cplx> in, std::span<cplx> out, Shape frame);
void fft_inverse(std::span<const cplx> in, std::span<cplx> out, Shape frame);

/// Zero-pads `a` (of shape `a_shape`, placed at the origin) to `frame` and transforms it.
std::vector<cplx> dft_forward(std::span<const double> a, Shape a_shape, Shape frame);
std::vector<cplx> dft_forward(std::span<const double> a, Shape frame);
std::vector<cplx> dft_inverse(std::span<const cplx> a, Shape frame);
/// Inverse transform keeping only the real part.
std::vector<double> dft_inverse_real(std::span<const cplx> a, Shape frame);

/// Transforms `width` stacked real frames into a bin-major block (N x width).
FreqBlock transform_stack(std::span<const double> stack, std::size_t width, Shape frame);
/// Inverse of transform_stack; returns width x N real frames.
std::vector<double> inverse_stack(const FreqBlock& block, Shape frame);

}  // namespace conprox
