#include "conprox/conv.hpp"

#include "conprox/errors.hpp"
#include "conprox/fft.hpp"

namespace conprox {

namespace {

void check_conformable(const FreqBlock& a, const FreqBlock& b, std::size_t s_len, const char* what) {
  if (a.bins != b.bins || a.width != b.width || a.bins != s_len) {
    throw ShapeError(std::string(what) + ": blocks are not conformable");
  }
}

FreqBlock normal_residual(const FreqBlock& op, const FreqBlock& v, std::span<const cplx> target) {
  FreqBlock g(op.bins, op.width);
  for (std::size_t n = 0; n < op.bins; ++n) {
    auto a = op.row(n);
    auto x = v.row(n);
    cplx r = -target[n];
    for (std::size_t m = 0; m < op.width; ++m) r += a[m] * x[m];
    auto out = g.row(n);
    for (std::size_t m = 0; m < op.width; ++m) out[m] = std::conj(a[m]) * r;
  }
  ops::count_bin_products(2 * op.bins);
  return g;
}

}  // namespace

std::vector<double> conv_sum(const Dictionary& dict, const CoefficientMaps& maps, std::size_t k) {
  if (!(dict.frame == maps.frame) || dict.filters != maps.filters || k >= maps.signals) {
    throw ShapeError("conv_sum: dictionary and coefficient maps do not match");
  }
  const FreqBlock dhat = transform_stack(dict.padded(), dict.filters, dict.frame);
  const FreqBlock xhat = transform_stack(maps.maps(k), maps.filters, maps.frame);
  return dft_inverse_real(apply_bins(dhat, xhat), dict.frame);
}

std::vector<cplx> apply_bins(const FreqBlock& op, const FreqBlock& v) {
  if (op.bins != v.bins || op.width != v.width) throw ShapeError("apply_bins: blocks are not conformable");
  std::vector<cplx> out(op.bins);
  for (std::size_t n = 0; n < op.bins; ++n) {
    auto a = op.row(n);
    auto x = v.row(n);
    cplx s = 0.0;
    for (std::size_t m = 0; m < op.width; ++m) s += a[m] * x[m];
    out[n] = s;
  }
  ops::count_bin_products(op.bins);
  return out;
}

FreqBlock freq_gradient_csc(const FreqBlock& dhat, const FreqBlock& xhat, std::span<const cplx> shat) {
  check_conformable(dhat, xhat, shat.size(), "freq_gradient_csc");
  return normal_residual(dhat, xhat, shat);
}

FreqBlock freq_gradient_dict(const FreqBlock& xhat_k, const FreqBlock& dhat, std::span<const cplx> shat_k) {
  check_conformable(xhat_k, dhat, shat_k.size(), "freq_gradient_dict");
  return normal_residual(xhat_k, dhat, shat_k);
}

}  // namespace conprox
