#include "conprox/fft.hpp"

#include <fftw3.h>

#include <atomic>
#include <map>
#include <mutex>
#include <tuple>

#include "conprox/errors.hpp"

namespace conprox {

namespace ops {
namespace {
std::atomic<std::uint64_t> g_transforms{0};
std::atomic<std::uint64_t> g_bin_solves{0};
std::atomic<std::uint64_t> g_bin_products{0};
}  // namespace

void reset() {
  g_transforms = 0;
  g_bin_solves = 0;
  g_bin_products = 0;
}

Counts snapshot() { return {g_transforms.load(), g_bin_solves.load(), g_bin_products.load()}; }

void count_transforms(std::uint64_t n) { g_transforms.fetch_add(n, std::memory_order_relaxed); }
void count_bin_solves(std::uint64_t n) { g_bin_solves.fetch_add(n, std::memory_order_relaxed); }
void count_bin_products(std::uint64_t n) { g_bin_products.fetch_add(n, std::memory_order_relaxed); }
}  // namespace ops

namespace {

// FFTW planning is not thread-safe, execution with the new-array interface is.
class PlanCache {
 public:
  static PlanCache& instance() {
    static PlanCache cache;
    return cache;
  }

  fftw_plan get(Shape frame, int sign) {
    const auto key = std::make_tuple(frame.rows, frame.cols, sign);
    std::lock_guard lock(mu_);
    auto it = plans_.find(key);
    if (it != plans_.end()) return it->second;
    const std::size_t n = frame.size();
    auto* in = fftw_alloc_complex(n);
    auto* out = fftw_alloc_complex(n);
    fftw_plan p = fftw_plan_dft_2d(static_cast<int>(frame.rows), static_cast<int>(frame.cols), in, out,
                                   sign, FFTW_ESTIMATE | FFTW_UNALIGNED);
    fftw_free(in);
    fftw_free(out);
    plans_.emplace(key, p);
    return p;
  }

  ~PlanCache() {
    for (auto& [key, p] : plans_) fftw_destroy_plan(p);
  }

 private:
  std::mutex mu_;
  std::map<std::tuple<std::size_t, std::size_t, int>, fftw_plan> plans_;
};

void execute(std::span<const cplx> in, std::span<cplx> out, Shape frame, int sign) {
  if (in.size() != frame.size() || out.size() != frame.size()) {
    throw ShapeError("fft: buffer length does not match frame " + frame.str());
  }
  fftw_plan p = PlanCache::instance().get(frame, sign);
  if (in.data() == out.data()) {
    std::vector<cplx> tmp(in.begin(), in.end());
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(tmp.data()),
                     reinterpret_cast<fftw_complex*>(out.data()));
  } else {
    // FFTW does not write to its input for out-of-place complex transforms.
    fftw_execute_dft(p, reinterpret_cast<fftw_complex*>(const_cast<cplx*>(in.data())),
                     reinterpret_cast<fftw_complex*>(out.data()));
  }
  ops::count_transforms(1);
}

}  // namespace

void fft_forward(std::span<const cplx> in, std::span<cplx> out, Shape frame) {
  execute(in, out, frame, FFTW_FORWARD);
}

void fft_inverse(std::span<const cplx> in, std::span<cplx> out, Shape frame) {
  execute(in, out, frame, FFTW_BACKWARD);
  const double scale = 1.0 / static_cast<double>(frame.size());
  for (auto& v : out) v *= scale;
}

std::vector<cplx> dft_forward(std::span<const double> a, Shape a_shape, Shape frame) {
  if (a.size() != a_shape.size()) throw ShapeError("dft_forward: data does not match its shape");
  if (!a_shape.fits_in(frame)) {
    throw ShapeError("dft_forward: shape " + a_shape.str() + " larger than frame " + frame.str());
  }
  require_finite(a, "dft_forward");
  std::vector<cplx> buf(frame.size());
  for (std::size_t r = 0; r < a_shape.rows; ++r) {
    for (std::size_t c = 0; c < a_shape.cols; ++c) buf[r * frame.cols + c] = a[r * a_shape.cols + c];
  }
  std::vector<cplx> out(frame.size());
  fft_forward(buf, out, frame);
  return out;
}

std::vector<cplx> dft_forward(std::span<const double> a, Shape frame) {
  return dft_forward(a, frame, frame);
}

std::vector<cplx> dft_inverse(std::span<const cplx> a, Shape frame) {
  std::vector<cplx> out(frame.size());
  fft_inverse(a, out, frame);
  return out;
}

std::vector<double> dft_inverse_real(std::span<const cplx> a, Shape frame) {
  auto c = dft_inverse(a, frame);
  std::vector<double> out(c.size());
  for (std::size_t i = 0; i < c.size(); ++i) out[i] = c[i].real();
  return out;
}

FreqBlock transform_stack(std::span<const double> stack, std::size_t width, Shape frame) {
  const std::size_t n = frame.size();
  if (stack.size() != width * n) throw ShapeError("transform_stack: size mismatch");
  FreqBlock block(n, width);
  std::vector<cplx> buf(n), spec(n);
  for (std::size_t m = 0; m < width; ++m) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = stack[m * n + i];
    fft_forward(buf, spec, frame);
    for (std::size_t i = 0; i < n; ++i) block.data[i * width + m] = spec[i];
  }
  return block;
}

std::vector<double> inverse_stack(const FreqBlock& block, Shape frame) {
  const std::size_t n = frame.size();
  if (block.bins != n) throw ShapeError("inverse_stack: bin count does not match frame");
  const std::size_t width = block.width;
  std::vector<double> out(width * n);
  std::vector<cplx> buf(n), sig(n);
  for (std::size_t m = 0; m < width; ++m) {
    for (std::size_t i = 0; i < n; ++i) buf[i] = block.data[i * width + m];
    fft_inverse(buf, sig, frame);
    for (std::size_t i = 0; i < n; ++i) out[m * n + i] = sig[i].real();
  }
  return out;
}

}  // namespace conprox
