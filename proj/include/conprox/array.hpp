#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace conprox {

using cplx = std::complex<double>;

/// Dimensions of a 1-D or 2-D frame. 1-D frames are stored as a single row.
struct Shape {
  std::size_t rows = 1;
  std::size_t cols = 1;
  int ndim = 2;

  static Shape line(std::size_t n) { return {1, n, 1}; }
  static Shape plane(std::size_t r, std::size_t c) { return {r, c, 2}; }

  std::size_t size() const { return rows * cols; }
  bool fits_in(const Shape& frame) const { return rows <= frame.rows && cols <= frame.cols; }
  bool operator==(const Shape& o) const { return rows == o.rows && cols == o.cols && ndim == o.ndim; }
  std::string str() const;
};

void require_finite(std::span<const double> v, const char* what);

/// K real signals sharing one shape, stored contiguously signal after signal.
struct SignalSet {
  Shape shape;
  std::size_t count = 0;
  std::vector<double> data;

  SignalSet() = default;
  SignalSet(Shape s, std::size_t k);
  SignalSet(Shape s, std::size_t k, std::vector<double> values);

  std::span<double> signal(std::size_t k) { return {data.data() + k * shape.size(), shape.size()}; }
  std::span<const double> signal(std::size_t k) const {
    return {data.data() + k * shape.size(), shape.size()};
  }
};

/// M filters of a small support, positioned at the origin of a larger frame.
struct Dictionary {
  Shape support;
  Shape frame;
  std::size_t filters = 0;
  std::vector<double> data;  // M x support.size()

  Dictionary() = default;
  Dictionary(Shape support_shape, Shape frame_shape, std::size_t m);

  std::span<double> filter(std::size_t m) { return {data.data() + m * support.size(), support.size()}; }
  std::span<const double> filter(std::size_t m) const {
    return {data.data() + m * support.size(), support.size()};
  }

  /// Zero-padded filters, M x frame.size().
  std::vector<double> padded() const;
  static Dictionary from_padded(std::span<const double> frames, Shape support, Shape frame,
                                std::size_t m);
};

/// Coefficient maps x_{k,m}: K x M x frame.size().
struct CoefficientMaps {
  Shape frame;
  std::size_t signals = 0;
  std::size_t filters = 0;
  std::vector<double> data;

  CoefficientMaps() = default;
  CoefficientMaps(Shape f, std::size_t k, std::size_t m);

  std::size_t block_size() const { return filters * frame.size(); }
  std::span<double> maps(std::size_t k) { return {data.data() + k * block_size(), block_size()}; }
  std::span<const double> maps(std::size_t k) const {
    return {data.data() + k * block_size(), block_size()};
  }
  std::span<double> map(std::size_t k, std::size_t m) {
    return {data.data() + k * block_size() + m * frame.size(), frame.size()};
  }
  std::span<const double> map(std::size_t k, std::size_t m) const {
    return {data.data() + k * block_size() + m * frame.size(), frame.size()};
  }
};

/// Frequency-domain operator laid out bin-major: row n is the length-`width` vector for bin n.
struct FreqBlock {
  std::size_t bins = 0;
  std::size_t width = 0;
  std::vector<cplx> data;

  FreqBlock() = default;
  FreqBlock(std::size_t n, std::size_t m) : bins(n), width(m), data(n * m) {}

  std::span<cplx> row(std::size_t n) { return {data.data() + n * width, width}; }
  std::span<const cplx> row(std::size_t n) const { return {data.data() + n * width, width}; }
};

double dot(std::span<const double> a, std::span<const double> b);
double squared_norm(std::span<const double> a);
double squared_norm(std::span<const cplx> a);

}  // namespace conprox
