#include "conprox/array.hpp"

#include <cmath>

#include "conprox/errors.hpp"

namespace conprox {

std::string Shape::str() const {
  if (ndim == 1) return std::to_string(cols);
  return std::to_string(rows) + "x" + std::to_string(cols);
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v) {
    if (!std::isfinite(x)) throw NonFiniteError(std::string(what) + ": non-finite value");
  }
}

SignalSet::SignalSet(Shape s, std::size_t k) : shape(s), count(k), data(s.size() * k, 0.0) {}

SignalSet::SignalSet(Shape s, std::size_t k, std::vector<double> values)
    : shape(s), count(k), data(std::move(values)) {
  if (data.size() != s.size() * k) throw ShapeError("SignalSet: data size does not match K x shape");
  require_finite(data, "SignalSet");
}

Dictionary::Dictionary(Shape support_shape, Shape frame_shape, std::size_t m)
    : support(support_shape), frame(frame_shape), filters(m), data(m * support_shape.size(), 0.0) {
  if (!support.fits_in(frame)) {
    throw ShapeError("Dictionary: support " + support.str() + " exceeds frame " + frame.str());
  }
}

std::vector<double> Dictionary::padded() const {
  const std::size_t n = frame.size();
  std::vector<double> out(filters * n, 0.0);
  for (std::size_t m = 0; m < filters; ++m) {
    for (std::size_t r = 0; r < support.rows; ++r) {
      for (std::size_t c = 0; c < support.cols; ++c) {
        out[m * n + r * frame.cols + c] = data[m * support.size() + r * support.cols + c];
      }
    }
  }
  return out;
}

Dictionary Dictionary::from_padded(std::span<const double> frames, Shape support, Shape frame,
                                   std::size_t m) {
  if (frames.size() != m * frame.size()) throw ShapeError("Dictionary::from_padded: size mismatch");
  Dictionary d(support, frame, m);
  const std::size_t n = frame.size();
  for (std::size_t j = 0; j < m; ++j) {
    for (std::size_t r = 0; r < support.rows; ++r) {
      for (std::size_t c = 0; c < support.cols; ++c) {
        d.data[j * support.size() + r * support.cols + c] = frames[j * n + r * frame.cols + c];
      }
    }
  }
  return d;
}

CoefficientMaps::CoefficientMaps(Shape f, std::size_t k, std::size_t m)
    : frame(f), signals(k), filters(m), data(k * m * f.size(), 0.0) {}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) {
  double s = 0.0;
  for (double x : a) s += x * x;
  return s;
}

double squared_norm(std::span<const cplx> a) {
  double s = 0.0;
  for (const cplx& x : a) s += std::norm(x);
  return s;
}

}  // namespace conprox
