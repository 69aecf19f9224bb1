#include "conprox/io.hpp"

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include "json.hpp"
#include <stdexcept>

#include "conprox/errors.hpp"

namespace conprox {

namespace {

constexpr std::uint32_t kVersion = 1;
constexpr std::array<char, 8> kDictMagic = {'C', 'P', 'X', 'D', 'I', 'C', 'T', '\0'};
constexpr std::array<char, 8> kMapsMagic = {'C', 'P', 'X', 'M', 'A', 'P', 'S', '\0'};
constexpr std::array<char, 8> kDtype = {'f', '6', '4', 'l', 'e', '\0', '\0', '\0'};

template <typename T>
void put_le(std::ostream& os, T v) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits;
  std::memcpy(&bits, &v, sizeof(T));
  for (std::size_t i = 0; i < sizeof(T); ++i) os.put(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

template <typename T>
T get_le(std::istream& is) {
  using U = std::conditional_t<sizeof(T) == 8, std::uint64_t, std::uint32_t>;
  U bits = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    const int c = is.get();
    if (c == EOF) throw std::runtime_error("unexpected end of file");
    bits |= static_cast<U>(static_cast<unsigned char>(c)) << (8 * i);
  }
  T v;
  std::memcpy(&v, &bits, sizeof(T));
  return v;
}

void put_shape(std::ostream& os, Shape s) {
  put_le<std::uint64_t>(os, s.rows);
  put_le<std::uint64_t>(os, s.cols);
}

Shape get_shape(std::istream& is, int ndim) {
  Shape s;
  s.rows = get_le<std::uint64_t>(is);
  s.cols = get_le<std::uint64_t>(is);
  s.ndim = ndim;
  return s;
}

void expect_magic(std::istream& is, const std::array<char, 8>& magic, const std::filesystem::path& path) {
  std::array<char, 8> got{};
  is.read(got.data(), got.size());
  if (!is || got != magic) throw std::runtime_error(path.string() + ": bad magic");
  if (get_le<std::uint32_t>(is) != kVersion) throw std::runtime_error(path.string() + ": unsupported version");
}

void expect_dtype(std::istream& is, const std::filesystem::path& path) {
  std::array<char, 8> got{};
  is.read(got.data(), got.size());
  if (!is || got != kDtype) throw std::runtime_error(path.string() + ": unsupported element type");
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream open_in(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open " + path.string());
  return is;
}

void write_sidecar(const std::filesystem::path& path, const nlohmann::json& meta) {
  std::ofstream os(path.string() + ".json");
  os << meta.dump(2) << "\n";
}

nlohmann::json shape_json(Shape s) {
  if (s.ndim == 1) return nlohmann::json::array({s.cols});
  return nlohmann::json::array({s.rows, s.cols});
}

}  // namespace

void write_dictionary(const std::filesystem::path& path, const Dictionary& dict) {
  auto os = open_out(path);
  os.write(kDictMagic.data(), kDictMagic.size());
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(dict.frame.ndim));
  put_le<std::uint64_t>(os, dict.filters);
  put_shape(os, dict.support);
  put_shape(os, dict.frame);
  os.write(kDtype.data(), kDtype.size());
  for (double v : dict.data) put_le<double>(os, v);
  if (!os) throw std::runtime_error("write failed: " + path.string());

  write_sidecar(path, {{"kind", "dictionary"},
                       {"filters", dict.filters},
                       {"support", shape_json(dict.support)},
                       {"frame", shape_json(dict.frame)},
                       {"dtype", "float64-le"},
                       {"layout", "row-major, filter-major"}});
}

Dictionary read_dictionary(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, kDictMagic, path);
  const int ndim = static_cast<int>(get_le<std::uint32_t>(is));
  const auto m = get_le<std::uint64_t>(is);
  const Shape support = get_shape(is, ndim);
  const Shape frame = get_shape(is, ndim);
  expect_dtype(is, path);
  Dictionary d(support, frame, m);
  for (auto& v : d.data) v = get_le<double>(is);
  require_finite(d.data, "read_dictionary");
  return d;
}

void write_maps(const std::filesystem::path& path, const CoefficientMaps& maps) {
  auto os = open_out(path);
  os.write(kMapsMagic.data(), kMapsMagic.size());
  put_le<std::uint32_t>(os, kVersion);
  put_le<std::uint32_t>(os, static_cast<std::uint32_t>(maps.frame.ndim));
  put_le<std::uint64_t>(os, maps.signals);
  put_le<std::uint64_t>(os, maps.filters);
  put_shape(os, maps.frame);
  os.write(kDtype.data(), kDtype.size());
  for (double v : maps.data) put_le<double>(os, v);
  if (!os) throw std::runtime_error("write failed: " + path.string());

  write_sidecar(path, {{"kind", "coefficient_maps"},
                       {"signals", maps.signals},
                       {"filters", maps.filters},
                       {"frame", shape_json(maps.frame)},
                       {"dtype", "float64-le"},
                       {"layout", "row-major, signal-major then filter-major"}});
}

CoefficientMaps read_maps(const std::filesystem::path& path) {
  auto is = open_in(path);
  expect_magic(is, kMapsMagic, path);
  const int ndim = static_cast<int>(get_le<std::uint32_t>(is));
  const auto k = get_le<std::uint64_t>(is);
  const auto m = get_le<std::uint64_t>(is);
  const Shape frame = get_shape(is, ndim);
  expect_dtype(is, path);
  CoefficientMaps maps(frame, k, m);
  for (auto& v : maps.data) v = get_le<double>(is);
  require_finite(maps.data, "read_maps");
  return maps;
}

}  // namespace conprox
