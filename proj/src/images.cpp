#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <random>
#include <sstream>
#include <stdexcept>

#include "conprox/bench.hpp"
#include "conprox/errors.hpp"

namespace conprox {

namespace {

double luma(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

// Next header token, skipping whitespace and '#' comments.
std::string pnm_token(std::istream& in) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      while ((c = in.get()) != EOF && c != '\n') {
      }
    } else if (!std::isspace(c)) {
      tok.push_back(static_cast<char>(c));
      break;
    }
  }
  while ((c = in.peek()) != EOF && !std::isspace(c) && c != '#') tok.push_back(static_cast<char>(in.get()));
  return tok;
}

GrayImage read_pnm(const std::filesystem::path& path, bool to_gray) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  const std::string magic = pnm_token(in);
  const bool color = magic == "P6" || magic == "P3";
  const bool binary = magic == "P5" || magic == "P6";
  if (magic != "P2" && magic != "P3" && magic != "P5" && magic != "P6") {
    throw std::runtime_error(path.string() + ": unsupported PNM type " + magic);
  }
  if (color && !to_gray) throw std::runtime_error(path.string() + ": color image; enable grayscale conversion");
  GrayImage img;
  long maxval = 0;
  try {
    img.width = std::stoul(pnm_token(in));
    img.height = std::stoul(pnm_token(in));
    maxval = std::stol(pnm_token(in));
  } catch (const std::exception&) {
    throw std::runtime_error(path.string() + ": malformed PNM header");
  }
  if (img.width == 0 || img.height == 0 || maxval <= 0 || maxval > 65535) {
    throw std::runtime_error(path.string() + ": malformed PNM header");
  }
  const std::size_t channels = color ? 3 : 1;
  const std::size_t n = img.width * img.height * channels;
  std::vector<double> raw(n);
  if (binary) {
    in.get();  // single whitespace after maxval
    const std::size_t bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(n * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(in.gcount()) != buf.size()) throw std::runtime_error(path.string() + ": truncated");
    for (std::size_t i = 0; i < n; ++i) raw[i] = bytes == 2 ? buf[2 * i] * 256.0 + buf[2 * i + 1] : buf[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) {
      const auto tok = pnm_token(in);
      if (tok.empty()) throw std::runtime_error(path.string() + ": truncated");
      raw[i] = std::stod(tok);
    }
  }
  img.pixels.resize(img.width * img.height);
  const double scale = 1.0 / static_cast<double>(maxval);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    img.pixels[i] = color ? luma(raw[3 * i], raw[3 * i + 1], raw[3 * i + 2]) * scale : raw[i] * scale;
  }
  return img;
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

GrayImage read_png(const std::filesystem::path& path, bool to_gray) {
  std::unique_ptr<std::FILE, FileCloser> fp(std::fopen(path.c_str(), "rb"));
  if (!fp) throw std::runtime_error("cannot open " + path.string());
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    throw std::runtime_error("libpng initialisation failed");
  }
  GrayImage img;
  std::string error;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw std::runtime_error(path.string() + ": invalid PNG");
  }
  png_init_io(png, fp.get());
  png_read_png(png, info, PNG_TRANSFORM_EXPAND | PNG_TRANSFORM_STRIP_ALPHA | PNG_TRANSFORM_PACKING, nullptr);
  img.width = png_get_image_width(png, info);
  img.height = png_get_image_height(png, info);
  const int depth = png_get_bit_depth(png, info);
  const bool color = (png_get_color_type(png, info) & PNG_COLOR_MASK_COLOR) != 0;
  if (color && !to_gray) {
    error = path.string() + ": color image; enable grayscale conversion";
  } else {
    png_bytepp rows = png_get_rows(png, info);
    const std::size_t channels = color ? 3 : 1;
    const double scale = depth == 16 ? 1.0 / 65535.0 : 1.0 / 255.0;
    img.pixels.resize(img.width * img.height);
    for (std::size_t y = 0; y < img.height; ++y) {
      const png_bytep row = rows[y];
      for (std::size_t x = 0; x < img.width; ++x) {
        double c[3];
        for (std::size_t ch = 0; ch < channels; ++ch) {
          const std::size_t k = x * channels + ch;
          c[ch] = depth == 16 ? row[2 * k] * 256.0 + row[2 * k + 1] : row[k];
        }
        img.pixels[y * img.width + x] = (color ? luma(c[0], c[1], c[2]) : c[0]) * scale;
      }
    }
  }
  png_destroy_read_struct(&png, &info, nullptr);
  if (!error.empty()) throw std::runtime_error(error);
  return img;
}

}  // namespace

GrayImage read_image(const std::filesystem::path& path, bool to_gray) {
  std::ifstream probe(path, std::ios::binary);
  if (!probe) throw std::runtime_error("cannot open " + path.string());
  unsigned char sig[8] = {};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return read_png(path, to_gray);
  if (sig[0] == 'P') return read_pnm(path, to_gray);
  throw std::runtime_error(path.string() + ": unrecognised image format (PGM/PPM or PNG expected)");
}

void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t width,
               std::size_t height) {
  if (pixels.size() != width * height) throw ShapeError("write_pgm: pixel count does not match size");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << width << ' ' << height << "\n65535\n";
  for (double v : pixels) {
    const auto q = static_cast<unsigned>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0));
    out.put(static_cast<char>(q >> 8));
    out.put(static_cast<char>(q & 0xff));
  }
}

GrayImage center_crop(const GrayImage& img, std::size_t crop) {
  if (crop == 0 || crop > img.width || crop > img.height) {
    throw ShapeError("center_crop: crop " + std::to_string(crop) + " does not fit " + std::to_string(img.width) + "x" +
                     std::to_string(img.height));
  }
  GrayImage out;
  out.width = out.height = crop;
  out.pixels.resize(crop * crop);
  const std::size_t x0 = (img.width - crop) / 2, y0 = (img.height - crop) / 2;
  for (std::size_t y = 0; y < crop; ++y) {
    for (std::size_t x = 0; x < crop; ++x) out.pixels[y * crop + x] = img.pixels[(y0 + y) * img.width + x0 + x];
  }
  return out;
}

GrayImage rescale(const GrayImage& img, std::size_t width, std::size_t height) {
  if (width == 0 || height == 0) throw ShapeError("rescale: zero target size");
  if (width == img.width && height == img.height) return img;
  GrayImage out;
  out.width = width;
  out.height = height;
  out.pixels.resize(width * height);
  // Integer downscale: block means.
  if (img.width % width == 0 && img.height % height == 0) {
    const std::size_t fx = img.width / width, fy = img.height / height;
    for (std::size_t y = 0; y < height; ++y) {
      for (std::size_t x = 0; x < width; ++x) {
        double s = 0.0;
        for (std::size_t j = 0; j < fy; ++j) {
          for (std::size_t i = 0; i < fx; ++i) s += img.pixels[(y * fy + j) * img.width + x * fx + i];
        }
        out.pixels[y * width + x] = s / static_cast<double>(fx * fy);
      }
    }
    return out;
  }
  const double sx = static_cast<double>(img.width) / width, sy = static_cast<double>(img.height) / height;
  auto at = [&](std::ptrdiff_t x, std::ptrdiff_t y) {
    x = std::clamp<std::ptrdiff_t>(x, 0, static_cast<std::ptrdiff_t>(img.width) - 1);
    y = std::clamp<std::ptrdiff_t>(y, 0, static_cast<std::ptrdiff_t>(img.height) - 1);
    return img.pixels[static_cast<std::size_t>(y) * img.width + static_cast<std::size_t>(x)];
  };
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = (y + 0.5) * sy - 0.5;
    const auto y0 = static_cast<std::ptrdiff_t>(std::floor(fy));
    const double wy = fy - y0;
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = (x + 0.5) * sx - 0.5;
      const auto x0 = static_cast<std::ptrdiff_t>(std::floor(fx));
      const double wx = fx - x0;
      out.pixels[y * width + x] = (1 - wy) * ((1 - wx) * at(x0, y0) + wx * at(x0 + 1, y0)) +
                                  wy * ((1 - wx) * at(x0, y0 + 1) + wx * at(x0 + 1, y0 + 1));
    }
  }
  return out;
}

SignalSet load_grayscale_images(const std::vector<std::filesystem::path>& paths, const ImageLoadOptions& opts) {
  if (paths.empty()) throw std::invalid_argument("load_grayscale_images: no paths");
  std::vector<GrayImage> imgs;
  for (const auto& p : paths) {
    GrayImage img = read_image(p, opts.to_gray);
    const std::size_t crop = opts.crop ? opts.crop : std::min(img.width, img.height);
    img = center_crop(img, crop);
    if (opts.size) img = rescale(img, opts.size, opts.size);
    if (!imgs.empty() && img.width != imgs[0].width) {
      throw ShapeError(p.string() + ": size differs from the first image; set crop or size");
    }
    imgs.push_back(std::move(img));
  }
  SignalSet set(Shape::plane(imgs[0].height, imgs[0].width), imgs.size());
  for (std::size_t k = 0; k < imgs.size(); ++k) std::copy(imgs[k].pixels.begin(), imgs[k].pixels.end(), set.signal(k).begin());
  return set;
}

SignalSet synthetic_images(std::size_t size, std::size_t count, std::uint64_t seed) {
  if (size == 0 || count == 0) throw std::invalid_argument("synthetic_images: empty request");
  SignalSet set(Shape::plane(size, size), count);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, 0.03);
  const double pi = std::acos(-1.0);
  for (std::size_t k = 0; k < count; ++k) {
    auto img = set.signal(k);
    for (int c = 0; c < 6; ++c) {
      const double fx = u(rng) * 6.0, fy = u(rng) * 6.0, ph = u(rng) * 2 * pi, a = 0.3 * u(rng);
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          img[y * size + x] += a * std::cos(2 * pi * (fx * x + fy * y) / size + ph);
        }
      }
    }
    for (int e = 0; e < 4; ++e) {
      const double th = u(rng) * 2 * pi, off = (u(rng) - 0.5) * size, a = u(rng) - 0.5;
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          const double d = (x - size / 2.0) * std::cos(th) + (y - size / 2.0) * std::sin(th);
          if (d > off) img[y * size + x] += a;
        }
      }
    }
    for (int d = 0; d < 5; ++d) {
      const double cx = u(rng) * size, cy = u(rng) * size, r = (0.05 + 0.15 * u(rng)) * size, a = u(rng) - 0.5;
      for (std::size_t y = 0; y < size; ++y) {
        for (std::size_t x = 0; x < size; ++x) {
          if ((x - cx) * (x - cx) + (y - cy) * (y - cy) < r * r) img[y * size + x] += a;
        }
      }
    }
    for (double& v : img) v += noise(rng);
    const auto [lo, hi] = std::minmax_element(img.begin(), img.end());
    const double l = *lo, span = *hi - *lo;
    for (double& v : img) v = span > 0 ? (v - l) / span : 0.0;
  }
  return set;
}

}  // namespace conprox
