#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "conprox/anomaly.hpp"
#include "conprox/array.hpp"

namespace conprox {

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;  // row-major, scaled to [0, 1]
};

/// Reads binary/ASCII PGM or PNG. 8- and 16-bit depths are scaled by their maximum value.
/// Color input throws unless `to_gray` is set (luma 0.299 R + 0.587 G + 0.114 B).
GrayImage read_image(const std::filesystem::path& path, bool to_gray = false);

/// 16-bit binary PGM; values are clamped to [0, 1].
void write_pgm(const std::filesystem::path& path, std::span<const double> pixels, std::size_t width,
               std::size_t height);

GrayImage center_crop(const GrayImage& img, std::size_t crop);
/// Bilinear resampling with pixel-centre alignment; an integer downscale reduces to block averaging.
GrayImage rescale(const GrayImage& img, std::size_t width, std::size_t height);

struct ImageLoadOptions {
  std::size_t crop = 0;  // square centre crop; 0 uses the shorter side
  std::size_t size = 0;  // output side length; 0 keeps the crop size
  bool to_gray = false;
};

SignalSet load_grayscale_images(const std::vector<std::filesystem::path>& paths, const ImageLoadOptions& opts);

/// Smooth shading, edges and discs with light noise, min-max scaled to [0, 1].
SignalSet synthetic_images(std::size_t size, std::size_t count, std::uint64_t seed);

// ---------------------------------------------------------------------------
// Metrics
// ---------------------------------------------------------------------------

/// Returned by psnr when the inputs are identical.
inline constexpr double kPsnrMax = 999.0;

std::vector<double> awgn_corrupt(std::span<const double> s, double sigma, std::uint64_t seed);
SignalSet awgn_corrupt(const SignalSet& s, double sigma, std::uint64_t seed);

double psnr(std::span<const double> ref, std::span<const double> test, double peak = 1.0);

/// 100 * nnz / n_pixels; exact zeros only.
double sparsity_measure(std::span<const double> maps, std::size_t n_pixels);

/// `points` values spaced evenly in log10 between lo and hi inclusive.
std::vector<double> log_grid(double lo, double hi, std::size_t points);

// ---------------------------------------------------------------------------
// Denoising and held-out evaluation
// ---------------------------------------------------------------------------

/// argmin_l 1/2 ||l - s||^2 + mu/2 ||grad l||^2 with circular forward differences.
std::vector<double> tikhonov_lowpass(std::span<const double> s, Shape shape, double mu);

enum class Preprocess { none, mean, highpass };
Preprocess parse_preprocess(const std::string& name);
std::string to_string(Preprocess p);

/// signals = high + low; the sparse model is fitted to `high`.
struct LowpassSplit {
  SignalSet high;
  SignalSet low;
};
LowpassSplit split_lowpass(const SignalSet& signals, Preprocess mode, double mu = 5.0);

/// Same filters on another frame.
Dictionary with_frame(const Dictionary& dict, Shape frame);

struct DenoiseOptions {
  double sigma = 0.1;
  std::vector<double> lambdas = log_grid(0.01, 1.0, 10);
  std::size_t iters = 200;
  std::uint64_t seed = 0;  // noise for image k uses seed + k
  Preprocess preprocess = Preprocess::highpass;
  double mu = 5.0;
  unsigned workers = 1;
};

struct DenoiseReport {
  std::vector<double> lambdas;
  std::vector<std::vector<double>> psnr;  // image x lambda
  std::vector<double> noisy_psnr;
  std::vector<double> best_psnr;
  std::vector<double> best_lambda;
  SignalSet best;  // reconstruction at the best lambda
};

/// Corrupts each clean image with AWGN and reconstructs it with cbpdn_solve at every lambda.
DenoiseReport denoise_evaluate(const Dictionary& dict, const SignalSet& clean, const DenoiseOptions& opts);

/// Mean cbpdn_solve objective over the images (already preprocessed).
double heldout_objective(const Dictionary& dict, const SignalSet& images, double lambda, std::size_t iters,
                         unsigned workers = 1);

// ---------------------------------------------------------------------------
// Time series
// ---------------------------------------------------------------------------

struct SeriesTable {
  std::vector<std::string> names;
  SignalSet series;  // one signal per column
};

/// Comma-separated, header row of sensor names, one row per time step. Empty or non-numeric cells throw
/// with their line number.
SeriesTable read_series_csv(const std::filesystem::path& path);
void write_series_csv(const std::filesystem::path& path, const SeriesTable& table);
/// Columns t, score, flag.
void write_scores_csv(const std::filesystem::path& path, std::span<const double> score,
                      const std::vector<bool>& flags);

struct SyntheticSeries {
  SeriesTable table;
  std::vector<Window> injected;
  std::vector<Dictionary> responses;  // generating filters per sensor (not normalized)
};

/// P sensors driven by sparse shared events through smooth per-sensor responses, plus noise.
/// Each of the `windows` anomalies adds a burst to a random subset of sensors, after the first `clean_prefix` samples.
SyntheticSeries synthetic_series(std::size_t sensors, std::size_t length, std::size_t windows, std::uint64_t seed,
                                 std::size_t clean_prefix = 0);

}  // namespace conprox
