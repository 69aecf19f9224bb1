#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "conprox/bench.hpp"
#include "conprox/conv.hpp"
#include "conprox/csc.hpp"
#include "conprox/errors.hpp"
#include "conprox/fft.hpp"
#include "conprox/parallel.hpp"

namespace conprox {

std::vector<double> awgn_corrupt(std::span<const double> s, double sigma, std::uint64_t seed) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("awgn_corrupt: sigma must be >= 0");
  std::vector<double> out(s.begin(), s.end());
  if (sigma == 0.0) return out;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> n(0.0, sigma);
  for (double& v : out) v += n(rng);
  return out;
}

SignalSet awgn_corrupt(const SignalSet& s, double sigma, std::uint64_t seed) {
  return SignalSet(s.shape, s.count, awgn_corrupt(s.data, sigma, seed));
}

double psnr(std::span<const double> ref, std::span<const double> test, double peak) {
  if (ref.size() != test.size() || ref.empty()) throw ShapeError("psnr: inputs differ in size or are empty");
  double mse = 0.0;
  for (std::size_t i = 0; i < ref.size(); ++i) mse += (ref[i] - test[i]) * (ref[i] - test[i]);
  mse /= static_cast<double>(ref.size());
  if (mse == 0.0) return kPsnrMax;
  return std::min(kPsnrMax, 10.0 * std::log10(peak * peak / mse));
}

double sparsity_measure(std::span<const double> maps, std::size_t n_pixels) {
  if (n_pixels == 0) throw std::invalid_argument("sparsity_measure: n_pixels must be > 0");
  const auto nnz = std::count_if(maps.begin(), maps.end(), [](double v) { return v != 0.0; });
  return 100.0 * static_cast<double>(nnz) / static_cast<double>(n_pixels);
}

std::vector<double> log_grid(double lo, double hi, std::size_t points) {
  if (!(lo > 0.0 && hi >= lo) || points == 0) throw std::invalid_argument("log_grid: need 0 < lo <= hi, points > 0");
  if (points == 1) return {lo};
  std::vector<double> g(points);
  const double a = std::log10(lo), b = std::log10(hi);
  for (std::size_t i = 0; i < points; ++i) g[i] = std::pow(10.0, a + (b - a) * i / (points - 1.0));
  g.back() = hi;
  return g;
}

std::vector<double> tikhonov_lowpass(std::span<const double> s, Shape shape, double mu) {
  if (!(mu >= 0.0)) throw std::invalid_argument("tikhonov_lowpass: mu must be >= 0");
  if (s.size() != shape.size()) throw ShapeError("tikhonov_lowpass: signal does not match shape");
  auto shat = dft_forward(s, shape);
  const double pi = std::acos(-1.0);
  // Frequency response of the forward differences: |1 - e^{-i w}|^2 = 2 - 2 cos w per axis.
  for (std::size_t r = 0; r < shape.rows; ++r) {
    for (std::size_t c = 0; c < shape.cols; ++c) {
      double g = 2.0 - 2.0 * std::cos(2 * pi * c / shape.cols);
      if (shape.rows > 1) g += 2.0 - 2.0 * std::cos(2 * pi * r / shape.rows);
      shat[r * shape.cols + c] /= 1.0 + mu * g;
    }
  }
  return dft_inverse_real(shat, shape);
}

Preprocess parse_preprocess(const std::string& name) {
  if (name == "none") return Preprocess::none;
  if (name == "mean") return Preprocess::mean;
  if (name == "highpass") return Preprocess::highpass;
  throw std::invalid_argument("unknown preprocess '" + name + "' (none, mean, highpass)");
}

std::string to_string(Preprocess p) {
  switch (p) {
    case Preprocess::none: return "none";
    case Preprocess::mean: return "mean";
    case Preprocess::highpass: return "highpass";
  }
  return "?";
}

LowpassSplit split_lowpass(const SignalSet& signals, Preprocess mode, double mu) {
  LowpassSplit out{signals, SignalSet(signals.shape, signals.count)};
  for (std::size_t k = 0; k < signals.count; ++k) {
    const auto s = signals.signal(k);
    auto lo = out.low.signal(k);
    if (mode == Preprocess::mean) {
      const double m = std::accumulate(s.begin(), s.end(), 0.0) / static_cast<double>(s.size());
      std::fill(lo.begin(), lo.end(), m);
    } else if (mode == Preprocess::highpass) {
      const auto l = tikhonov_lowpass(s, signals.shape, mu);
      std::copy(l.begin(), l.end(), lo.begin());
    }
    auto hi = out.high.signal(k);
    for (std::size_t i = 0; i < s.size(); ++i) hi[i] = s[i] - lo[i];
  }
  return out;
}

Dictionary with_frame(const Dictionary& dict, Shape frame) {
  Dictionary d(dict.support, frame, dict.filters);
  d.data = dict.data;
  return d;
}

DenoiseReport denoise_evaluate(const Dictionary& dict_in, const SignalSet& clean, const DenoiseOptions& opts) {
  if (opts.lambdas.empty()) throw std::invalid_argument("denoise_evaluate: empty lambda grid");
  const Dictionary dict = with_frame(dict_in, clean.shape);
  const std::size_t K = clean.count, L = opts.lambdas.size();
  DenoiseReport rep;
  rep.lambdas = opts.lambdas;
  rep.psnr.assign(K, std::vector<double>(L, 0.0));
  rep.noisy_psnr.resize(K);
  rep.best_psnr.assign(K, -1.0);
  rep.best_lambda.assign(K, 0.0);
  rep.best = SignalSet(clean.shape, K);
  SignalSet noisy(clean.shape, K);
  for (std::size_t k = 0; k < K; ++k) {
    const auto n = awgn_corrupt(clean.signal(k), opts.sigma, opts.seed + k);
    std::copy(n.begin(), n.end(), noisy.signal(k).begin());
    rep.noisy_psnr[k] = psnr(clean.signal(k), n);
  }
  const auto split = split_lowpass(noisy, opts.preprocess, opts.mu);
  std::vector<std::vector<double>> recs(K * L);
  parallel_for(K * L, opts.workers, [&](std::size_t job) {
    const std::size_t k = job / L, j = job % L;
    const auto sol = cbpdn_solve(dict, split.high.signal(k), opts.lambdas[j], opts.iters);
    auto rec = conv_sum(dict, sol.maps, 0);
    const auto lo = split.low.signal(k);
    for (std::size_t i = 0; i < rec.size(); ++i) rec[i] += lo[i];
    rep.psnr[k][j] = psnr(clean.signal(k), rec);
    recs[job] = std::move(rec);
  });
  for (std::size_t k = 0; k < K; ++k) {
    const auto j = static_cast<std::size_t>(std::max_element(rep.psnr[k].begin(), rep.psnr[k].end()) - rep.psnr[k].begin());
    rep.best_psnr[k] = rep.psnr[k][j];
    rep.best_lambda[k] = rep.lambdas[j];
    std::copy(recs[k * L + j].begin(), recs[k * L + j].end(), rep.best.signal(k).begin());
  }
  return rep;
}

double heldout_objective(const Dictionary& dict_in, const SignalSet& images, double lambda, std::size_t iters,
                         unsigned workers) {
  const Dictionary dict = with_frame(dict_in, images.shape);
  std::vector<double> obj(images.count);
  parallel_for(images.count, workers,
               [&](std::size_t k) { obj[k] = cbpdn_solve(dict, images.signal(k), lambda, iters).objective; });
  return std::accumulate(obj.begin(), obj.end(), 0.0) / static_cast<double>(images.count);
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  const auto e = s.find_last_not_of(" \t\r");
  return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
}

}  // namespace

SeriesTable read_series_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::string line;
  std::size_t lineno = 0;
  SeriesTable tab;
  while (tab.names.empty() && std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    for (auto& c : split_csv(line)) tab.names.push_back(trim(c));
  }
  if (tab.names.empty()) throw std::runtime_error(path.string() + ": missing header row");
  const std::size_t P = tab.names.size();
  std::vector<std::vector<double>> cols(P);
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto cells = split_csv(line);
    const auto where = path.string() + ":" + std::to_string(lineno);
    if (cells.size() != P) {
      throw std::runtime_error(where + ": expected " + std::to_string(P) + " values, got " + std::to_string(cells.size()));
    }
    for (std::size_t p = 0; p < P; ++p) {
      const auto c = trim(cells[p]);
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(c.data(), c.data() + c.size(), v);
      if (c.empty() || ec != std::errc{} || ptr != c.data() + c.size() || !std::isfinite(v)) {
        throw std::runtime_error(where + ": missing or invalid value in column '" + tab.names[p] + "'");
      }
      cols[p].push_back(v);
    }
  }
  if (cols[0].empty()) throw std::runtime_error(path.string() + ": no data rows");
  const std::size_t T = cols[0].size();
  tab.series = SignalSet(Shape::line(T), P);
  for (std::size_t p = 0; p < P; ++p) std::copy(cols[p].begin(), cols[p].end(), tab.series.signal(p).begin());
  return tab;
}

void write_series_csv(const std::filesystem::path& path, const SeriesTable& table) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (std::size_t p = 0; p < table.names.size(); ++p) out << (p ? "," : "") << table.names[p];
  out << '\n';
  out.precision(17);
  const std::size_t T = table.series.shape.size();
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t p = 0; p < table.series.count; ++p) out << (p ? "," : "") << table.series.signal(p)[t];
    out << '\n';
  }
}

void write_scores_csv(const std::filesystem::path& path, std::span<const double> score,
                      const std::vector<bool>& flags) {
  if (flags.size() != score.size()) throw ShapeError("write_scores_csv: score and flag lengths differ");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.precision(17);
  out << "t,score,flag\n";
  for (std::size_t t = 0; t < score.size(); ++t) out << t << ',' << score[t] << ',' << (flags[t] ? 1 : 0) << '\n';
}

SyntheticSeries synthetic_series(std::size_t sensors, std::size_t length, std::size_t windows, std::uint64_t seed,
                                 std::size_t clean_prefix) {
  constexpr std::size_t kSources = 3, kResponse = 24, kMinGap = 48;
  if (sensors == 0 || length < 4 * kResponse) throw std::invalid_argument("synthetic_series: too small");
  if (clean_prefix >= length) throw std::invalid_argument("synthetic_series: clean prefix covers the series");
  if (windows * 2 * kMinGap > length - clean_prefix) throw std::invalid_argument("synthetic_series: too many windows for the length");
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::normal_distribution<double> n(0.0, 1.0);
  const double pi = std::acos(-1.0);

  // Sparse shared events.
  std::vector<double> events(kSources * length, 0.0);
  for (double& e : events) {
    if (u(rng) < 1.0 / 30.0) e = n(rng);
  }
  SyntheticSeries out;
  out.table.series = SignalSet(Shape::line(length), sensors);
  out.responses.assign(sensors, Dictionary(Shape::line(kResponse), Shape::line(length), kSources));
  for (std::size_t p = 0; p < sensors; ++p) {
    out.table.names.push_back("sensor_" + std::to_string(p));
    auto s = out.table.series.signal(p);
    for (std::size_t m = 0; m < kSources; ++m) {
      // Damped oscillation with a sensor-specific period and decay.
      const double period = 6.0 + 10.0 * u(rng), decay = 3.0 + 6.0 * u(rng), phase = u(rng) * 2 * pi;
      const double gain = 0.5 + u(rng);
      std::vector<double> h(kResponse);
      for (std::size_t j = 0; j < kResponse; ++j) h[j] = gain * std::exp(-static_cast<double>(j) / decay) * std::cos(2 * pi * j / period + phase);
      std::copy(h.begin(), h.end(), out.responses[p].filter(m).begin());
      for (std::size_t t = 0; t < length; ++t) {
        const double e = events[m * length + t];
        if (e == 0.0) continue;
        for (std::size_t j = 0; j < kResponse; ++j) s[(t + j) % length] += e * h[j];
      }
    }
    for (double& v : s) v += 0.02 * n(rng);
  }

  // Anomaly windows, spread over the series with a minimum gap, each hitting a random sensor subset.
  const std::size_t slot = (length - clean_prefix) / std::max<std::size_t>(windows, 1);
  for (std::size_t w = 0; w < windows; ++w) {
    const std::size_t len = 12 + static_cast<std::size_t>(u(rng) * 12);
    const std::size_t lo = clean_prefix + w * slot + kMinGap / 2, hi = clean_prefix + (w + 1) * slot - len - kMinGap / 2;
    const std::size_t begin = lo + static_cast<std::size_t>(u(rng) * static_cast<double>(hi - lo));
    out.injected.push_back({begin, begin + len});
    const double freq = 0.3 + 0.15 * u(rng);
    bool any = false;
    for (std::size_t p = 0; p < sensors; ++p) {
      if (u(rng) > 0.5 && !(p + 1 == sensors && !any)) continue;
      any = true;
      const double amp = 0.8 + 0.6 * u(rng), shift = 0.6 * (u(rng) - 0.5);
      auto s = out.table.series.signal(p);
      for (std::size_t t = begin; t < begin + len; ++t) s[t] += shift + amp * std::sin(2 * pi * freq * t);
    }
  }
  return out;
}

}  // namespace conprox
