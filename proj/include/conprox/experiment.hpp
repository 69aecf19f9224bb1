#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "conprox/anomaly.hpp"
#include "conprox/bench.hpp"
#include "conprox/cdl.hpp"

namespace conprox {

/// Invalid experiment configuration. The message starts with "file:line:column:" when the location is known.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { cdl, csc, denoise, anomaly };
Task parse_task(const std::string& name);
std::string to_string(Task t);

struct ImageSource {
  std::vector<std::filesystem::path> images;
  std::size_t synthetic = 0;  // number of generated images when no paths are given
  std::size_t synthetic_size = 64;
  std::optional<std::uint64_t> synthetic_seed;  // default: experiment seed (+1 for held-out)
  ImageLoadOptions load;

  bool empty() const { return images.empty() && synthetic == 0; }
  SignalSet load_signals(std::uint64_t default_seed) const;
};

struct CscSettings {
  std::filesystem::path dictionary;
  CoefSolver solver = CoefSolver::admm;
  double lambda = 0.1;
  std::size_t iters = 200;
};

struct DenoiseSettings {
  double sigma = 0.1;
  double lambda_min = 0.01;
  double lambda_max = 1.0;
  std::size_t lambda_points = 10;
  std::size_t iters = 200;
  std::vector<std::pair<CoefSolver, DictSolver>> pipelines{{CoefSolver::admm, DictSolver::admm_cns},
                                                            {CoefSolver::fista, DictSolver::apg_cns}};
  std::optional<std::filesystem::path> dictionary;  // evaluate this dictionary instead of training
};

struct AnomalySettings {
  std::optional<std::filesystem::path> series;  // CSV; otherwise synthetic
  std::size_t synthetic_sensors = 6;
  std::size_t synthetic_length = 2048;
  std::size_t synthetic_windows = 3;
  std::size_t synthetic_clean_prefix = 1024;
  std::vector<std::filesystem::path> dictionaries;  // one per sensor; otherwise trained
  SeriesDictConfig train;
  std::size_t train_rows = 0;  // leading rows used for training; 0 = all
  double lambda = 0.05;
  double beta = 0.2;
  bool group_per_timestep = true;
  bool use_admm = false;
  std::size_t iters = 500;
  FlagOptions flag{.k = 3.0, .threshold = std::nullopt, .edge_guard = 0, .merge_gap = 8, .min_length = 4};
};

struct ExperimentConfig {
  Task task = Task::cdl;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool deterministic = false;
  std::filesystem::path out = "results";

  ImageSource data;
  ImageSource heldout;
  Preprocess preprocess = Preprocess::highpass;
  double highpass_mu = 5.0;

  CdlConfig cdl;
  std::size_t eval_every = 0;  // held-out CBPDN check during cdl training; 0 = off
  double eval_lambda = 0.1;
  std::size_t eval_iters = 100;

  CscSettings csc;
  DenoiseSettings denoise;
  AnomalySettings anomaly;
};

/// Parses YAML text. Relative paths are resolved against `base_dir` and must exist. When `task` is given
/// the config may omit its own task key; a conflicting one is an error.
ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin,
                                         const std::filesystem::path& base_dir, std::optional<Task> task = {});
ExperimentConfig load_experiment_config(const std::filesystem::path& path, std::optional<Task> task = {});

/// Runs the task and writes its artifacts under cfg.out. Returns 0 on success and 3 when a divergence
/// guard trips (the partial summary is still written).
int run_experiment(const ExperimentConfig& cfg, std::ostream& log);

}  // namespace conprox
