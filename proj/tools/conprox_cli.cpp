// Command-line front end: one subcommand per experiment task.
#include <iostream>

#include "CLI11.hpp"
#include "conprox/experiment.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  bool deterministic = false;
};

void add_common(CLI::App* sub, Overrides& o) {
  sub->add_option("--config", o.config, "YAML experiment configuration")->required()->check(CLI::ExistingFile);
  sub->add_option("--out", o.out, "output directory (overrides the config)");
  sub->add_option("--seed", o.seed, "random seed (overrides the config)");
  sub->add_option("--workers", o.workers, "worker threads (overrides the config)")->check(CLI::PositiveNumber);
  sub->add_flag("--deterministic", o.deterministic, "zero timing columns so reruns are byte-identical");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Convolutional sparse coding and dictionary learning experiments"};
  app.require_subcommand(1);
  Overrides o;
  const std::pair<const char*, conprox::Task> commands[] = {
      {"cdl-train", conprox::Task::cdl},
      {"csc-solve", conprox::Task::csc},
      {"denoise-eval", conprox::Task::denoise},
      {"anomaly-detect", conprox::Task::anomaly},
  };
  const char* help[] = {"learn a dictionary", "sparse-code images with a fixed dictionary",
                        "train dictionaries and compare denoising PSNR", "flag anomalous windows in multi-sensor series"};
  std::vector<CLI::App*> subs;
  for (std::size_t i = 0; i < 4; ++i) {
    subs.push_back(app.add_subcommand(commands[i].first, help[i]));
    add_common(subs.back(), o);
  }
  CLI11_PARSE(app, argc, argv);

  conprox::Task task = conprox::Task::cdl;
  for (std::size_t i = 0; i < 4; ++i) {
    if (subs[i]->parsed()) task = commands[i].second;
  }
  conprox::ExperimentConfig cfg;
  try {
    cfg = conprox::load_experiment_config(o.config, task);
  } catch (const conprox::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  }
  if (!o.out.empty()) cfg.out = o.out;
  if (o.seed) {
    cfg.seed = *o.seed;
    cfg.cdl.seed = *o.seed;
    cfg.anomaly.train.seed = *o.seed;
  }
  if (o.workers) {
    cfg.workers = *o.workers;
    cfg.cdl.workers = *o.workers;
    cfg.anomaly.train.workers = *o.workers;
  }
  cfg.deterministic = cfg.deterministic || o.deterministic;
  try {
    return conprox::run_experiment(cfg, std::cout);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
