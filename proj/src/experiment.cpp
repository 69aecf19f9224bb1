#include "conprox/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>

#include "conprox/conv.hpp"
#include "conprox/csc.hpp"
#include "conprox/errors.hpp"
#include "conprox/io.hpp"
#include "json.hpp"

namespace conprox {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

Task parse_task(const std::string& name) {
  if (name == "cdl") return Task::cdl;
  if (name == "csc") return Task::csc;
  if (name == "denoise") return Task::denoise;
  if (name == "anomaly") return Task::anomaly;
  throw std::invalid_argument("unknown task '" + name + "' (cdl, csc, denoise, anomaly)");
}

std::string to_string(Task t) {
  switch (t) {
    case Task::cdl: return "cdl";
    case Task::csc: return "csc";
    case Task::denoise: return "denoise";
    case Task::anomaly: return "anomaly";
  }
  return "?";
}

SignalSet ImageSource::load_signals(std::uint64_t default_seed) const {
  if (!images.empty()) return load_grayscale_images(images, load);
  if (synthetic == 0) throw ConfigError("image source is empty");
  return synthetic_images(synthetic_size, synthetic, synthetic_seed.value_or(default_seed));
}

// ---------------------------------------------------------------------------
// Config parsing
// ---------------------------------------------------------------------------

namespace {

class Reader {
 public:
  Reader(std::string origin, fs::path base) : origin_(std::move(origin)), base_(std::move(base)) {}

  std::string where(const YAML::Node& n) const {
    const auto m = n.Mark();
    if (m.is_null()) return origin_ + ": ";
    return origin_ + ":" + std::to_string(m.line + 1) + ":" + std::to_string(m.column + 1) + ": ";
  }

  [[noreturn]] void fail(const YAML::Node& n, const std::string& msg) const { throw ConfigError(where(n) + msg); }

  void mapping(const YAML::Node& n, const std::string& section, std::initializer_list<const char*> allowed) const {
    if (!n.IsMap()) fail(n, section + ": expected a mapping");
    for (auto it = n.begin(); it != n.end(); ++it) {
      const auto key = it->first.as<std::string>();
      if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return key == a; }) == allowed.end()) {
        fail(it->first, section + ": unknown key '" + key + "'");
      }
    }
  }

  template <class T>
  void get(const YAML::Node& map, const char* key, T& out) const {
    const YAML::Node n = map[key];
    if (!n) return;
    if (!n.IsScalar()) fail(n, std::string(key) + ": expected a scalar");
    if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
      long long v = 0;
      if (!YAML::convert<long long>::decode(n, v) || v < 0) fail(n, std::string(key) + ": expected a non-negative integer");
      out = static_cast<T>(v);
    } else {
      if (!YAML::convert<T>::decode(n, out)) fail(n, std::string(key) + ": invalid value '" + n.Scalar() + "'");
    }
  }

  template <class T, class Parse>
  void get_enum(const YAML::Node& map, const char* key, T& out, Parse parse) const {
    const YAML::Node n = map[key];
    if (!n) return;
    std::string s;
    get(map, key, s);
    try {
      out = parse(s);
    } catch (const std::invalid_argument& e) {
      fail(n, std::string(key) + ": " + e.what());
    }
  }

  fs::path existing(const YAML::Node& n, const std::string& what) const {
    if (!n.IsScalar()) fail(n, what + ": expected a path");
    fs::path p = n.Scalar();
    if (p.is_relative()) p = base_ / p;
    if (!fs::exists(p)) fail(n, what + ": no such file '" + p.string() + "'");
    return p;
  }

  std::vector<fs::path> existing_list(const YAML::Node& map, const char* key) const {
    const YAML::Node n = map[key];
    std::vector<fs::path> out;
    if (!n) return out;
    if (!n.IsSequence()) fail(n, std::string(key) + ": expected a list of paths");
    for (const auto& item : n) out.push_back(existing(item, key));
    return out;
  }

  fs::path path(const YAML::Node& n) const {
    fs::path p = n.Scalar();
    return p.is_relative() ? base_ / p : p;
  }

 private:
  std::string origin_;
  fs::path base_;
};

void read_images(const Reader& r, const YAML::Node& n, const std::string& section, ImageSource& src) {
  r.mapping(n, section, {"images", "synthetic", "crop", "size", "to_gray"});
  src.images = r.existing_list(n, "images");
  if (const auto syn = n["synthetic"]) {
    r.mapping(syn, section + ".synthetic", {"count", "size", "seed"});
    r.get(syn, "count", src.synthetic);
    r.get(syn, "size", src.synthetic_size);
    if (syn["seed"]) {
      std::uint64_t s = 0;
      r.get(syn, "seed", s);
      src.synthetic_seed = s;
    }
    if (src.synthetic == 0 || src.synthetic_size == 0) r.fail(syn, section + ".synthetic: count and size must be > 0");
  }
  r.get(n, "crop", src.load.crop);
  r.get(n, "size", src.load.size);
  r.get(n, "to_gray", src.load.to_gray);
  if (src.empty()) r.fail(n, section + ": give 'images' or 'synthetic'");
}

StepConfig read_step(const Reader& r, const YAML::Node& n, const std::string& section, StepConfig s) {
  if (n.IsScalar()) {
    try {
      s.rule = parse_step_rule(n.Scalar());
    } catch (const std::invalid_argument& e) {
      r.fail(n, section + ": " + e.what());
    }
    return s;
  }
  r.mapping(n, section, {"rule", "fixed", "c"});
  r.get_enum(n, "rule", s.rule, parse_step_rule);
  r.get(n, "fixed", s.fixed);
  r.get(n, "c", s.c);
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(n, section + ": " + e.what());
  }
  return s;
}

InertialConfig read_inertial(const Reader& r, const YAML::Node& n, const std::string& section) {
  InertialConfig c;
  if (n.IsScalar()) {
    try {
      c.scheme = parse_inertial_scheme(n.Scalar());
    } catch (const std::invalid_argument& e) {
      r.fail(n, section + ": " + e.what());
    }
    return c;
  }
  r.mapping(n, section, {"scheme", "a", "b"});
  r.get_enum(n, "scheme", c.scheme, parse_inertial_scheme);
  r.get(n, "a", c.a);
  r.get(n, "b", c.b);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(n, section + ": " + e.what());
  }
  return c;
}

Shape read_support(const Reader& r, const YAML::Node& n) {
  if (n.IsScalar()) {
    long long l = 0;
    if (!YAML::convert<long long>::decode(n, l) || l <= 0) r.fail(n, "support: expected a positive integer");
    return Shape::line(static_cast<std::size_t>(l));
  }
  if (!n.IsSequence() || n.size() < 1 || n.size() > 2) r.fail(n, "support: expected [length] or [rows, cols]");
  std::vector<std::size_t> d;
  for (const auto& v : n) {
    long long x = 0;
    if (!YAML::convert<long long>::decode(v, x) || x <= 0) r.fail(v, "support: expected positive integers");
    d.push_back(static_cast<std::size_t>(x));
  }
  return d.size() == 1 ? Shape::line(d[0]) : Shape::plane(d[0], d[1]);
}

void read_cdl(const Reader& r, const YAML::Node& n, CdlConfig& c) {
  r.mapping(n, "cdl",
            {"filters", "support", "lambda", "iters", "coef_solver", "dict_solver", "coef_inner", "dict_inner", "rho0",
             "sigma0", "relax", "penalty", "coef_step", "coef_inertial", "dict_step", "dict_inertial", "keep_history",
             "divergence_factor", "checkpoint_every"});
  r.get(n, "filters", c.filters);
  if (n["support"]) c.support = read_support(r, n["support"]);
  r.get(n, "lambda", c.lambda);
  r.get(n, "iters", c.iters);
  r.get_enum(n, "coef_solver", c.coef, parse_coef_solver);
  r.get_enum(n, "dict_solver", c.dict, parse_dict_solver);
  r.get(n, "coef_inner", c.coef_inner);
  r.get(n, "dict_inner", c.dict_inner);
  r.get(n, "rho0", c.rho0);
  r.get(n, "sigma0", c.sigma0);
  r.get(n, "relax", c.relax);
  if (const auto p = n["penalty"]) {
    r.mapping(p, "cdl.penalty", {"adaptive", "period", "ratio", "factor"});
    r.get(p, "adaptive", c.penalty.adaptive);
    r.get(p, "period", c.penalty.period);
    r.get(p, "ratio", c.penalty.ratio);
    r.get(p, "factor", c.penalty.factor);
  }
  if (n["coef_step"]) c.coef_step = read_step(r, n["coef_step"], "cdl.coef_step", c.coef_step);
  if (n["dict_step"]) c.dict_step = read_step(r, n["dict_step"], "cdl.dict_step", c.resolved_dict_step());
  if (n["coef_inertial"]) c.coef_inertial = read_inertial(r, n["coef_inertial"], "cdl.coef_inertial");
  if (n["dict_inertial"]) c.dict_inertial = read_inertial(r, n["dict_inertial"], "cdl.dict_inertial");
  r.get(n, "keep_history", c.keep_history);
  r.get(n, "divergence_factor", c.divergence_factor);
  r.get(n, "checkpoint_every", c.checkpoint_every);
  try {
    c.validate();
  } catch (const std::invalid_argument& e) {
    r.fail(n, e.what());
  }
  if (c.coef == CoefSolver::fista && c.coef_step.rule != StepRule::fixed) {
    r.fail(n, "cdl: coef_solver fista needs a fixed coef_step (use fista3k for adaptive steps)");
  }
}

std::pair<CoefSolver, DictSolver> parse_pipeline(const std::string& s) {
  const auto dash = s.find('-');
  if (dash == std::string::npos) throw std::invalid_argument("pipeline '" + s + "': expected <coef>-<dict>, e.g. fista-apg_cns");
  return {parse_coef_solver(s.substr(0, dash)), parse_dict_solver(s.substr(dash + 1))};
}

}  // namespace

ExperimentConfig parse_experiment_config(const std::string& text, const std::string& origin, const fs::path& base_dir,
                                         std::optional<Task> task) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(origin + ":" + std::to_string(e.mark.line + 1) + ":" + std::to_string(e.mark.column + 1) +
                      ": " + e.msg);
  }
  const Reader r(origin, base_dir);
  if (!root || root.IsNull()) throw ConfigError(origin + ": empty configuration");
  r.mapping(root, "config",
            {"task", "seed", "workers", "deterministic", "out", "data", "heldout", "preprocess", "highpass_mu", "cdl",
             "eval", "csc", "denoise", "anomaly"});
  ExperimentConfig cfg;
  if (!root["task"] && !task) r.fail(root, "config: missing 'task'");
  r.get_enum(root, "task", cfg.task, parse_task);
  if (task && root["task"] && cfg.task != *task) {
    r.fail(root["task"], "task: config is for '" + to_string(cfg.task) + "', not '" + to_string(*task) + "'");
  }
  if (task) cfg.task = *task;
  r.get(root, "seed", cfg.seed);
  r.get(root, "workers", cfg.workers);
  if (cfg.workers == 0) r.fail(root["workers"], "workers: must be >= 1");
  r.get(root, "deterministic", cfg.deterministic);
  if (root["out"]) cfg.out = r.path(root["out"]);
  if (root["data"]) read_images(r, root["data"], "data", cfg.data);
  if (root["heldout"]) read_images(r, root["heldout"], "heldout", cfg.heldout);
  r.get_enum(root, "preprocess", cfg.preprocess, parse_preprocess);
  r.get(root, "highpass_mu", cfg.highpass_mu);
  if (root["cdl"]) read_cdl(r, root["cdl"], cfg.cdl);
  cfg.cdl.seed = cfg.seed;
  cfg.cdl.workers = cfg.workers;

  if (const auto e = root["eval"]) {
    r.mapping(e, "eval", {"every", "lambda", "iters"});
    r.get(e, "every", cfg.eval_every);
    r.get(e, "lambda", cfg.eval_lambda);
    r.get(e, "iters", cfg.eval_iters);
    if (cfg.eval_every > 0 && cfg.heldout.empty()) r.fail(e, "eval: needs a 'heldout' image source");
  }

  if (const auto c = root["csc"]) {
    r.mapping(c, "csc", {"dictionary", "solver", "lambda", "iters"});
    if (c["dictionary"]) cfg.csc.dictionary = r.existing(c["dictionary"], "csc.dictionary");
    r.get_enum(c, "solver", cfg.csc.solver, parse_coef_solver);
    r.get(c, "lambda", cfg.csc.lambda);
    r.get(c, "iters", cfg.csc.iters);
  }

  if (const auto d = root["denoise"]) {
    r.mapping(d, "denoise", {"sigma", "lambda_grid", "iters", "pipelines", "dictionary"});
    r.get(d, "sigma", cfg.denoise.sigma);
    if (!(cfg.denoise.sigma >= 0.0)) r.fail(d["sigma"], "denoise.sigma: must be >= 0");
    if (const auto g = d["lambda_grid"]) {
      r.mapping(g, "denoise.lambda_grid", {"min", "max", "points"});
      r.get(g, "min", cfg.denoise.lambda_min);
      r.get(g, "max", cfg.denoise.lambda_max);
      r.get(g, "points", cfg.denoise.lambda_points);
      if (!(cfg.denoise.lambda_min > 0 && cfg.denoise.lambda_max >= cfg.denoise.lambda_min) ||
          cfg.denoise.lambda_points == 0) {
        r.fail(g, "denoise.lambda_grid: need 0 < min <= max and points > 0");
      }
    }
    r.get(d, "iters", cfg.denoise.iters);
    if (const auto p = d["pipelines"]) {
      if (!p.IsSequence() || p.size() == 0) r.fail(p, "denoise.pipelines: expected a non-empty list");
      cfg.denoise.pipelines.clear();
      for (const auto& item : p) {
        try {
          cfg.denoise.pipelines.push_back(parse_pipeline(item.as<std::string>()));
        } catch (const std::exception& e) {
          r.fail(item, std::string("denoise.pipelines: ") + e.what());
        }
      }
    }
    if (d["dictionary"]) cfg.denoise.dictionary = r.existing(d["dictionary"], "denoise.dictionary");
  }

  if (const auto a = root["anomaly"]) {
    auto& s = cfg.anomaly;
    r.mapping(a, "anomaly",
              {"series", "synthetic", "dictionaries", "train", "lambda", "beta", "group_per_timestep", "solver",
               "iters", "flag"});
    if (a["series"]) s.series = r.existing(a["series"], "anomaly.series");
    if (const auto syn = a["synthetic"]) {
      r.mapping(syn, "anomaly.synthetic", {"sensors", "length", "windows", "clean_prefix"});
      r.get(syn, "sensors", s.synthetic_sensors);
      r.get(syn, "length", s.synthetic_length);
      r.get(syn, "windows", s.synthetic_windows);
      r.get(syn, "clean_prefix", s.synthetic_clean_prefix);
    }
    s.dictionaries = r.existing_list(a, "dictionaries");
    if (const auto t = a["train"]) {
      r.mapping(t, "anomaly.train", {"filters", "length", "lambda", "iters", "coef_inner", "rows"});
      r.get(t, "filters", s.train.filters);
      r.get(t, "length", s.train.length);
      r.get(t, "lambda", s.train.lambda);
      r.get(t, "iters", s.train.iters);
      r.get(t, "coef_inner", s.train.coef_inner);
      r.get(t, "rows", s.train_rows);
    }
    r.get(a, "lambda", s.lambda);
    r.get(a, "beta", s.beta);
    if (!(s.lambda >= 0.0) || !(s.beta >= 0.0)) r.fail(a, "anomaly: lambda and beta must be >= 0");
    r.get(a, "group_per_timestep", s.group_per_timestep);
    if (const auto sv = a["solver"]) {
      const auto name = sv.as<std::string>();
      if (name != "apg" && name != "admm") r.fail(sv, "anomaly.solver: expected apg or admm");
      s.use_admm = name == "admm";
    }
    r.get(a, "iters", s.iters);
    if (const auto f = a["flag"]) {
      r.mapping(f, "anomaly.flag", {"k", "threshold", "edge_guard", "merge_gap", "min_length"});
      r.get(f, "k", s.flag.k);
      if (f["threshold"]) {
        double t = 0.0;
        r.get(f, "threshold", t);
        s.flag.threshold = t;
      }
      r.get(f, "edge_guard", s.flag.edge_guard);
      r.get(f, "merge_gap", s.flag.merge_gap);
      r.get(f, "min_length", s.flag.min_length);
      if (s.flag.min_length == 0) r.fail(f, "anomaly.flag.min_length: must be >= 1");
    }
    s.train.seed = cfg.seed;
    s.train.workers = cfg.workers;
  }

  // Task requirements.
  switch (cfg.task) {
    case Task::cdl:
      if (cfg.data.empty()) r.fail(root, "task cdl: missing 'data'");
      break;
    case Task::csc:
      if (cfg.data.empty()) r.fail(root, "task csc: missing 'data'");
      if (cfg.csc.dictionary.empty()) r.fail(root["csc"] ? root["csc"] : root, "task csc: missing 'csc.dictionary'");
      break;
    case Task::denoise:
      if (cfg.heldout.empty()) r.fail(root, "task denoise: missing 'heldout' test images");
      if (!cfg.denoise.dictionary && cfg.data.empty()) r.fail(root, "task denoise: missing 'data' training images");
      break;
    case Task::anomaly:
      break;
  }
  return cfg;
}

ExperimentConfig load_experiment_config(const fs::path& path, std::optional<Task> task) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path.string() + ": cannot open configuration");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_experiment_config(ss.str(), path.string(), path.parent_path(), task);
}

// ---------------------------------------------------------------------------
// Runs
// ---------------------------------------------------------------------------

namespace {

void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// Filters normalized to [0, 1] and tiled on a square grid with one-pixel gaps.
void write_dictionary_tiles(const fs::path& path, const Dictionary& d) {
  if (d.support.ndim != 2) return;
  const std::size_t h = d.support.rows, w = d.support.cols;
  const auto side = static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(d.filters))));
  const std::size_t W = side * (w + 1) + 1, H = side * (h + 1) + 1;
  std::vector<double> img(W * H, 1.0);
  for (std::size_t m = 0; m < d.filters; ++m) {
    const auto f = d.filter(m);
    const auto [lo, hi] = std::minmax_element(f.begin(), f.end());
    const double span = *hi - *lo;
    const std::size_t oy = (m / side) * (h + 1) + 1, ox = (m % side) * (w + 1) + 1;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) img[(oy + y) * W + ox + x] = span > 0 ? (f[y * w + x] - *lo) / span : 0.5;
    }
  }
  write_pgm(path, img, W, H);
}

double mean_sparsity(const CoefficientMaps& maps) {
  double s = 0.0;
  for (std::size_t k = 0; k < maps.signals; ++k) s += sparsity_measure(maps.maps(k), maps.frame.size());
  return s / static_cast<double>(std::max<std::size_t>(maps.signals, 1));
}

struct RunContext {
  const ExperimentConfig& cfg;
  std::ostream& log;
  json summary;

  void trace(const fs::path& name, const ConvergenceTrace& t) const { t.write(cfg.out / name, cfg.deterministic); }
  void timing(const char* key, double ms) {
    if (!cfg.deterministic) summary[key] = ms / 1000.0;
  }
};

CdlResult train(RunContext& ctx, CdlConfig c, const SignalSet& train, const std::string& tag,
                const SignalSet* heldout) {
  std::ofstream gen;
  if (ctx.cfg.eval_every > 0 && heldout) {
    gen.open(ctx.cfg.out / ("generalization" + tag + ".tsv"));
    gen << "iter\theldout_objective\n";
    gen.precision(17);
  }
  const std::size_t ckpt = c.checkpoint_every;
  const std::size_t eval = heldout ? ctx.cfg.eval_every : 0;
  if (ckpt || eval) {
    c.checkpoint_every = std::gcd(ckpt, eval);
    c.checkpoint = [&](std::size_t it, const Dictionary& d) {
      if (ckpt && it % ckpt == 0) write_dictionary(ctx.cfg.out / ("checkpoint" + tag + "_" + std::to_string(it) + ".bin"), d);
      if (eval && it % eval == 0) {
        const double obj = heldout_objective(d, *heldout, ctx.cfg.eval_lambda, ctx.cfg.eval_iters, ctx.cfg.workers);
        gen << it << '\t' << obj << '\n';
        ctx.log << "  iter " << it << ": held-out objective " << obj << '\n';
      }
    };
  }
  return cdl_train(c, train);
}

void run_cdl(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto raw = cfg.data.load_signals(cfg.seed);
  const auto split = split_lowpass(raw, cfg.preprocess, cfg.highpass_mu);
  std::optional<SignalSet> held;
  if (!cfg.heldout.empty()) held = split_lowpass(cfg.heldout.load_signals(cfg.seed + 1), cfg.preprocess, cfg.highpass_mu).high;
  ctx.log << "cdl: " << raw.count << " signals, " << cfg.cdl.filters << " filters, " << to_string(cfg.cdl.coef) << "-"
          << to_string(cfg.cdl.dict) << ", " << cfg.cdl.iters << " iterations\n";
  Stopwatch clock;
  const auto res = train(ctx, cfg.cdl, split.high, "", held ? &*held : nullptr);
  ctx.timing("time_s", clock.elapsed_ms());
  ctx.trace("trace.tsv", res.trace);
  write_dictionary(cfg.out / "dictionary.bin", res.dict);
  write_maps(cfg.out / "maps.bin", res.maps);
  write_dictionary_tiles(cfg.out / "dictionary.pgm", res.dict);
  ctx.summary["initial_objective"] = res.trace.rows.front().objective;
  ctx.summary["final_objective"] = res.trace.final_objective();
  ctx.summary["sparsity_percent"] = mean_sparsity(res.maps);
  ctx.summary["filter_replacements"] = res.replacements;
  ctx.log << "final objective " << res.trace.final_objective() << '\n';
}

void run_csc(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto raw = cfg.data.load_signals(cfg.seed);
  const auto split = split_lowpass(raw, cfg.preprocess, cfg.highpass_mu);
  const auto dict = with_frame(read_dictionary(cfg.csc.dictionary), raw.shape);
  CscProblem p{dict, split.high, cfg.csc.lambda};
  Stopwatch clock;
  CscResult res;
  if (cfg.csc.solver == CoefSolver::admm) {
    CscAdmmOptions o;
    o.iters = cfg.csc.iters;
    o.workers = cfg.workers;
    res = csc_admm_solve(p, o);
  } else {
    CscFistaOptions o;
    o.iters = cfg.csc.iters;
    o.workers = cfg.workers;
    if (cfg.csc.solver == CoefSolver::fista3k) {
      o.variant = CscVariant::fista3k;
      o.step = StepConfig{StepRule::fista3k};
    }
    res = csc_fista_solve(p, o);
  }
  ctx.timing("time_s", clock.elapsed_ms());
  ctx.trace("trace.tsv", res.trace);
  write_maps(cfg.out / "maps.bin", res.maps);
  const auto obj = csc_objective(dict, res.maps, p.signals, p.lambda);
  ctx.summary["solver"] = to_string(cfg.csc.solver);
  ctx.summary["objective"] = obj.total;
  ctx.summary["fidelity"] = obj.fidelity;
  ctx.summary["l1"] = obj.l1;
  json per = json::array();
  for (std::size_t k = 0; k < res.maps.signals; ++k) {
    auto rec = conv_sum(dict, res.maps, k);
    const auto lo = split.low.signal(k);
    for (std::size_t i = 0; i < rec.size(); ++i) rec[i] += lo[i];
    per.push_back({{"image", k},
                   {"sparsity_percent", sparsity_measure(res.maps.maps(k), raw.shape.size())},
                   {"psnr_db", psnr(raw.signal(k), rec)}});
  }
  ctx.summary["images"] = per;
  ctx.log << "csc objective " << obj.total << '\n';
}

void run_denoise(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto test = cfg.heldout.load_signals(cfg.seed + 1);
  DenoiseOptions dopts;
  dopts.sigma = cfg.denoise.sigma;
  dopts.lambdas = log_grid(cfg.denoise.lambda_min, cfg.denoise.lambda_max, cfg.denoise.lambda_points);
  dopts.iters = cfg.denoise.iters;
  dopts.seed = cfg.seed + 1000;
  dopts.preprocess = cfg.preprocess;
  dopts.mu = cfg.highpass_mu;
  dopts.workers = cfg.workers;

  std::vector<std::pair<std::string, Dictionary>> dicts;
  if (cfg.denoise.dictionary) {
    dicts.emplace_back("given", read_dictionary(*cfg.denoise.dictionary));
  } else {
    const auto raw = cfg.data.load_signals(cfg.seed);
    const auto split = split_lowpass(raw, cfg.preprocess, cfg.highpass_mu);
    for (const auto& [coef, dict] : cfg.denoise.pipelines) {
      const std::string name = to_string(coef) + "-" + to_string(dict);
      CdlConfig c = cfg.cdl;
      c.coef = coef;
      c.dict = dict;
      if (coef == CoefSolver::fista3k) c.coef_step = StepConfig{StepRule::fista3k};
      if (coef != CoefSolver::fista3k && c.coef_step.rule == StepRule::fista3k) c.coef_step = StepConfig{StepRule::fixed};
      ctx.log << "training " << name << '\n';
      Stopwatch clock;
      auto res = train(ctx, c, split.high, "_" + name, nullptr);
      ctx.timing(("train_time_s_" + name).c_str(), clock.elapsed_ms());
      ctx.trace("trace_" + name + ".tsv", res.trace);
      write_dictionary(cfg.out / ("dictionary_" + name + ".bin"), res.dict);
      dicts.emplace_back(name, std::move(res.dict));
    }
  }

  std::ofstream table(cfg.out / "denoise.tsv");
  table << "pipeline\timage\tlambda\tpsnr_db\n";
  table.precision(10);
  json pipes = json::object();
  std::vector<std::vector<double>> best;
  for (const auto& [name, d] : dicts) {
    const auto rep = denoise_evaluate(d, test, dopts);
    for (std::size_t k = 0; k < test.count; ++k) {
      for (std::size_t j = 0; j < rep.lambdas.size(); ++j) {
        table << name << '\t' << k << '\t' << rep.lambdas[j] << '\t' << rep.psnr[k][j] << '\n';
      }
      if (test.shape.ndim == 2) {
        write_pgm(cfg.out / ("denoised_" + name + "_" + std::to_string(k) + ".pgm"), rep.best.signal(k),
                  test.shape.cols, test.shape.rows);
      }
    }
    pipes[name] = {{"best_psnr_db", rep.best_psnr}, {"best_lambda", rep.best_lambda}, {"noisy_psnr_db", rep.noisy_psnr}};
    best.push_back(rep.best_psnr);
    ctx.log << name << ": mean best PSNR "
            << std::accumulate(rep.best_psnr.begin(), rep.best_psnr.end(), 0.0) / test.count << " dB\n";
  }
  ctx.summary["sigma"] = cfg.denoise.sigma;
  ctx.summary["pipelines"] = pipes;
  if (best.size() >= 2) {
    double worst = 0.0;
    for (std::size_t k = 0; k < test.count; ++k) worst = std::max(worst, std::abs(best[0][k] - best[1][k]));
    ctx.summary["max_best_psnr_gap_db"] = worst;
  }
}

void run_anomaly(RunContext& ctx) {
  const auto& cfg = ctx.cfg;
  const auto& s = cfg.anomaly;
  SeriesTable table;
  std::vector<Window> injected;
  if (s.series) {
    table = read_series_csv(*s.series);
  } else {
    auto syn = synthetic_series(s.synthetic_sensors, s.synthetic_length, s.synthetic_windows, cfg.seed,
                                s.synthetic_clean_prefix);
    table = std::move(syn.table);
    injected = syn.injected;
    write_series_csv(cfg.out / "series.csv", table);
  }
  const Shape frame = table.series.shape;
  const std::size_t P = table.series.count, T = frame.size();

  AnomalyProblem prob;
  prob.series = table.series;
  prob.lambda = s.lambda;
  prob.beta = s.beta;
  prob.group_per_timestep = s.group_per_timestep;
  if (!s.dictionaries.empty()) {
    if (s.dictionaries.size() != P) {
      throw ConfigError("anomaly.dictionaries: " + std::to_string(s.dictionaries.size()) + " files for " +
                        std::to_string(P) + " series");
    }
    for (const auto& path : s.dictionaries) prob.dicts.push_back(with_frame(read_dictionary(path), frame));
  } else {
    const std::size_t rows = s.train_rows ? std::min(s.train_rows, T)
                             : injected.empty() ? T
                                                : s.synthetic_clean_prefix;
    SignalSet train(Shape::line(rows), P);
    for (std::size_t p = 0; p < P; ++p) {
      const auto src = table.series.signal(p);
      std::copy(src.begin(), src.begin() + static_cast<std::ptrdiff_t>(rows), train.signal(p).begin());
    }
    ctx.log << "training " << P << " series dictionaries on " << rows << " rows\n";
    ConvergenceTrace tt;
    Stopwatch clock;
    const auto dicts = train_series_dictionaries(train, s.train, &tt);
    ctx.timing("train_time_s", clock.elapsed_ms());
    ctx.trace("train_trace.tsv", tt);
    for (std::size_t p = 0; p < P; ++p) {
      write_dictionary(cfg.out / ("dictionary_" + table.names[p] + ".bin"), dicts[p]);
      prob.dicts.push_back(with_frame(dicts[p], frame));
    }
  }

  AnomalyOptions o;
  o.iters = s.iters;
  o.workers = cfg.workers;
  Stopwatch clock;
  const auto res = s.use_admm ? caddict_admm_consensus(prob, o) : caddict_apg_consensus(prob, o);
  ctx.timing("solve_time_s", clock.elapsed_ms());
  ctx.trace("trace.tsv", res.trace);
  const auto det = detect_anomalies(res.solution.score, s.flag);
  write_scores_csv(cfg.out / "scores.csv", res.solution.score, det.flags);
  json wins = json::array();
  for (const auto& w : det.windows) wins.push_back({w.begin, w.end});
  ctx.summary["solver"] = s.use_admm ? "admm" : "apg";
  ctx.summary["final_objective"] = res.trace.final_objective();
  ctx.summary["threshold"] = det.threshold;
  ctx.summary["windows"] = wins;
  if (!injected.empty()) {
    json inj = json::array();
    std::size_t hit = 0;
    for (const auto& w : injected) {
      inj.push_back({w.begin, w.end});
      hit += std::any_of(det.windows.begin(), det.windows.end(),
                         [&](const Window& d) { return d.begin < w.end && d.end > w.begin; });
    }
    ctx.summary["injected"] = inj;
    ctx.summary["injected_flagged"] = hit;
  }
  ctx.log << det.windows.size() << " anomalous windows flagged\n";
}

}  // namespace

int run_experiment(const ExperimentConfig& cfg, std::ostream& log) {
  fs::create_directories(cfg.out);
  RunContext ctx{cfg, log, json::object()};
  ctx.summary["task"] = to_string(cfg.task);
  ctx.summary["seed"] = cfg.seed;
  ctx.summary["status"] = "ok";
  int code = 0;
  try {
    switch (cfg.task) {
      case Task::cdl: run_cdl(ctx); break;
      case Task::csc: run_csc(ctx); break;
      case Task::denoise: run_denoise(ctx); break;
      case Task::anomaly: run_anomaly(ctx); break;
    }
  } catch (const DivergenceError& e) {
    ctx.summary["status"] = "diverged";
    ctx.summary["message"] = e.what();
    log << "divergence guard: " << e.what() << '\n';
    code = 3;
  }
  write_json(cfg.out / "summary.json", ctx.summary);
  return code;
}

}  // namespace conprox
