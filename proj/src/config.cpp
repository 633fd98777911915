#include "mfl/config.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

#ifndef MFL_VERSION
#define MFL_VERSION "0.1.0"
#endif

namespace mfl {

namespace {

using nlohmann::json;

[[noreturn]] void bad(const std::string& what) { throw std::runtime_error("config: " + what); }

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) bad("'" + where + "' must be an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok) bad("unknown key '" + where + (where.empty() ? "" : ".") + it.key() + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out, const std::string& where) {
  auto it = j.find(key);
  if (it == j.end()) return;
  try {
    it->get_to(out);
  } catch (const json::exception& e) {
    bad("bad value for '" + where + (where.empty() ? "" : ".") + key + "': " + e.what());
  }
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text, const std::string& origin) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    bad(origin + ": " + e.what());
  }
  ExperimentConfig cfg;
  check_keys(j, "",
             {"functional", "potential", "sigma", "integrator", "grid", "scheme", "init", "n", "n_list",
              "replicas", "seed", "oracle", "n_ref", "window", "fixed_point", "fault_injection",
              "threads", "out"});

  if (j.contains("functional")) {
    const json& f = j["functional"];
    check_keys(f, "functional", {"family", "d", "g_scale", "target", "amplitude", "bandwidth", "truncation"});
    read(f, "family", cfg.functional.family, "functional");
    read(f, "d", cfg.functional.d, "functional");
    read(f, "g_scale", cfg.functional.g_scale, "functional");
    read(f, "target", cfg.functional.target, "functional");
    read(f, "amplitude", cfg.functional.amplitude, "functional");
    read(f, "bandwidth", cfg.functional.bandwidth, "functional");
    read(f, "truncation", cfg.functional.truncation, "functional");
  }
  if (j.contains("potential")) {
    const json& p = j["potential"];
    check_keys(p, "potential", {"curvature"});
    read(p, "curvature", cfg.curvature, "potential");
  }
  read(j, "sigma", cfg.sigma, "");
  if (j.contains("integrator")) {
    const json& g = j["integrator"];
    check_keys(g, "integrator", {"dt", "t_end", "save_every"});
    read(g, "dt", cfg.dt, "integrator");
    read(g, "t_end", cfg.t_end, "integrator");
    read(g, "save_every", cfg.save_every, "integrator");
  }
  if (j.contains("grid")) {
    const json& g = j["grid"];
    check_keys(g, "grid", {"half_width", "cells", "mass_floor"});
    read(g, "half_width", cfg.grid.half_width, "grid");
    read(g, "cells", cfg.grid.cells, "grid");
    read(g, "mass_floor", cfg.grid.mass_floor, "grid");
  }
  read(j, "scheme", cfg.scheme, "");
  if (j.contains("init")) {
    const json& g = j["init"];
    check_keys(g, "init", {"kind", "mean", "cov", "a", "b"});
    read(g, "kind", cfg.init.kind, "init");
    read(g, "mean", cfg.init.mean, "init");
    read(g, "cov", cfg.init.cov, "init");
    read(g, "a", cfg.init.a, "init");
    read(g, "b", cfg.init.b, "init");
  }
  read(j, "n", cfg.n, "");
  read(j, "n_list", cfg.n_list, "");
  read(j, "replicas", cfg.replicas, "");
  read(j, "seed", cfg.seed, "");
  read(j, "oracle", cfg.oracle, "");
  read(j, "n_ref", cfg.n_ref, "");
  if (j.contains("window")) {
    const json& g = j["window"];
    check_keys(g, "window", {"lo", "hi"});
    read(g, "lo", cfg.window_lo, "window");
    read(g, "hi", cfg.window_hi, "window");
  }
  if (j.contains("fixed_point")) {
    const json& g = j["fixed_point"];
    check_keys(g, "fixed_point", {"damping", "tol", "max_iter"});
    read(g, "damping", cfg.fp_damping, "fixed_point");
    read(g, "tol", cfg.fp_tol, "fixed_point");
    read(g, "max_iter", cfg.fp_max_iter, "fixed_point");
  }
  read(j, "fault_injection", cfg.fault_injection, "");
  read(j, "threads", cfg.threads, "");
  read(j, "out", cfg.out, "");

  validate_config(cfg);
  return cfg;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) bad("cannot open '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

void validate_config(const ExperimentConfig& cfg) {
  const std::string& fam = cfg.functional.family;
  if (fam != "composite_expectation" && fam != "pairwise_interaction" && fam != "two_layer_net_loss" &&
      fam != "zero")
    bad("unknown functional.family '" + fam + "'");
  if (cfg.functional.d < 1) bad("functional.d must be >= 1");
  if (fam == "composite_expectation" && cfg.functional.d != 1)
    bad("composite_expectation from config is one-dimensional");
  if (!(cfg.sigma > 0.0)) bad("sigma must be positive");
  if (!(cfg.dt > 0.0)) bad("integrator.dt must be positive");
  if (!(cfg.t_end > 0.0)) bad("integrator.t_end must be positive");
  if (!(cfg.save_every > 0.0)) bad("integrator.save_every must be positive");
  if (!(cfg.grid.half_width > 0.0)) bad("grid.half_width must be positive");
  if (cfg.grid.cells < 8) bad("grid.cells must be >= 8");
  if (cfg.grid.mass_floor < 0.0) bad("grid.mass_floor must be >= 0");
  fp_scheme_from_string(cfg.scheme);  // throws on unknown scheme
  if (cfg.init.kind == "gaussian") {
    if (!(cfg.init.cov > 0.0)) bad("init.cov must be positive");
  } else if (cfg.init.kind == "uniform") {
    if (!(cfg.init.a < cfg.init.b)) bad("init requires a < b");
  } else {
    bad("unknown init.kind '" + cfg.init.kind + "'");
  }
  if (cfg.n < 1) bad("n must be >= 1");
  if (cfg.n_list.empty()) bad("n_list must be non-empty");
  for (size_t i = 0; i < cfg.n_list.size(); ++i) {
    if (cfg.n_list[i] < 1) bad("n_list entries must be >= 1");
    if (i > 0 && cfg.n_list[i] <= cfg.n_list[i - 1]) bad("n_list must be strictly increasing");
  }
  if (cfg.replicas < 2) bad("replicas must be >= 2");
  if (cfg.oracle != "grid" && cfg.oracle != "frozen_cloud") bad("oracle must be grid or frozen_cloud");
  if (cfg.n_ref < 10) bad("n_ref must be >= 10");
  if (!(cfg.window_lo >= 0.0 && cfg.window_lo < cfg.window_hi)) bad("window requires 0 <= lo < hi");
  if (cfg.window_hi > cfg.t_end + 1e-12) bad("window.hi must not exceed t_end");
  if (!(cfg.fp_damping > 0.0 && cfg.fp_damping <= 1.0)) bad("fixed_point.damping must be in (0, 1]");
  if (!(cfg.fp_tol > 0.0)) bad("fixed_point.tol must be positive");
  if (cfg.fp_max_iter < 1) bad("fixed_point.max_iter must be >= 1");
  if (cfg.fault_injection != "none" && cfg.fault_injection != "flip_intrinsic_sign")
    bad("fault_injection must be none or flip_intrinsic_sign");
  if (cfg.threads < 0) bad("threads must be >= 0");
}

namespace {

json config_json(const ExperimentConfig& cfg) {
  // nlohmann objects iterate sorted by key, so dump() is canonical
  json j;
  j["functional"] = {{"family", cfg.functional.family},   {"d", cfg.functional.d},
                     {"g_scale", cfg.functional.g_scale}, {"target", cfg.functional.target},
                     {"amplitude", cfg.functional.amplitude}, {"bandwidth", cfg.functional.bandwidth},
                     {"truncation", cfg.functional.truncation}};
  j["potential"] = {{"curvature", cfg.curvature}};
  j["sigma"] = cfg.sigma;
  j["integrator"] = {{"dt", cfg.dt}, {"t_end", cfg.t_end}, {"save_every", cfg.save_every}};
  j["grid"] = {{"half_width", cfg.grid.half_width},
               {"cells", cfg.grid.cells},
               {"mass_floor", cfg.grid.mass_floor}};
  j["scheme"] = cfg.scheme;
  j["init"] = {{"kind", cfg.init.kind}, {"mean", cfg.init.mean}, {"cov", cfg.init.cov},
               {"a", cfg.init.a},       {"b", cfg.init.b}};
  j["n"] = cfg.n;
  j["n_list"] = cfg.n_list;
  j["replicas"] = cfg.replicas;
  j["seed"] = cfg.seed;
  j["oracle"] = cfg.oracle;
  j["n_ref"] = cfg.n_ref;
  j["window"] = {{"lo", cfg.window_lo}, {"hi", cfg.window_hi}};
  j["fixed_point"] = {{"damping", cfg.fp_damping}, {"tol", cfg.fp_tol}, {"max_iter", cfg.fp_max_iter}};
  j["fault_injection"] = cfg.fault_injection;
  j["threads"] = cfg.threads;
  j["out"] = cfg.out;
  return j;
}

}  // namespace

std::string config_canonical(const ExperimentConfig& cfg) { return config_json(cfg).dump(); }

uint64_t config_hash(const ExperimentConfig& cfg) {
  // FNV-1a over the canonical serialization
  uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : config_canonical(cfg)) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::shared_ptr<const MeanFieldFunctional> make_functional(const ExperimentConfig& cfg) {
  std::shared_ptr<const MeanFieldFunctional> F;
  const FunctionalSpec& fs = cfg.functional;
  if (fs.family == "composite_expectation")
    F = std::make_shared<CompositeExpectation>(CompositeExpectation::default_1d(fs.g_scale, fs.target));
  else if (fs.family == "pairwise_interaction")
    F = std::make_shared<PairwiseInteraction>(fs.d, fs.amplitude, fs.bandwidth);
  else if (fs.family == "two_layer_net_loss")
    F = std::make_shared<TwoLayerNetLoss>(TwoLayerNetLoss::default_task(fs.truncation));
  else if (fs.family == "zero")
    F = std::make_shared<ZeroFunctional>(fs.d);
  else
    bad("unknown functional.family '" + fs.family + "'");
  if (cfg.fault_injection == "flip_intrinsic_sign") F = std::make_shared<FlippedIntrinsicSign>(F);
  return F;
}

ConfiningPotential make_potential(const ExperimentConfig& cfg) { return ConfiningPotential{cfg.curvature}; }

DistributionSpec make_init(const ExperimentConfig& cfg) {
  int d = cfg.functional.d;
  if (cfg.functional.family == "composite_expectation") d = 1;
  if (cfg.functional.family == "two_layer_net_loss") d = 3;
  if (cfg.init.kind == "gaussian") return DistributionSpec::gaussian(cfg.init.mean, cfg.init.cov, d);
  return DistributionSpec::uniform(cfg.init.a, cfg.init.b, d);
}

void write_manifest(const std::string& out_dir, const ExperimentConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs) {
  std::filesystem::create_directories(out_dir);
  json j;
  j["command"] = command;
  j["config"] = config_json(cfg);
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config_hash(cfg)));
  j["config_hash"] = hex;
  j["outputs"] = outputs;
  j["version"] = MFL_VERSION;
  std::ofstream out(std::filesystem::path(out_dir) / "manifest.json");
  if (!out) bad("cannot write manifest in '" + out_dir + "'");
  out << j.dump(2) << "\n";
}

}  // namespace mfl
