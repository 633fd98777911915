#pragma once
// Experiment configuration: a flat JSON file with strict schema checking
// (unknown keys are hard errors at every nesting level), factories turning
// the parsed config into functionals/potentials/initial laws, and the
// manifest written next to every output table so a run can be reproduced
// from the manifest alone.

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "mfl/cloud.hpp"
#include "mfl/functionals.hpp"
#include "mfl/grid1d.hpp"

namespace mfl {

struct FunctionalSpec {
  std::string family = "composite_expectation";  // composite_expectation | pairwise_interaction |
                                                 // two_layer_net_loss | zero
  int d = 1;                 // zero / pairwise; composite is 1-D from config
  double g_scale = 0.5;      // composite
  double target = 0.5;       // composite
  double amplitude = 1.0;    // pairwise
  double bandwidth = 1.0;    // pairwise
  double truncation = 5.0;   // two-layer net
};

struct InitSpec {
  std::string kind = "gaussian";  // gaussian | uniform
  double mean = 1.0, cov = 1.0;
  double a = 0.0, b = 1.0;
};

struct ExperimentConfig {
  FunctionalSpec functional;
  double curvature = 1.0;  // u(x) = curvature/2 |x|^2
  double sigma = 1.0;

  double dt = 1e-3;
  double t_end = 50.0;
  double save_every = 0.5;

  GridSpec grid;
  std::string scheme = "implicit_exponential";

  InitSpec init;

  int n = 64;                                         // simulate
  std::vector<int> n_list = {8, 16, 32, 64, 128, 256, 512};  // sweep
  int replicas = 8;
  uint64_t seed = 1;

  std::string oracle = "grid";  // grid | frozen_cloud
  int n_ref = 100000;           // frozen_cloud size

  double window_lo = 25.0, window_hi = 50.0;  // plateau averaging window

  double fp_damping = 0.5;
  double fp_tol = 1e-13;
  int fp_max_iter = 1000;

  std::string fault_injection = "none";  // none | flip_intrinsic_sign
  int threads = 0;                       // 0 = library default
  std::string out;                       // optional; the CLI flag overrides
};

// Parse + schema-check + semantic-check. Throws std::runtime_error with the
// offending key path on unknown keys, wrong types, or bad values.
ExperimentConfig load_config(const std::string& path);
ExperimentConfig parse_config_text(const std::string& text, const std::string& origin = "<string>");
void validate_config(const ExperimentConfig& cfg);

// Canonical form (sorted keys, every field echoed) and its FNV-1a hash.
std::string config_canonical(const ExperimentConfig& cfg);
uint64_t config_hash(const ExperimentConfig& cfg);

// Factories. make_functional applies the configured fault injection.
std::shared_ptr<const MeanFieldFunctional> make_functional(const ExperimentConfig& cfg);
ConfiningPotential make_potential(const ExperimentConfig& cfg);
DistributionSpec make_init(const ExperimentConfig& cfg);

// manifest.json in out_dir: command, full config echo, config hash, effective
// seed/threads, produced files.
void write_manifest(const std::string& out_dir, const ExperimentConfig& cfg, const std::string& command,
                    const std::vector<std::string>& outputs);

}  // namespace mfl
