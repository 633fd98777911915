#pragma once
// Drivers behind the CLI subcommands: the derivative/identity validation
// suite, the stationary-state solver, single coupled runs, the (n, replica)
// propagation-of-chaos sweep with its fitted decay summaries, standalone
// curve fitting on report CSVs, and the discrete conditional-entropy sweep.

#include <cstdint>
#include <string>
#include <vector>

#include "mfl/config.hpp"
#include "mfl/dynamics.hpp"
#include "mfl/fit.hpp"
#include "mfl/metrics.hpp"

namespace mfl {

struct CommandResult {
  int exit_code = 0;
  std::string message;
};

// Sweep output, pure compute (no I/O): per-n plateau statistics with
// replica-jackknife standard errors, per-(n, t) series, and the fitted
// decay laws the acceptance checks read off.
struct PocSweepReport {
  std::vector<int> n_list;
  std::vector<double> save_times;

  // per n: sup over t >= 1 of the replica-mean coupled gap, and the maxima
  // over the early [1, mid] and late [mid, t_end] halves (mid = window_lo)
  std::vector<double> sup_gap, gap_early, gap_late;

  // plateau statistics over the averaging window
  std::vector<double> value_gap, value_se;      // (1/n) F^{sigma,n} proxy - F^sigma(m_*)
  std::vector<double> mismatch, mismatch_se;    // drift mismatch
  std::vector<double> entropy1, entropy1_se;    // one-particle marginal relative entropy

  // per (n_idx, save_idx) series, replica-averaged
  std::vector<std::vector<double>> gap_by_t;
  std::vector<std::vector<double>> mismatch_by_t;
  std::vector<std::vector<double>> value_by_t;
  // per save time: fitted log-log slope of the gap across n (NaN where undefined)
  std::vector<double> gap_slope_by_t;

  PowerlawFit gap_fit, value_fit, mismatch_fit;
  bool gap_fit_ok = false, value_fit_ok = false, mismatch_fit_ok = false;
  ExpFloorFit value_decay;  // early-time relaxation at the largest n
  bool value_decay_ok = false;

  double f_star = 0.0;  // stationary free energy reference
  bool any_partial = false;
  std::vector<std::string> flags;
};

PocSweepReport run_poc_sweep(const ExperimentConfig& cfg, Exec policy = Exec::parallel);

CommandResult cmd_validate(const ExperimentConfig& cfg, const std::string& out_dir);
CommandResult cmd_gibbs(const ExperimentConfig& cfg, const std::string& out_dir);
CommandResult cmd_simulate(const ExperimentConfig& cfg, const std::string& out_dir);
CommandResult cmd_poc_sweep(const ExperimentConfig& cfg, const std::string& out_dir);
// inputs: CSVs whose first two numeric columns are (x, y); model is
// "powerlaw" or "exp_plus_floor"; needs >= 4 merged points.
CommandResult cmd_rate_fit(const std::vector<std::string>& inputs, const std::string& model,
                           const std::string& out_dir, uint64_t seed);
CommandResult cmd_entropy_chain(const ExperimentConfig& cfg, const std::string& out_dir, int count);

}  // namespace mfl
