// mfl: mean-field Langevin simulation and measurement toolkit.
//   validate      derivative and information-identity checks
//   gibbs         stationary state by the damped fixed-point map
//   simulate      one coupled (interacting, reference) run
//   poc-sweep     gap/value/mismatch decay across particle counts
//   rate-fit      power-law or exponential-plus-floor fits of report CSVs
//   entropy-chain conditional-entropy identities on random joints

#include <cstdio>
#include <exception>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mfl/config.hpp"
#include "mfl/experiment.hpp"

namespace {

struct CommonOpts {
  std::string config;
  std::string out;
  uint64_t seed = 0;
  bool seed_set = false;
  int threads = -1;
};

void add_common(CLI::App* cmd, CommonOpts& o, bool config_required = true) {
  auto* c = cmd->add_option("--config", o.config, "experiment config (JSON)");
  if (config_required) c->required();
  cmd->add_option("--out", o.out, "output directory")->required();
  cmd->add_option("--seed", o.seed, "master seed override")->each([&o](const std::string&) {
    o.seed_set = true;
  });
  cmd->add_option("--threads", o.threads, "worker thread count (0 = default)");
}

mfl::ExperimentConfig load(const CommonOpts& o) {
  mfl::ExperimentConfig cfg = mfl::load_config(o.config);
  if (o.seed_set) cfg.seed = o.seed;
  if (o.threads >= 0) cfg.threads = o.threads;
  if (!o.out.empty()) cfg.out = o.out;
  return cfg;
}

int finish(const mfl::CommandResult& res) {
  std::fprintf(res.exit_code == 0 ? stdout : stderr, "%s\n", res.message.c_str());
  return res.exit_code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"mean-field Langevin simulation and measurement toolkit"};
  app.require_subcommand(1);

  CommonOpts v_opts, g_opts, s_opts, p_opts, e_opts, r_opts;
  int chain_count = 1000;
  std::vector<std::string> fit_inputs;
  std::string fit_model = "powerlaw";

  CLI::App* v = app.add_subcommand("validate", "run the derivative and identity suites");
  add_common(v, v_opts);
  CLI::App* g = app.add_subcommand("gibbs", "solve for the stationary state");
  add_common(g, g_opts);
  CLI::App* s = app.add_subcommand("simulate", "one coupled run at the configured n");
  add_common(s, s_opts);
  CLI::App* p = app.add_subcommand("poc-sweep", "decay of the particle approximation across n");
  add_common(p, p_opts);
  CLI::App* e = app.add_subcommand("entropy-chain", "conditional-entropy identities on random joints");
  add_common(e, e_opts);
  e->add_option("--count", chain_count, "number of random joints");
  CLI::App* r = app.add_subcommand("rate-fit", "fit decay laws to report CSVs");
  add_common(r, r_opts, /*config_required=*/false);
  r->add_option("--in", fit_inputs, "input CSVs (first two columns = x, y)")->required();
  r->add_option("--model", fit_model, "powerlaw | exp_plus_floor");

  CLI11_PARSE(app, argc, argv);

  try {
    if (v->parsed()) return finish(mfl::cmd_validate(load(v_opts), v_opts.out));
    if (g->parsed()) return finish(mfl::cmd_gibbs(load(g_opts), g_opts.out));
    if (s->parsed()) return finish(mfl::cmd_simulate(load(s_opts), s_opts.out));
    if (p->parsed()) return finish(mfl::cmd_poc_sweep(load(p_opts), p_opts.out));
    if (e->parsed()) return finish(mfl::cmd_entropy_chain(load(e_opts), e_opts.out, chain_count));
    if (r->parsed())
      return finish(mfl::cmd_rate_fit(fit_inputs, fit_model, r_opts.out,
                                      r_opts.seed_set ? r_opts.seed : 0x726674));
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 2;
  }
  return 0;
}
