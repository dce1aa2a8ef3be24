// Command-line front end: wave, simulate, sweep, check and profiles.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "lowmach/experiment.hpp"

namespace {

using namespace lowmach;

struct Overrides {
  std::string config;
  std::optional<double> epsilon, dt, end_time;
  std::optional<std::size_t> cells;
  std::optional<std::string> out;
};

void add_override_flags(CLI::App* cmd, Overrides& o, bool config_required) {
  auto* opt = cmd->add_option("--config", o.config, "Experiment config (JSON)");
  if (config_required) opt->required();
  cmd->add_option("--epsilon", o.epsilon, "Override numerical.epsilon");
  cmd->add_option("--dt", o.dt, "Override numerical.dt");
  cmd->add_option("--cells", o.cells, "Override numerical.cells");
  cmd->add_option("--end-time", o.end_time, "Override numerical.end_time (snapshot list is clipped)");
  cmd->add_option("--out", o.out, "Override output_dir");
}

void apply(ExperimentConfig& c, const Overrides& o) {
  if (o.epsilon) c.numerical.epsilon = *o.epsilon;
  if (o.dt) c.numerical.dt = *o.dt;
  if (o.cells) c.numerical.cells = *o.cells;
  if (o.end_time) {
    c.numerical.end_time = *o.end_time;
    clip_snapshots(c.numerical);
  }
  if (o.out) c.output_dir = *o.out;
  validate(c);
}

void require_kind(const ExperimentConfig& c, std::initializer_list<ExperimentKind> kinds, const char* cmd) {
  for (ExperimentKind k : kinds)
    if (c.kind == k) return;
  throw ConfigInvalid("kind", std::string("kind ") + to_string(c.kind) + " cannot be run by '" + cmd + "'");
}

int print_report(const Report& r) {
  for (const CheckResult& c : r.checks) {
    std::printf("[%s] %s (%s):", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.config_key.c_str());
    for (const auto& [k, v] : c.measured) std::printf(" %s=%.17g", k.c_str(), v);
    std::printf(" | %s", c.threshold.c_str());
    if (!c.detail.empty()) std::printf(" | %s", c.detail.c_str());
    std::printf("\n");
  }
  if (!r.failure.empty()) std::printf("failure: %s\n", r.failure.c_str());
  for (const std::string& f : r.files) std::printf("wrote %s\n", f.c_str());
  return r.all_passed() ? 0 : 1;
}

int write_profiles(const Overrides& o, double time) {
  ExperimentConfig c;
  if (!o.config.empty()) c = load_config(o.config);
  if (o.epsilon) c.numerical.epsilon = *o.epsilon;
  if (o.cells) c.numerical.cells = *o.cells;
  validate(c);
  if (!(time >= 0.0)) throw ConfigInvalid("--time", "must be non-negative");
  const ProfileSet ps = make_profiles(Frame::Lagrangian, c.physical.temp_left, c.physical.temp_right,
                                      c.physical.kappa, c.physical.mu_tilde, c.numerical.epsilon, c.wave_options());
  const Grid g = make_grid(c.numerical.half_length, c.numerical.cells);
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (o.out) {
    file.open(*o.out, std::ios::binary);
    if (!file) throw ConfigInvalid("--out", "cannot write " + *o.out);
    os = &file;
  }
  *os << "x,v_bar,u_bar,T_bar,v_tilde,u_tilde,T_tilde,r1,r2\n";
  for (Real x : g.nodes) {
    const Triple b = eval_bar(ps, x, time);
    const Triple t = eval_tilde(ps, x, time);
    const ResidualPair r = eval_residuals(ps, x, time);
    *os << fmt17(x) << ',' << fmt17(b.first) << ',' << fmt17(b.u) << ',' << fmt17(b.T) << ',' << fmt17(t.first)
        << ',' << fmt17(t.u) << ',' << fmt17(t.T) << ',' << fmt17(r.r1) << ',' << fmt17(r.r2) << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusive waves in the low Mach number limit"};
  app.require_subcommand(1);

  Overrides wave_o, sim_o, sweep_o, check_o, prof_o;
  add_override_flags(app.add_subcommand("wave", "Solve a wave profile and run its checks"), wave_o, true);
  add_override_flags(app.add_subcommand("simulate", "Run a WellPrepared, IllPrepared or LimitHeat experiment"),
                     sim_o, true);
  add_override_flags(app.add_subcommand("sweep", "Run an epsilon sweep"), sweep_o, true);

  auto* check = app.add_subcommand("check", "Run acceptance criteria (all of them without --config)");
  add_override_flags(check, check_o, false);
  std::vector<std::string> only;
  check->add_option("--only", only, "Restrict to the named criteria");

  auto* prof = app.add_subcommand("profiles", "Print bar and corrected profiles with residuals as CSV");
  add_override_flags(prof, prof_o, false);
  double prof_time = 0.0;
  prof->add_option("--time", prof_time, "Evaluation time");

  CLI11_PARSE(app, argc, argv);

  try {
    if (prof->parsed()) return write_profiles(prof_o, prof_time);

    ExperimentConfig cfg;
    if (app.got_subcommand("wave")) {
      cfg = load_config(wave_o.config);
      require_kind(cfg, {ExperimentKind::Wave}, "wave");
      apply(cfg, wave_o);
    } else if (app.got_subcommand("simulate")) {
      cfg = load_config(sim_o.config);
      require_kind(cfg, {ExperimentKind::WellPrepared, ExperimentKind::IllPrepared, ExperimentKind::LimitHeat},
                   "simulate");
      apply(cfg, sim_o);
    } else if (app.got_subcommand("sweep")) {
      cfg = load_config(sweep_o.config);
      require_kind(cfg, {ExperimentKind::Sweep}, "sweep");
      apply(cfg, sweep_o);
    } else {
      if (!check_o.config.empty()) {
        cfg = load_config(check_o.config);
      } else {
        cfg.kind = ExperimentKind::Check;
        cfg.checks = only.empty() ? allowed_checks(ExperimentKind::Check, ExperimentKind::WellPrepared) : only;
      }
      if (!only.empty()) cfg.checks = only;
      apply(cfg, check_o);
    }
    return print_report(run_experiment(cfg));
  } catch (const ConfigInvalid& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "%s\n", e.what());
    return 1;
  }
}
