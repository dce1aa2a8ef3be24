#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "lowmach/experiment.hpp"

using namespace lowmach;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("lowmach_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string path_of(const std::string& text) {
  try {
    parse_config(text);
  } catch (const ConfigInvalid& e) {
    return e.path;
  }
  return "<accepted>";
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

bool lists(const Report& r, const std::string& name) {
  for (const auto& f : r.files)
    if (fs::path(f).filename() == name) return true;
  return false;
}

ExperimentConfig small_well_prepared(const std::string& dir) {
  ExperimentConfig c = parse_config(R"({"kind": "WellPrepared",
    "numerical": {"half_length": 40, "cells": 401, "dt": 0.01, "end_time": 2, "snapshot_times": [0, 1, 1.5, 2]},
    "checks": ["completed", "decay", "creep", "antiderivative_endpoints"]})");
  c.output_dir = dir;
  return c;
}

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* value) { ::setenv("LOWMACH_THREADS", value, 1); }
  ~ThreadsEnv() { ::unsetenv("LOWMACH_THREADS"); }
};

}  // namespace

TEST(Config, MinimalWaveUsesDefaults) {
  const ExperimentConfig c = parse_config(R"({"kind": "Wave", "physical": {"endpoints": [1.0, 1.1], "kappa": 1.0}})");
  EXPECT_EQ(c.kind, ExperimentKind::Wave);
  EXPECT_EQ(c.physical.temp_right, 1.1);
  EXPECT_EQ(c.numerical.wave_half_width, 12.0);
  EXPECT_EQ(c.numerical.wave_nodes, 4001u);
  EXPECT_EQ(c.numerical.epsilon, 0.1);
  EXPECT_TRUE(c.checks.empty());
}

TEST(Config, FlatPhysicalShorthand) {
  const ExperimentConfig c = parse_config(R"({"kind": "Wave", "endpoints": [1, 1.1], "kappa": 1})");
  EXPECT_EQ(c.physical.temp_right, 1.1);
  EXPECT_EQ(c.numerical.wave_half_width, 12.0);
  EXPECT_EQ(c.numerical.wave_nodes, 4001u);
  EXPECT_EQ(path_of(R"({"kind": "Wave", "kappa": -1})"), "physical.kappa");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "kappa": 1, "physical": {"mu_tilde": 1}})"), "kappa");
}

TEST(Config, SampleFilesParse) {
  const fs::path dir = fs::path(LOWMACH_SOURCE_DIR) / "samples";
  for (const char* name : {"wave_minimal.json", "well_prepared.json", "sweep_well_prepared.json",
                           "sweep_ill_prepared.json", "limit_heat.json", "check_fast.json"})
    EXPECT_NO_THROW(load_config(dir / name)) << name;
  try {
    load_config(dir / "invalid_negative_kappa.json");
    FAIL() << "expected ConfigInvalid";
  } catch (const ConfigInvalid& e) {
    EXPECT_EQ(e.path, "physical.kappa");
  }
  EXPECT_THROW(load_config(dir / "no_such_file.json"), ConfigInvalid);
}

TEST(Config, ErrorsCarryThePath) {
  EXPECT_EQ(path_of(R"({"kind": "Wave", "physical": {"kappa": -1}})"), "physical.kappa");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "physical": {"kapa": 1}})"), "physical.kapa");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "extra": 1})"), "extra");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "numerical": {"dt": "fast"}})"), "numerical.dt");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "numerical": {"cells": 10.5}})"), "numerical.cells");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "numerical": {"scheme": "rk4"}})"), "numerical.scheme");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "physical": {"endpoints": [1.0]}})"), "physical.endpoints");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "physical": {"endpoints": [0.0, 1.0]}})"), "physical.endpoints[0]");
  EXPECT_EQ(path_of(R"({"kind": "Tsunami"})"), "kind");
  EXPECT_EQ(path_of(R"({"physical": {}})"), "kind");
  EXPECT_EQ(path_of(R"({"kind": "Wave",)"), "<document>");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "checks": ["oracle", "decay"]})"), "checks[1]");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "checks": ["oracle", "oracle"]})"), "checks[1]");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "seed": -3})"), "seed");
  EXPECT_EQ(path_of(R"({"kind": "Wave", "sweep": [0.1, 0.2, 0.3]})"), "sweep");
  EXPECT_EQ(path_of(R"({"kind": "WellPrepared", "numerical": {"end_time": 1, "snapshot_times": [0, 2]}})"),
            "numerical.snapshot_times");
  EXPECT_EQ(path_of(R"({"kind": "IllPrepared", "numerical": {"window": [-50, 5]}})"), "numerical.window");
  EXPECT_EQ(path_of(R"({"kind": "Sweep", "sweep": [0.1, 0.2]})"), "sweep");
  EXPECT_EQ(path_of(R"({"kind": "Sweep", "sweep": [0.1, 0.2, 0.1]})"), "sweep");
  EXPECT_EQ(path_of(R"({"kind": "Sweep", "sweep_base": "Wave", "sweep": [0.1, 0.2, 0.3]})"), "sweep_base");
}

TEST(Config, SweepIsSortedDescending) {
  const ExperimentConfig c = parse_config(R"({"kind": "Sweep", "sweep_base": "IllPrepared", "sweep": [0.05, 0.2, 0.1]})");
  EXPECT_EQ(c.sweep, (std::vector<Real>{0.2, 0.1, 0.05}));
  EXPECT_EQ(c.numerical.half_length, 40.0);
  EXPECT_EQ(c.numerical.snapshot_times.size(), 21u);
}

TEST(Config, EndTimeClipsDefaultSnapshots) {
  const ExperimentConfig c = parse_config(R"({"kind": "WellPrepared", "numerical": {"end_time": 1.5}})");
  EXPECT_EQ(c.numerical.snapshot_times, (std::vector<Real>{0.0, 0.5, 1.0, 1.5}));
}

TEST(Config, CreepAutoConstant) {
  const ExperimentConfig c = parse_config(R"({"kind": "WellPrepared", "creep": {"eta0": 2, "c1": "auto"}})");
  EXPECT_FALSE(c.creep.c1.has_value());
  EXPECT_EQ(c.creep.eta0, 2.0);
  EXPECT_EQ(path_of(R"({"kind": "WellPrepared", "creep": {"c1": 0}})"), "creep.c1");
}

TEST(Config, JsonRoundTrip) {
  const ExperimentConfig c = parse_config(R"({"kind": "Sweep", "sweep_base": "WellPrepared",
    "physical": {"kappa": 0.5, "mu_tilde": 2, "endpoints": [1.2, 1.0]},
    "numerical": {"scheme": "explicit", "boundary": "neumann", "noise": 1e-4, "end_time": 3},
    "sweep": [0.3, 0.2, 0.1], "creep": {"c1": "auto"}, "checks": ["epsilon_rate"], "seed": 11})");
  const ExperimentConfig d = parse_config(config_to_json(c).dump());
  EXPECT_EQ(config_to_json(c), config_to_json(d));
  EXPECT_EQ(d.numerical.scheme, Scheme::Explicit);
  EXPECT_EQ(d.numerical.boundary, Boundary::HomogeneousNeumann);
  EXPECT_EQ(d.seed, 11u);
  EXPECT_FALSE(d.creep.c1.has_value());
  EXPECT_EQ(d.physical.temp_left, 1.2);
}

TEST(Run, WaveWritesProfileAndFits) {
  const fs::path dir = scratch_dir("wave");
  ExperimentConfig c = parse_config(R"({"kind": "Wave", "checks": ["tail_fit", "residual_exponents"]})");
  c.output_dir = dir.string();
  const Report r = run_experiment(c);
  EXPECT_TRUE(r.all_passed()) << report_to_json(r).dump(2);
  for (const char* f : {"wave_profile.txt", "residuals.csv", "tail_fit.csv", "report.json"}) {
    EXPECT_TRUE(fs::exists(dir / f)) << f;
    EXPECT_TRUE(f == std::string("report.json") || lists(r, f)) << f;
  }
  EXPECT_EQ(r.checks[0].config_key, "checks[0]");
  EXPECT_EQ(r.checks[1].name, "residual_exponents");
  const auto j = nlohmann::json::parse(slurp(dir / "report.json"));
  EXPECT_TRUE(j["passed"].get<bool>());
  EXPECT_EQ(j["checks"].size(), 2u);
}

TEST(Run, WaveForConstantProfileReportsMissingTail) {
  ExperimentConfig c = parse_config(R"({"kind": "Wave", "physical": {"endpoints": [1, 1]}, "checks": ["tail_fit"]})");
  c.output_dir = scratch_dir("wave_const").string();
  const Report r = run_experiment(c);
  ASSERT_EQ(r.checks.size(), 1u);
  EXPECT_FALSE(r.checks[0].passed);
  EXPECT_FALSE(r.checks[0].detail.empty());
  EXPECT_FALSE(lists(r, "tail_fit.csv"));
}

TEST(Run, WellPreparedOutputsAndChecks) {
  const fs::path dir = scratch_dir("wp");
  const Report r = run_experiment(small_well_prepared(dir.string()));
  ASSERT_EQ(r.checks.size(), 4u);
  // on this coarse grid the error is discretization dominated, so the decay
  // verdict is not asserted here; only its bookkeeping is
  for (const auto& ch : r.checks) {
    if (ch.name != "decay") {
      EXPECT_TRUE(ch.passed) << ch.name << " " << ch.detail;
    }
  }
  EXPECT_EQ(r.checks[1].name, "decay");
  ASSERT_EQ(r.checks[1].measured.size(), 2u);
  EXPECT_EQ(r.checks[1].measured[1].second, 3.0);
  EXPECT_TRUE(lists(r, "norms_tilde.csv"));
  EXPECT_TRUE(lists(r, "norms_bar.csv"));
  EXPECT_TRUE(lists(r, "snapshot_t" + detail::time_tag(1.5) + ".txt"));
  EXPECT_EQ(slurp(dir / "norms_tilde.csv").rfind("t,l2_v,l2_u,l2_T,", 0), 0u);
  EXPECT_EQ(slurp(dir / ("creep_t" + detail::time_tag(1.0) + ".csv")).rfind("x,u,T_x\n", 0), 0u);
}

TEST(Run, ZeroEndTimeGivesSingleExactSnapshot) {
  const fs::path dir = scratch_dir("wp0");
  ExperimentConfig c = parse_config(R"({"kind": "WellPrepared", "numerical": {"half_length": 20, "cells": 201, "end_time": 0}})");
  c.output_dir = dir.string();
  const Report r = run_experiment(c);
  EXPECT_TRUE(r.failure.empty()) << r.failure;
  std::istringstream norms(slurp(dir / "norms_tilde.csv"));
  std::string header, row, extra;
  std::getline(norms, header);
  std::getline(norms, row);
  EXPECT_FALSE(std::getline(norms, extra));
  EXPECT_EQ(row, "0,0,0,0,0,0,0,0,0,0");
}

TEST(Run, SeededNoiseIsReproducible) {
  auto norms = [](std::uint64_t seed, const std::string& tag) {
    ExperimentConfig c = small_well_prepared(scratch_dir(tag).string());
    c.numerical.noise = 1e-4;
    c.seed = seed;
    c.checks = {};
    run_experiment(c);
    return slurp(fs::path(c.output_dir) / "norms_tilde.csv");
  };
  const std::string a = norms(5, "seed_a"), b = norms(5, "seed_b"), d = norms(6, "seed_c");
  EXPECT_EQ(a, b);
  EXPECT_NE(a, d);
}

TEST(Run, IllPreparedAndLimitHeat) {
  const fs::path d1 = scratch_dir("ill"), d2 = scratch_dir("limit");
  ExperimentConfig c = parse_config(R"({"kind": "IllPrepared",
    "numerical": {"half_length": 20, "cells": 401, "dt": 0.005, "end_time": 0.2, "snapshot_times": [0, 0.1, 0.2]},
    "checks": ["completed"]})");
  c.output_dir = d1.string();
  const Report r = run_experiment(c);
  EXPECT_TRUE(r.all_passed()) << r.failure;
  EXPECT_TRUE(lists(r, "ill_series.csv"));
  EXPECT_EQ(slurp(d1 / "ill_series.csv").rfind("t,p_l2_squared,defect\n", 0), 0u);

  ExperimentConfig l = parse_config(R"({"kind": "LimitHeat",
    "numerical": {"half_length": 40, "cells": 801, "dt": 0.01, "end_time": 1}, "checks": ["limit_exactness"]})");
  l.output_dir = d2.string();
  const Report lr = run_experiment(l);
  EXPECT_TRUE(lr.all_passed()) << report_to_json(lr).dump(2);
  EXPECT_EQ(slurp(d2 / "limit_theta.csv").rfind("x,theta,theta_exact,u_bar\n", 0), 0u);
}

TEST(Run, SweepResultsIndependentOfThreadCount) {
  auto sweep = [](const char* threads, const std::string& tag) {
    ThreadsEnv env(threads);
    ExperimentConfig c = parse_config(R"({"kind": "Sweep", "sweep_base": "IllPrepared", "sweep": [0.2, 0.1, 0.05],
      "numerical": {"half_length": 20, "cells": 401, "dt": 0.005, "end_time": 0.5}, "checks": ["completed", "ill_monotone"]})");
    c.output_dir = scratch_dir(tag).string();
    const Report r = run_experiment(c);
    EXPECT_TRUE(r.all_passed()) << report_to_json(r).dump(2);
    return slurp(fs::path(c.output_dir) / "ill_sweep.csv");
  };
  const std::string one = sweep("1", "sweep1"), three = sweep("3", "sweep3");
  EXPECT_EQ(one, three);
  EXPECT_EQ(one.rfind("eps,int_p2,int_defect,theta_error\n0.20000000000000001,", 0), 0u);
}

TEST(Run, WellPreparedSweepWritesRates) {
  ExperimentConfig c = parse_config(R"({"kind": "Sweep", "sweep": [0.4, 0.3, 0.2],
    "numerical": {"half_length": 20, "cells": 201, "dt": 0.01, "end_time": 2, "snapshot_times": [0, 1, 1.5, 2]},
    "checks": ["completed"]})");
  c.output_dir = scratch_dir("wpsweep").string();
  const Report r = run_experiment(c);
  EXPECT_TRUE(r.all_passed()) << report_to_json(r).dump(2);
  EXPECT_TRUE(lists(r, "eps_errors.csv"));
  EXPECT_TRUE(lists(r, "rates.csv"));
  EXPECT_NE(slurp(fs::path(c.output_dir) / "rates.csv").find("epsilon_rate,"), std::string::npos);
}

TEST(Run, LibraryErrorsEndUpInTheReport) {
  // a huge Mach number makes the corrected temperature negative
  ExperimentConfig c = parse_config(R"({"kind": "WellPrepared",
    "physical": {"endpoints": [1, 3]}, "numerical": {"epsilon": 200, "half_length": 20, "cells": 201, "end_time": 0},
    "checks": ["completed", "decay"]})");
  c.output_dir = scratch_dir("err").string();
  const Report r = run_experiment(c);
  EXPECT_FALSE(r.all_passed());
  EXPECT_EQ(r.failure.rfind("NonPositiveState", 0), 0u) << r.failure;
  ASSERT_EQ(r.checks.size(), 2u);
  for (const auto& ch : r.checks) {
    EXPECT_FALSE(ch.passed);
    EXPECT_EQ(ch.detail, r.failure);
  }
  EXPECT_TRUE(fs::exists(fs::path(c.output_dir) / "report.json"));
}

TEST(Run, CheckKindRunsNamedCriteria) {
  ExperimentConfig c = parse_config(R"({"kind": "Check", "checks": ["conservation"]})");
  c.output_dir = scratch_dir("check").string();
  const Report r = run_experiment(c);
  ASSERT_EQ(r.checks.size(), 1u);
  EXPECT_TRUE(r.checks[0].passed) << r.checks[0].detail;
  EXPECT_EQ(r.checks[0].config_key, "checks[0]");
}
