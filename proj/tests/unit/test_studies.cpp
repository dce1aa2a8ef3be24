#include <gtest/gtest.h>

#include <cstdlib>
#include <stdexcept>

#include "lowmach/studies.hpp"

using namespace lowmach;

namespace {

NormSeries series_from(const std::vector<std::pair<Real, Real>>& tq) {
  NormSeries s;
  for (const auto& [t, l2] : tq) {
    Metrics m;
    m.l2[0] = l2;
    s.push(t, m);
  }
  return s;
}

class ThreadsEnv {
 public:
  explicit ThreadsEnv(const char* value) {
    if (const char* old = std::getenv("LOWMACH_THREADS")) saved_ = old;
    ::setenv("LOWMACH_THREADS", value, 1);
  }
  ~ThreadsEnv() {
    if (saved_.empty()) ::unsetenv("LOWMACH_THREADS");
    else ::setenv("LOWMACH_THREADS", saved_.c_str(), 1);
  }

 private:
  std::string saved_;
};

}  // namespace

TEST(ParallelMap, PreservesKeyOrder) {
  std::vector<int> keys(37);
  for (int i = 0; i < 37; ++i) keys[i] = i;
  for (unsigned w : {1u, 2u, 5u}) {
    const auto out = parallel_map(keys, [](int k) { return k * k; }, w);
    ASSERT_EQ(out.size(), keys.size());
    for (int i = 0; i < 37; ++i) EXPECT_EQ(out[i], i * i);
  }
}

TEST(ParallelMap, RethrowsFirstFailureByPosition) {
  const std::vector<int> keys{0, 1, 2, 3, 4, 5};
  auto fn = [](int k) -> int {
    if (k == 2) throw std::runtime_error("two");
    if (k == 4) throw std::runtime_error("four");
    return k;
  };
  for (unsigned w : {1u, 3u}) {
    try {
      parallel_map(keys, fn, w);
      FAIL() << "expected an exception";
    } catch (const std::runtime_error& e) {
      EXPECT_STREQ(e.what(), "two");
    }
  }
}

TEST(ParallelMap, WorkerCountHonoursEnvironment) {
  {
    ThreadsEnv env("1");
    EXPECT_EQ(sweep_workers(10), 1u);
  }
  {
    ThreadsEnv env("3");
    EXPECT_LE(sweep_workers(10), 3u);
    EXPECT_EQ(sweep_workers(1), 1u);
  }
  {
    ThreadsEnv env("garbage");
    EXPECT_GE(sweep_workers(4), 1u);
  }
}

TEST(Sawtooth, MonotoneDecayPasses) {
  std::vector<std::pair<Real, Real>> tq;
  for (int k = 0; k <= 20; ++k) tq.emplace_back(0.5 * k, std::pow(1.0 + 0.5 * k, -0.5));
  const DecayCheck d = sawtooth_decay(series_from(tq));
  EXPECT_TRUE(d.passed);
  EXPECT_EQ(d.points, 19u);
  EXPECT_DOUBLE_EQ(d.worst_ratio, 1.0);
}

TEST(Sawtooth, BoundedBumpsAreTolerated) {
  // q(t) = (1+t)^0.8 * l2^2 decays, with a 10% rebound at t = 3
  std::vector<std::pair<Real, Real>> tq;
  for (int k = 1; k <= 6; ++k) {
    Real q = std::pow(1.0 + k, -1.0);
    if (k == 3) q *= 1.1 * (4.0 / 3.0);
    tq.emplace_back(k, std::sqrt(q / std::pow(1.0 + k, 0.8)));
  }
  const DecayCheck d = sawtooth_decay(series_from(tq));
  EXPECT_TRUE(d.passed);
  EXPECT_NEAR(d.worst_ratio, 1.1, 1e-12);
}

TEST(Sawtooth, GrowthFails) {
  std::vector<std::pair<Real, Real>> tq;
  for (int k = 0; k <= 10; ++k) tq.emplace_back(k, 1e-3 * (1.0 + k));
  const DecayCheck d = sawtooth_decay(series_from(tq));
  EXPECT_FALSE(d.passed);
  EXPECT_GT(d.worst_ratio, 1.2);
}

TEST(Sawtooth, NeedsTwoLatePoints) {
  EXPECT_FALSE(sawtooth_decay(series_from({{0.0, 1.0}, {0.5, 0.5}, {1.0, 0.1}})).passed);
  // identically zero error is the best possible decay
  EXPECT_TRUE(sawtooth_decay(series_from({{1.0, 0.0}, {2.0, 0.0}})).passed);
}

TEST(WeightedError, SupOverWindow) {
  NormSeries s;
  for (Real t : {0.0, 1.0, 3.0, 15.0}) {
    Metrics m;
    m.linf[2] = 1.0 / (1.0 + t);
    s.push(t, m);
  }
  EXPECT_NEAR(weighted_temperature_error(s, 1.0, 10.0), std::sqrt(2.0) / 2.0, 1e-15);
}

TEST(Noise, SeededAndInteriorOnly) {
  const GridFn a = seeded_noise(50, 1e-3, 42), b = seeded_noise(50, 1e-3, 42), c = seeded_noise(50, 1e-3, 43);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  EXPECT_EQ(a.front(), 0.0);
  EXPECT_EQ(a.back(), 0.0);
  for (Real x : a) EXPECT_LE(std::abs(x), 1e-3);
  for (Real x : seeded_noise(50, 0.0, 42)) EXPECT_EQ(x, 0.0);
}

TEST(TailFit, ConstantProfileHasNoTail) {
  const WaveProfile p = solve_wave(1.0, 1.0, 1.0);
  EXPECT_THROW(tail_fit(p), ConfigInvalid);
}

TEST(ResidualStudy, ExponentsFromProfileAlone) {
  const ProfileSet ps = make_profiles(Frame::Lagrangian, 1.0, 1.1, 1.0, 1.0, 0.1);
  std::vector<Real> ts;
  for (int k = 0; k <= 6; ++k) ts.push_back(std::pow(100.0, k / 6.0));
  const ResidualExponents e = residual_exponents(ps, ts, {0.2, 0.1, 0.05}, 1.0);
  EXPECT_NEAR(e.r1_time.exponent, -1.0, 0.05);
  EXPECT_NEAR(e.r2_time.exponent, -1.5, 0.05);
  EXPECT_NEAR(e.r1_eps.exponent, 2.0, 1e-6);
  EXPECT_NEAR(e.r2_eps.exponent, 2.0, 1e-6);
}

TEST(WellPreparedStudy, NoiseFreeRunStaysCloseToCorrectedProfile) {
  const ProfileSet ps = make_profiles(Frame::Lagrangian, 1.0, 1.1, 1.0, 1.0, 0.1);
  SolverConfig c;
  c.dt = 0.004;
  c.end_time = 1.0;
  c.snapshot_times = {0.0, 0.5, 1.0};
  const WellPreparedRun r = run_well_prepared(ps, make_grid(40.0, 801), c);
  ASSERT_EQ(r.tilde.records.size(), 3u);
  EXPECT_EQ(r.tilde.records[0].metrics.linf[2], 0.0);
  EXPECT_LT(r.tilde.records[2].metrics.linf[2], 1e-4);
  EXPECT_FALSE(r.trajectory.diverged);
}

TEST(WellPreparedStudy, NoiseSizeMustMatchGrid) {
  const ProfileSet ps = make_profiles(Frame::Lagrangian, 1.0, 1.1, 1.0, 1.0, 0.1);
  SolverConfig c;
  c.end_time = 0.0;
  EXPECT_THROW(run_well_prepared(ps, make_grid(20.0, 101), c, GridFn(50, 0.0)), ConfigInvalid);
}

TEST(ConservationStudy, DriftAtRoundoffLevel) {
  const ProfileSet ps = make_profiles(Frame::Lagrangian, 1.0, 1.1, 1.0, 1.0, 0.2);
  const ConservationDrift d = conservation_drift(ps, make_grid(20.0, 201), 100);
  EXPECT_EQ(d.steps, 100u);
  EXPECT_GT(d.dt, 0.0);
  EXPECT_LT(d.mass, 1e-12);
  EXPECT_LT(d.energy, 1e-12);
}

TEST(IllPreparedStudy, SeriesShapesAndLimitError) {
  const ProfileSet ps = make_profiles(Frame::Eulerian, 1.0, 1.1, 1.0, 1.0, 0.1);
  const Grid g = make_grid(20.0, 401);
  SolverConfig c;
  c.epsilon = 0.1;
  c.dt = 0.005;
  c.end_time = 0.5;
  c.snapshot_times = {0.0, 0.25, 0.5};
  const GridFn limit = solve_limit_theta(sample_theta_tilde(ps, g), 1.0, g, 0.5, 0.005).theta;
  const IllPreparedRun r = run_ill_prepared(ps, g, c, compact_bump(g), limit, {-5.0, 5.0});
  ASSERT_EQ(r.times.size(), 3u);
  EXPECT_EQ(r.p_l2_squared.size(), 3u);
  EXPECT_EQ(r.defect.size(), 3u);
  EXPECT_GT(r.p_l2_squared[0], r.p_l2_squared[2]);
  EXPECT_GT(r.integrated_p, 0.0);
  EXPECT_GE(r.theta_error, 0.0);
  EXPECT_LT(r.theta_error, 1.0);
}
