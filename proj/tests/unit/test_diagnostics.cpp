#include <gtest/gtest.h>

#include <random>
#include <sstream>

#include "lowmach/studies.hpp"

using namespace lowmach;

namespace {

const ProfileSet& lagrangian() {
  static const ProfileSet ps = make_profiles(Frame::Lagrangian, 1.0, 1.1, 1.0, 1.0, 0.1);
  return ps;
}

LagrangianState exact_tilde(const ProfileSet& ps, const Grid& g, Real t) {
  LagrangianState s;
  s.grid = g;
  s.time = t;
  for (Real x : g.nodes) {
    const Triple r = eval_tilde(ps, x, t);
    s.v.push_back(r.first);
    s.u.push_back(r.u);
    s.T.push_back(r.T);
  }
  return s;
}

FluctuationState smooth_fluctuation(Index n, bool balanced) {
  const Grid g = make_grid(8.0, n);
  FluctuationState s;
  s.grid = g;
  s.p.assign(n, 0.0);
  s.u.resize(n);
  s.theta.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Real x = g.nodes[i];
    s.theta[i] = 0.2 * std::tanh(x);
    const Real th_x = 0.2 / (std::cosh(x) * std::cosh(x));
    s.u[i] = balanced ? 0.5 * std::exp(s.theta[i]) * th_x : 0.0;
  }
  return s;
}

}  // namespace

TEST(Norms, VanishOnSampledProfile) {
  const LagrangianState s = exact_tilde(lagrangian(), make_grid(20.0, 401), 0.5);
  const Metrics m = diff_norms(s, lagrangian(), ProfileKind::Tilde);
  for (int c = 0; c < 3; ++c) {
    EXPECT_EQ(m.l2[c], 0.0);
    EXPECT_EQ(m.linf[c], 0.0);
    EXPECT_EQ(m.h1_semi[c], 0.0);
  }
  EXPECT_EQ(m.time, 0.5);
  // against the bar profile only the temperature correction remains
  const Metrics b = diff_norms(s, lagrangian(), ProfileKind::Bar);
  EXPECT_EQ(b.l2[0], 0.0);
  EXPECT_GT(b.linf[2], 0.0);
  EXPECT_LT(b.linf[2], 0.01 * 0.1 * 0.1);
}

TEST(Norms, GaussianL2) {
  const Grid g = make_grid(20.0, 4001);
  GridFn f(g.cells);
  for (Index i = 0; i < g.cells; ++i) f[i] = 3.0 * std::exp(-g.nodes[i] * g.nodes[i]);
  const Metrics m = field_norms({f, f, GridFn(g.cells, 0.0)}, g.spacing);
  EXPECT_NEAR(m.l2[0], 3.0 * std::pow(M_PI / 2.0, 0.25), 1e-10);
  EXPECT_NEAR(m.linf[1], 3.0, 1e-12);
  // |f'|^2 integrates to 9 sqrt(pi/2)
  EXPECT_NEAR(m.h1_semi[0], std::sqrt(9.0 * std::sqrt(M_PI / 2.0)), 1e-4);
  EXPECT_EQ(m.l2[2], 0.0);
}

TEST(Norms, MetricPropertiesOnRandomFields) {
  std::mt19937_64 rng(7);
  std::normal_distribution<Real> nd;
  const Index n = 64;
  for (int trial = 0; trial < 50; ++trial) {
    GridFn a(n), b(n), c(n), ab(n), bc(n), ac(n), scaled(n);
    for (Index i = 0; i < n; ++i) {
      a[i] = nd(rng);
      b[i] = nd(rng);
      c[i] = nd(rng);
    }
    for (Index i = 0; i < n; ++i) {
      ab[i] = a[i] - b[i];
      bc[i] = b[i] - c[i];
      ac[i] = a[i] - c[i];
      scaled[i] = -2.5 * ab[i];
    }
    const Real dx = 0.1;
    const Metrics mab = field_norms({ab, ab, ab}, dx), mbc = field_norms({bc, bc, bc}, dx),
                  mac = field_norms({ac, ac, ac}, dx), ms = field_norms({scaled, scaled, scaled}, dx);
    EXPECT_LE(mac.l2[0], mab.l2[0] + mbc.l2[0] + 1e-12);
    EXPECT_LE(mac.linf[0], mab.linf[0] + mbc.linf[0] + 1e-12);
    EXPECT_LE(mac.h1_semi[0], mab.h1_semi[0] + mbc.h1_semi[0] + 1e-12);
    EXPECT_NEAR(ms.l2[1], 2.5 * mab.l2[1], 1e-12);
    EXPECT_NEAR(ms.linf[1], 2.5 * mab.linf[1], 1e-12);
    EXPECT_GE(mab.l2[2], 0.0);
    EXPECT_NEAR(mab.l2_squared_total(), 3.0 * mab.l2[0] * mab.l2[0], 1e-12);
  }
}

TEST(Norms, WindowAndTimeIntegration) {
  const Grid g = make_grid(10.0, 201);
  const Real w = window_l2(GridFn(201, 2.0), g, {-1.0, 3.0});
  EXPECT_NEAR(w, std::sqrt(4.0 * 4.0), 1e-12);
  const std::vector<Real> t{0.0, 0.5, 2.0}, f{1.0, 1.0, 4.0};
  EXPECT_NEAR(time_integrate(t, f), 0.5 + 1.5 * 2.5, 1e-15);
}

TEST(Antiderivative, ZeroForExactProfile) {
  const LagrangianState s = exact_tilde(lagrangian(), make_grid(20.0, 201), 0.0);
  const Antiderivatives a = antiderivatives(s, lagrangian(), 0.1);
  EXPECT_EQ(antiderivative_sup_squared(a), 0.0);
  EXPECT_NEAR(a.y.back(), 200.0, 1e-9);
}

TEST(Antiderivative, ConstantOffsetGrowsLinearlyInScaledVariable) {
  const Grid g = make_grid(20.0, 201);
  LagrangianState s = exact_tilde(lagrangian(), g, 0.0);
  for (Real& v : s.v) v += 1e-3;
  const Antiderivatives a = antiderivatives(s, lagrangian(), 0.1);
  for (Index i = 0; i < g.cells; i += 20) EXPECT_NEAR(a.Phi[i], 1e-3 * (a.y[i] - a.y[0]), 1e-12);
  EXPECT_EQ(a.Psi.back(), 0.0);
  EXPECT_NEAR(antiderivative_sup_squared(a), std::pow(1e-3 * 400.0, 2), 1e-12);
}

TEST(Antiderivative, EndpointsStaySmallAlongWellPreparedRun) {
  const ProfileSet& ps = lagrangian();
  SolverConfig c = configure_for(ps, SolverConfig{});
  c.dt = 0.004;
  c.end_time = 2.0;
  c.snapshot_times = {0.5, 1.0, 2.0};
  const WellPreparedRun r = run_well_prepared(ps, make_grid(40.0, 801), c);
  for (const auto& snap : r.trajectory.snapshots) {
    const Antiderivatives a = antiderivatives(snap.state, ps, 0.1);
    EXPECT_LT(std::abs(a.Phi.back()), 1e-6);
    EXPECT_LT(std::abs(a.Psi.back()), 1e-6);
    EXPECT_LT(std::abs(a.W.back()), 1e-6);
    EXPECT_LT(antiderivative_sup_squared(a), 0.1);
  }
}

TEST(RateFit, RecoversPlantedExponents) {
  NormSeries s;
  for (Real t : {0.0, 1.0, 3.0, 7.0, 15.0}) {
    Metrics m;
    m.linf[0] = 2.0 * std::pow(1.0 + t, -0.5);
    m.l2[2] = 0.3 * std::pow(1.0 + t, 1.25);
    s.push(t, m);
  }
  const RateFit a = fit_rate(s, select_linf(0), RateAxis::OnePlusT);
  EXPECT_NEAR(a.exponent, -0.5, 1e-9);
  EXPECT_NEAR(a.log_prefactor, std::log(2.0), 1e-9);
  EXPECT_NEAR(a.r_squared, 1.0, 1e-12);
  EXPECT_NEAR(fit_rate(s, select_l2(2), RateAxis::OnePlusT).exponent, 1.25, 1e-9);
}

TEST(RateFit, EpsilonAxis) {
  NormSeries s;
  for (Real e : {0.05, 0.1, 0.2}) {
    Metrics m;
    m.linf[1] = 4.0 * e * e;
    s.push(e, m);
  }
  EXPECT_NEAR(fit_rate(s, select_linf(1), RateAxis::Epsilon).exponent, 2.0, 1e-12);
}

TEST(RateFit, Errors) {
  NormSeries s;
  Metrics m;
  m.linf[0] = 1.0;
  s.push(0.0, m);
  s.push(1.0, m);
  EXPECT_THROW(fit_rate(s, select_linf(0), RateAxis::OnePlusT), ConfigInvalid);
  EXPECT_THROW(s.push(1.0, m), ConfigInvalid);
  s.push(2.0, Metrics{});
  EXPECT_THROW(fit_rate(s, select_linf(0), RateAxis::OnePlusT), ConfigInvalid);
  const std::vector<Real> xs{1.0, 1.0, 1.0}, ys{1.0, 2.0, 3.0};
  EXPECT_THROW(fit_power_law(xs, ys), ConfigInvalid);
  const std::vector<Real> short_x{1.0, 2.0};
  EXPECT_THROW(fit_line(short_x, ys), ConfigInvalid);
}

TEST(Creep, ExactProfilePasses) {
  const ProfileSet& ps = lagrangian();
  const Grid g = make_grid(20.0, 801);
  for (Real t : {0.0, 1.0, 5.0}) {
    const CreepReport r = creep_check(exact_tilde(ps, g, t), ps, 1.0, 10.0);
    EXPECT_GT(r.region_points, 0u);
    EXPECT_EQ(r.pass_fraction(), 1.0);
  }
  // near the centre u / T_x is close to kappa / (2 T), so a tight c1 also works
  const Real c1 = auto_creep_constant(ps, g, 0.0, 1.0);
  EXPECT_GT(c1, 0.0);
  EXPECT_EQ(creep_check(exact_tilde(ps, g, 0.0), ps, 1.0, c1).pass_fraction(), 1.0);
}

TEST(Creep, ConstantStateAndReflection) {
  const Grid g = make_grid(10.0, 101);
  LagrangianState s;
  s.grid = g;
  s.v.assign(101, 1.0);
  s.u.assign(101, 0.0);
  s.T.assign(101, 1.0);
  EXPECT_EQ(creep_check(s, lagrangian(), 1.0, 10.0).pass_fraction(), 1.0);
  s.u[50] = 1e-6;
  EXPECT_LT(creep_check(s, lagrangian(), 1.0, 10.0).pass_fraction(), 1.0);

  const ProfileSet down = make_profiles(Frame::Lagrangian, 1.1, 1.0, 1.0, 1.0, 0.1);
  const LagrangianState d = exact_tilde(down, make_grid(20.0, 401), 1.0);
  EXPECT_EQ(creep_check(d, down, 1.0, 10.0).pass_fraction(), 1.0);
}

TEST(Creep, ReversedVelocityFails) {
  const ProfileSet& ps = lagrangian();
  LagrangianState s = exact_tilde(ps, make_grid(20.0, 401), 1.0);
  for (Real& u : s.u) u = -u;
  EXPECT_EQ(creep_check(s, ps, 1.0, 10.0).pass_fraction(), 0.0);
  EXPECT_EQ(CreepReport{}.pass_fraction(), 1.0);
}

TEST(Incompressibility, SecondOrderConsistent) {
  std::vector<Real> d;
  for (Index n : {401u, 801u, 1601u}) d.push_back(incompressibility_defect(smooth_fluctuation(n, true), 1.0, 0.1));
  EXPECT_LT(d[0], 1e-3);
  EXPECT_NEAR(d[0] / d[1], 4.0, 0.4);
  EXPECT_NEAR(d[1] / d[2], 4.0, 0.4);
  EXPECT_GT(incompressibility_defect(smooth_fluctuation(401, false), 1.0, 0.1), 0.05);
}

TEST(Incompressibility, ConstantStateAndWindow) {
  FluctuationState s = smooth_fluctuation(101, true);
  s.theta.assign(101, 0.3);
  s.u.assign(101, 0.0);
  EXPECT_EQ(incompressibility_defect(s, 1.0, 0.1), 0.0);
  EXPECT_THROW(incompressibility_defect(s, 1.0, 0.1, {-20.0, 0.0}), ConfigInvalid);
  EXPECT_THROW(incompressibility_defect(s, 1.0, 0.1, {1.0, 1.0}), ConfigInvalid);
}

TEST(Reconstruction, EquationOfState) {
  FluctuationState s = smooth_fluctuation(101, true);
  for (Index i = 0; i < 101; ++i) s.p[i] = 0.5 * std::sin(s.grid.nodes[i]);
  const PhysicalFields f = reconstruct_physical(s, 0.2);
  for (Index i = 0; i < 101; ++i) {
    EXPECT_NEAR(f.rho[i] * f.T[i], std::exp(0.2 * s.p[i]), 1e-14);
    EXPECT_NEAR(std::log(f.T[i]), s.theta[i], 1e-14);
    EXPECT_EQ(f.u[i], s.u[i]);
  }
}

TEST(Csv, Headers) {
  NormSeries s;
  s.push(0.5, Metrics{});
  std::ostringstream a, b;
  write_norm_series_csv(a, s);
  EXPECT_EQ(a.str(), "t,l2_v,l2_u,l2_T,linf_v,linf_u,linf_T,h1_v,h1_u,h1_T\n0.5,0,0,0,0,0,0,0,0,0\n");
  write_rate_fits_csv(b, {{"linf_T", RateFit{-0.5, 0.25, 1.0}}});
  EXPECT_EQ(b.str(), "label,exponent,log_prefactor,r_squared\nlinf_T,-0.5,0.25,1\n");
  EXPECT_EQ(fmt17(0.1), "0.10000000000000001");
}
