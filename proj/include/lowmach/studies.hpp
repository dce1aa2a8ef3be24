#pragma once

// Reusable numerical studies: each sets up a run from profile data, executes
// it, and reduces the output to a few measured numbers.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <random>
#include <string>
#include <thread>
#include <vector>

#include "lowmach/diagnostics.hpp"
#include "lowmach/profiles.hpp"
#include "lowmach/solver.hpp"
#include "lowmach/wave.hpp"

namespace lowmach {

// ---------------------------------------------------------------------------
// Sweep workers

/// Worker count for `tasks` independent runs, capped by LOWMACH_THREADS.
inline unsigned sweep_workers(std::size_t tasks) {
  unsigned w = std::max(1u, std::thread::hardware_concurrency());
  if (const char* env = std::getenv("LOWMACH_THREADS")) {
    const long cap = std::strtol(env, nullptr, 10);
    if (cap > 0) w = std::min<unsigned>(w, static_cast<unsigned>(cap));
  }
  return static_cast<unsigned>(std::max<std::size_t>(1, std::min<std::size_t>(w, tasks)));
}

/// out[i] = fn(keys[i]) on up to `workers` threads. Each slot is written by
/// exactly one task, so results do not depend on scheduling. The first
/// exception (by key position) is rethrown after all workers join.
template <class Key, class Fn>
auto parallel_map(const std::vector<Key>& keys, Fn fn, unsigned workers) {
  using Result = decltype(fn(keys.front()));
  std::vector<Result> out(keys.size());
  std::vector<std::exception_ptr> errors(keys.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < keys.size(); i = next++) {
      try {
        out[i] = fn(keys[i]);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  workers = std::max(1u, workers);
  if (workers == 1 || keys.size() <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned k = 0; k < workers; ++k) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  return out;
}

// ---------------------------------------------------------------------------
// Wave studies

struct OracleComparison {
  Real max_diff = 0.0;
  Index points = 0;
  Real seconds = 0.0;
};

/// Max |rho_oracle - Xi| over oracle nodes with |eta| <= H.
inline OracleComparison compare_with_oracle(const WaveProfile& p, Real t_relax = 100.0, Index n = 8001,
                                            Real half_length = 200.0) {
  const auto start = std::chrono::steady_clock::now();
  const RelaxationResult r = relaxation_oracle(p.left_state, p.right_state, p.kappa, t_relax, n, half_length);
  OracleComparison c;
  for (Index i = 0; i < r.eta.size(); ++i) {
    if (std::abs(r.eta[i]) > p.half_width) continue;
    c.max_diff = std::max(c.max_diff, std::abs(r.rho[i] - wave_interpolate(p, r.eta[i]).first));
    ++c.points;
  }
  c.seconds = std::chrono::duration<Real>(std::chrono::steady_clock::now() - start).count();
  return c;
}

struct TailFit {
  RateFit left, right;                 ///< exponent = slope of ln|Xi'| against eta^2
  Real expected_left = 0.0, expected_right = 0.0;  ///< -1/(4 d) at each far-field state
};

inline TailFit tail_fit(const WaveProfile& p, Real lo = 3.0, Real hi = 6.0) {
  if (p.constant()) throw ConfigInvalid("physical.endpoints", "a constant profile has no tail");
  if (!(0.0 <= lo && lo < hi && hi <= p.half_width)) throw ConfigInvalid("tail window", "must lie within [0, H]");
  std::vector<Real> xl, yl, xr, yr;
  for (Index i = 0; i < p.eta_grid.size(); ++i) {
    const Real eta = p.eta_grid[i];
    const Real a = std::abs(eta);
    if (a < lo || a > hi || p.derivs[i] == 0.0) continue;
    auto& xs = eta < 0.0 ? xl : xr;
    auto& ys = eta < 0.0 ? yl : yr;
    xs.push_back(eta * eta);
    ys.push_back(std::log(std::abs(p.derivs[i])));
  }
  TailFit f;
  f.left = fit_line(xl, yl);
  f.right = fit_line(xr, yr);
  f.expected_left = -1.0 / (4.0 * diffusivity(p.kappa, p.left_state));
  f.expected_right = -1.0 / (4.0 * diffusivity(p.kappa, p.right_state));
  return f;
}

struct ResidualExponents {
  RateFit r1_time, r2_time, r1_eps, r2_eps;
  NormSeries time_series, eps_series;
};

/// Fits of sup|r1|, sup|r2| against (1+t) at the profile's eps, and against
/// eps at fixed time `t_fixed`.
inline ResidualExponents residual_exponents(const ProfileSet& ps, const std::vector<Real>& t_list,
                                            std::vector<Real> eps_list, Real t_fixed = 1.0) {
  ResidualExponents r;
  r.time_series = residual_decay_report(ps, t_list);
  r.r1_time = fit_rate(r.time_series, select_linf(0), RateAxis::OnePlusT);
  r.r2_time = fit_rate(r.time_series, select_linf(1), RateAxis::OnePlusT);
  std::sort(eps_list.begin(), eps_list.end());
  r.eps_series.label = "residuals_vs_eps";
  const Real t_one[] = {t_fixed};
  for (Real e : eps_list) {
    const NormSeries s = residual_decay_report(with_epsilon(ps, e), t_one);
    r.eps_series.push(e, s.records.front().metrics);
  }
  r.r1_eps = fit_rate(r.eps_series, select_linf(0), RateAxis::Epsilon);
  r.r2_eps = fit_rate(r.eps_series, select_linf(1), RateAxis::Epsilon);
  return r;
}

// ---------------------------------------------------------------------------
// Well-prepared runs

struct WellPreparedRun {
  ProfileSet profiles;
  Trajectory<LagrangianState> trajectory;
  NormSeries tilde, bar;
};

/// Fill the physical parameters and boundary data of `cfg` from the profile.
inline SolverConfig configure_for(const ProfileSet& ps, SolverConfig cfg) {
  cfg.epsilon = ps.epsilon;
  cfg.kappa = ps.kappa;
  cfg.mu_tilde = ps.mu_tilde;
  if (cfg.bc == Boundary::DirichletFarField && !cfg.far_field) cfg.far_field = tilde_far_field(ps);
  return cfg;
}

/// Uniform noise of amplitude `amplitude` on interior nodes, reproducible from `seed`.
inline GridFn seeded_noise(Index n, Real amplitude, std::uint64_t seed) {
  GridFn out(n, 0.0);
  if (amplitude == 0.0) return out;
  std::mt19937_64 gen(seed);
  std::uniform_real_distribution<Real> dist(-amplitude, amplitude);
  for (Index i = 1; i + 1 < n; ++i) out[i] = dist(gen);
  return out;
}

inline WellPreparedRun run_well_prepared(const ProfileSet& ps, const Grid& grid, SolverConfig cfg,
                                         const GridFn& temperature_noise = {}) {
  WellPreparedRun r;
  r.profiles = ps;
  cfg = configure_for(ps, std::move(cfg));
  LagrangianState init = init_well_prepared(ps, grid);
  if (!temperature_noise.empty()) {
    if (temperature_noise.size() != grid.cells) throw ConfigInvalid("noise", "size must match the grid");
    for (Index i = 0; i < grid.cells; ++i) init.T[i] += temperature_noise[i];
  }
  r.trajectory = run(init, cfg);
  r.tilde.label = "tilde";
  r.bar.label = "bar";
  for (const auto& snap : r.trajectory.snapshots) {
    r.tilde.push(snap.state.time, diff_norms(snap.state, ps, ProfileKind::Tilde));
    r.bar.push(snap.state.time, diff_norms(snap.state, ps, ProfileKind::Bar));
  }
  return r;
}

struct DecayCheck {
  bool passed = false;
  Real worst_ratio = 0.0;  ///< max over t >= after of q(t) / min_{after <= s <= t} q(s)
  Index points = 0;
};

/// q(t) = sum of squared L2 norms times (1+t)^weight must not rise above
/// `tolerance` times its running minimum once t >= after.
inline DecayCheck sawtooth_decay(const NormSeries& s, Real weight = 0.8, Real after = 1.0, Real tolerance = 1.2) {
  DecayCheck d;
  Real running_min = 0.0;
  for (const NormRecord& r : s.records) {
    if (r.t < after - 1e-9) continue;
    const Real q = r.metrics.l2_squared_total() * std::pow(1.0 + r.t, weight);
    if (d.points == 0 || q < running_min) running_min = q;
    const Real ratio = running_min > 0.0 ? q / running_min : (q > 0.0 ? HUGE_VAL : 1.0);
    d.worst_ratio = std::max(d.worst_ratio, ratio);
    ++d.points;
  }
  d.passed = d.points >= 2 && d.worst_ratio <= tolerance;
  return d;
}

/// sup over snapshots with t in [t_lo, t_hi] of (1+t)^{1/2} ||T - T_bar||_inf.
inline Real weighted_temperature_error(const NormSeries& bar, Real t_lo = 1.0, Real t_hi = 10.0) {
  Real m = 0.0;
  for (const NormRecord& r : bar.records)
    if (r.t >= t_lo - 1e-9 && r.t <= t_hi + 1e-9) m = std::max(m, std::sqrt(1.0 + r.t) * r.metrics.linf[2]);
  return m;
}

/// Region rows (x, u, T_x) of a snapshot for the creep overlay figure.
template <class Stream>
void write_creep_csv(Stream& os, const LagrangianState& s, Real eta0) {
  os << "x,u,T_x\n";
  const Real reach = eta0 * std::sqrt(1.0 + s.time);
  const Real dx = s.grid.spacing;
  for (Index i = 1; i + 1 < s.v.size(); ++i) {
    if (std::abs(s.grid.nodes[i]) > reach) continue;
    os << fmt17(s.grid.nodes[i]) << ',' << fmt17(s.u[i]) << ',' << fmt17((s.T[i + 1] - s.T[i - 1]) / (2.0 * dx))
       << '\n';
  }
}

// ---------------------------------------------------------------------------
// Stability and conservation

struct ApStability {
  Index steps = 0;
  bool semi_implicit_completed = false;
  Real max_linf = 0.0;  ///< max over snapshots and components of the distance to the corrected profile
  bool explicit_rejected = false;
  std::string explicit_outcome;
  std::string failure;
};

inline ApStability ap_stability(const ProfileSet& ps, const Grid& grid, Real dt, Index steps) {
  ApStability r;
  r.steps = steps;
  SolverConfig cfg;
  cfg.dt = dt;
  cfg.end_time = dt * static_cast<Real>(steps);
  for (int k = 0; k <= 10; ++k) cfg.snapshot_times.push_back(cfg.end_time * k / 10.0);
  cfg.capture_divergence = true;
  try {
    const WellPreparedRun run = run_well_prepared(ps, grid, cfg);
    r.semi_implicit_completed = !run.trajectory.diverged;
    r.failure = run.trajectory.failure;
    for (const NormRecord& rec : run.tilde.records)
      for (Real x : rec.metrics.linf) r.max_linf = std::max(r.max_linf, x);
  } catch (const Error& e) {
    r.failure = e.what();
  }

  SolverConfig ex = configure_for(ps, cfg);
  ex.scheme = Scheme::Explicit;
  ex.capture_divergence = false;
  LagrangianState s = init_well_prepared(ps, grid);
  try {
    for (Index k = 0; k < steps; ++k) s = step_lagrangian_explicit(s, ex);
    r.explicit_outcome = "completed";
  } catch (const CFLViolation& e) {
    r.explicit_rejected = true;
    r.explicit_outcome = e.what();
  } catch (const SimulationDiverged& e) {
    r.explicit_rejected = true;
    r.explicit_outcome = e.what();
  }
  return r;
}

struct ConservationDrift {
  Index steps = 0;
  Real dt = 0.0;
  Real mass = 0.0;    ///< max relative per-step drift of sum v dx beyond boundary flux
  Real energy = 0.0;  ///< same for sum (T + |eps u|^2 / 2) dx
};

/// Explicit run; the interior sums change by exactly dt times the flux through
/// the outermost interior faces.
inline ConservationDrift conservation_drift(const ProfileSet& ps, const Grid& grid, Index steps, Real dt_fraction = 0.8) {
  SolverConfig cfg = configure_for(ps, SolverConfig{});
  cfg.scheme = Scheme::Explicit;
  LagrangianState s = init_well_prepared(ps, grid);
  ConservationDrift d;
  d.steps = steps;
  d.dt = dt_fraction * explicit_dt_bound(s, cfg);
  cfg.dt = d.dt;
  const Index n = grid.cells;
  const Real dx = grid.spacing;
  const Real e2 = ps.epsilon * ps.epsilon;
  auto sums = [&](const LagrangianState& st) {
    Real m = 0.0, e = 0.0;
    for (Index i = 1; i + 1 < n; ++i) {
      m += st.v[i] * dx;
      e += (st.T[i] + 0.5 * e2 * st.u[i] * st.u[i]) * dx;
    }
    return std::pair<Real, Real>{m, e};
  };
  for (Index k = 0; k < steps; ++k) {
    const LagrangianFluxes f = lagrangian_face_fluxes(s, cfg);
    const auto [m0, e0] = sums(s);
    s = step_lagrangian_explicit(s, cfg);
    const auto [m1, e1] = sums(s);
    const Real dm = cfg.dt * (f.mass[n - 2] - f.mass[0]);
    const Real de = cfg.dt * (f.energy[n - 2] - f.energy[0]);
    d.mass = std::max(d.mass, std::abs((m1 - m0) - dm) / std::abs(m0));
    d.energy = std::max(d.energy, std::abs((e1 - e0) - de) / std::abs(e0));
  }
  return d;
}

// ---------------------------------------------------------------------------
// Ill-prepared runs and the limit equation

struct IllPreparedRun {
  Real epsilon = 0.0;
  Trajectory<FluctuationState> trajectory;
  std::vector<Real> times, p_l2_squared, defect;
  Real integrated_p = 0.0;
  Real integrated_defect = 0.0;
  Real theta_error = 0.0;  ///< ||theta - theta_limit||_{L2(window)} at the final snapshot
};

/// Start from the background theta~(., 0) with velocity 2u = kappa e^theta theta_x
/// and pressure fluctuation `p0`. Snapshots are the requested snapshot times.
inline IllPreparedRun run_ill_prepared(const ProfileSet& eulerian, const Grid& grid, SolverConfig cfg,
                                       const GridFn& p0, const GridFn& theta_limit, Window window) {
  IllPreparedRun r;
  r.epsilon = eulerian.epsilon;
  cfg.epsilon = eulerian.epsilon;
  cfg.kappa = eulerian.kappa;
  cfg.mu_tilde = eulerian.mu_tilde;
  const GridFn theta0 = sample_theta_tilde(eulerian, grid, 0.0);
  const GridFn u0 = limit_velocity(theta0, eulerian.kappa, grid.spacing);
  const FluctuationState init = init_ill_prepared(theta0, p0, u0, grid, cfg.epsilon, cfg.box);
  r.trajectory = run(init, cfg);
  for (const auto& snap : r.trajectory.snapshots) {
    const Real a = window_l2(snap.state.p, grid, window);
    r.times.push_back(snap.state.time);
    r.p_l2_squared.push_back(a * a);
    r.defect.push_back(incompressibility_defect(snap.state, cfg.kappa, cfg.epsilon, window));
  }
  r.integrated_p = time_integrate(r.times, r.p_l2_squared);
  r.integrated_defect = time_integrate(r.times, r.defect);
  if (!r.trajectory.snapshots.empty() && theta_limit.size() == grid.cells) {
    const GridFn& th = r.trajectory.snapshots.back().state.theta;
    GridFn diff(grid.cells);
    for (Index i = 0; i < grid.cells; ++i) diff[i] = th[i] - theta_limit[i];
    r.theta_error = window_l2(diff, grid, window);
  }
  return r;
}

struct LimitExactness {
  Real max_error = 0.0;
  Real scale = 0.0;  ///< oscillation max - min of theta~(., 0)
  Real bound = 0.0;  ///< 5 (dx^2 + dt) scale
  LimitSolution solution;
  GridFn exact;
};

inline LimitExactness limit_exactness(const ProfileSet& eulerian, const Grid& grid, Real t_end, Real dt) {
  LimitExactness r;
  const GridFn theta0 = sample_theta_tilde(eulerian, grid, 0.0);
  r.solution = solve_limit_theta(theta0, eulerian.kappa, grid, t_end, dt);
  r.exact = sample_theta_tilde(eulerian, grid, t_end);
  for (Index i = 0; i < grid.cells; ++i) r.max_error = std::max(r.max_error, std::abs(r.solution.theta[i] - r.exact[i]));
  const auto [lo, hi] = std::minmax_element(theta0.begin(), theta0.end());
  r.scale = *hi - *lo;
  r.bound = 5.0 * (grid.spacing * grid.spacing + dt) * r.scale;
  return r;
}

}  // namespace lowmach
