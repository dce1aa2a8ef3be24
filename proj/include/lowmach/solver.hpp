#pragma once

// Time integration of the low-Mach compressible Navier-Stokes system in two
// formulations:
//
//  Lagrangian (well-prepared data), P = T / v:
//    v_t - u_x = 0
//    u_t + P_x / eps^2 = mu (u_x / v)_x
//    (T + |eps u|^2 / 2)_t + (P u)_x = kappa (T_x / v)_x + eps^2 (mu u u_x / v)_x
//
//  Eulerian fluctuation variables (ill-prepared data), P = e^{eps p}, T = e^theta:
//    p_t + u p_x + (2u - kappa e^{-eps p + theta} theta_x)_x / eps
//        = mu eps e^{-eps p} u_x^2 + kappa e^{-eps p + theta} p_x theta_x
//    e^{-theta} (u_t + u u_x) + p_x / eps = mu e^{-eps p} u_xx
//    theta_t + u theta_x + u_x = kappa e^{-eps p} (e^theta theta_x)_x + mu eps^2 e^{-eps p} u_x^2
//
// plus the limit heat equation theta_t = (kappa e^theta / 2) theta_xx.
//
// All grids are collocated and uniform. Implicit terms use coefficients frozen
// at the old time level, giving one 3x3 block-tridiagonal solve per step.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lowmach/banded.hpp"
#include "lowmach/core.hpp"
#include "lowmach/profiles.hpp"

namespace lowmach {

inline constexpr Real kGamma = 2.0;  // 1 + R / c_v with R = c_v = 1
inline constexpr Real kVelocityCap = 1e6;

struct Grid {
  Real half_length = 1.0;
  Index cells = 16;  ///< number of nodes
  Real spacing = 0.0;
  GridFn nodes;
};

inline Grid make_grid(Real half_length, Index n) {
  if (!(half_length > 0.0)) throw ConfigInvalid("numerical.half_length", "must be positive");
  if (n < 16) throw ConfigInvalid("numerical.cells", "must be at least 16");
  Grid g;
  g.half_length = half_length;
  g.cells = n;
  g.spacing = 2.0 * half_length / static_cast<Real>(n - 1);
  g.nodes.resize(n);
  for (Index i = 0; i < n; ++i) g.nodes[i] = -half_length + g.spacing * static_cast<Real>(i);
  g.nodes.back() = half_length;
  return g;
}

struct LagrangianState {
  Grid grid;
  Real time = 0.0;
  GridFn v, u, T;

  Real pressure(Index i) const { return T[i] / v[i]; }
};

struct FluctuationState {
  Grid grid;
  Real time = 0.0;
  GridFn p, u, theta;
};

/// Admissible box for a = e^{-eps p} and b = e^{theta}.
struct FluctuationBox {
  Real a_lo = 0.1, a_hi = 10.0;
  Real b_lo = 0.1, b_hi = 10.0;
};

enum class Scheme { Explicit, SemiImplicit };
enum class Boundary { DirichletFarField, HomogeneousNeumann };

using FarField = std::function<std::array<Real, 3>(Real x, Real t)>;

struct SolverConfig {
  Real epsilon = 0.1;
  Real mu_tilde = 1.0;
  Real kappa = 1.0;
  Real dt = 1e-3;
  Scheme scheme = Scheme::SemiImplicit;
  Boundary bc = Boundary::DirichletFarField;
  Real end_time = 1.0;
  std::vector<Real> snapshot_times;
  Real c_safe = 0.5;
  /// Dirichlet boundary data; when empty the boundary nodes keep their values.
  FarField far_field;
  FluctuationBox box;
  /// Record divergence in the trajectory instead of throwing.
  bool capture_divergence = false;

  void validate() const {
    if (!(epsilon > 0.0)) throw ConfigInvalid("numerical.epsilon", "must be positive");
    if (!(mu_tilde > 0.0)) throw ConfigInvalid("physical.mu_tilde", "must be positive");
    if (!(kappa > 0.0)) throw ConfigInvalid("physical.kappa", "must be positive");
    if (!(dt > 0.0)) throw ConfigInvalid("numerical.dt", "must be positive");
    if (!(end_time >= 0.0)) throw ConfigInvalid("numerical.end_time", "must be non-negative");
    for (Index i = 0; i < snapshot_times.size(); ++i) {
      if (snapshot_times[i] < 0.0 || snapshot_times[i] > end_time)
        throw ConfigInvalid("numerical.snapshot_times", "must lie in [0, end_time]");
      if (i > 0 && snapshot_times[i] < snapshot_times[i - 1])
        throw ConfigInvalid("numerical.snapshot_times", "must be sorted");
    }
  }
};

/// Dirichlet data from the corrected profile at the given time.
inline FarField tilde_far_field(ProfileSet ps) {
  return [ps = std::move(ps)](Real x, Real t) {
    const Triple s = eval_tilde(ps, x, t);
    return std::array<Real, 3>{s.first, s.u, s.T};
  };
}

// ---------------------------------------------------------------------------
// Initial data

inline LagrangianState init_well_prepared(const ProfileSet& ps, const Grid& grid) {
  if (ps.frame != Frame::Lagrangian) throw ConfigInvalid("frame", "well-prepared data needs a Lagrangian profile");
  LagrangianState s;
  s.grid = grid;
  s.time = 0.0;
  const Index n = grid.cells;
  s.v.resize(n);
  s.u.resize(n);
  s.T.resize(n);
  for (Index i = 0; i < n; ++i) {
    const Triple t = eval_tilde(ps, grid.nodes[i], 0.0);
    s.v[i] = t.first;
    s.u[i] = t.u;
    s.T[i] = t.T;
  }
  return s;
}

/// theta_tilde = -ln Xi for an Eulerian density wave.
inline Real theta_tilde(const ProfileSet& ps, Real x, Real t) {
  return -std::log(wave_eval(ps.wave, x, t).value);
}

inline GridFn sample_theta_tilde(const ProfileSet& ps, const Grid& grid, Real t = 0.0) {
  if (ps.frame != Frame::Eulerian) throw ConfigInvalid("frame", "theta background needs an Eulerian profile");
  GridFn th(grid.cells);
  for (Index i = 0; i < grid.cells; ++i) th[i] = theta_tilde(ps, grid.nodes[i], t);
  return th;
}

inline void check_box(const FluctuationState& s, Real eps, const FluctuationBox& box) {
  for (Index i = 0; i < s.p.size(); ++i) {
    const Real a = std::exp(-eps * s.p[i]);
    const Real b = std::exp(s.theta[i]);
    if (!(a >= box.a_lo && a <= box.a_hi)) throw ConfigInvalid("initial.p", "e^{-eps p} outside admissible box");
    if (!(b >= box.b_lo && b <= box.b_hi)) throw ConfigInvalid("initial.theta", "e^{theta} outside admissible box");
  }
}

inline FluctuationState init_ill_prepared(const GridFn& theta_bg, const GridFn& p_bump, const GridFn& u0,
                                          const Grid& grid, Real eps, const FluctuationBox& box = {}) {
  const Index n = grid.cells;
  if (theta_bg.size() != n || p_bump.size() != n || u0.size() != n)
    throw ConfigInvalid("initial", "field sizes must match the grid");
  FluctuationState s;
  s.grid = grid;
  s.p = p_bump;
  s.u = u0;
  s.theta = theta_bg;
  check_box(s, eps, box);
  return s;
}

/// C^2 compactly supported bump (1 - (x/w)^2)^3 of the given amplitude.
inline GridFn compact_bump(const Grid& grid, Real amplitude = 1.0, Real width = 2.0) {
  GridFn b(grid.cells, 0.0);
  for (Index i = 0; i < grid.cells; ++i) {
    const Real r = grid.nodes[i] / width;
    if (std::abs(r) < 1.0) b[i] = amplitude * std::pow(1.0 - r * r, 3);
  }
  return b;
}

/// Smallest C with |theta(x) - theta_plus| <= C x^{-1-sigma} over grid nodes x >= 1.
inline Real tail_decay_constant(const GridFn& theta, const Grid& grid, Real theta_plus, Real sigma) {
  Real c = 0.0;
  for (Index i = 0; i < grid.cells; ++i) {
    const Real x = grid.nodes[i];
    if (x < 1.0) continue;
    c = std::max(c, std::abs(theta[i] - theta_plus) * std::pow(x, 1.0 + sigma));
  }
  return c;
}

// ---------------------------------------------------------------------------
// Lagrangian steppers

namespace detail {

inline void check_lagrangian(const LagrangianState& s) {
  for (Index i = 0; i < s.v.size(); ++i) {
    if (!std::isfinite(s.v[i]) || !std::isfinite(s.u[i]) || !std::isfinite(s.T[i]))
      throw SimulationDiverged("non-finite value at node " + std::to_string(i), s.time);
    if (!(s.v[i] > 0.0) || !(s.T[i] > 0.0))
      throw SimulationDiverged("positivity lost at node " + std::to_string(i), s.time);
    if (std::abs(s.u[i]) > kVelocityCap) throw SimulationDiverged("velocity blow-up", s.time);
  }
}

// Zero-gradient rows x_0 - x_1 = 0 and x_{n-1} - x_{n-2} = 0.
inline void pin_neumann(BlockTridiagonal<3>& sys) {
  const Index n = sys.size();
  Mat<3> minus_id = identity<3>();
  for (auto& row : minus_id)
    for (auto& x : row) x = -x;
  sys.pin(0, {0.0, 0.0, 0.0});
  sys.pin(n - 1, {0.0, 0.0, 0.0});
  sys.upper[0] = minus_id;
  sys.lower[n - 1] = minus_id;
}

inline void apply_lagrangian_bc(LagrangianState& next, const LagrangianState& old, const SolverConfig& cfg) {
  const Index n = next.v.size();
  if (cfg.bc == Boundary::HomogeneousNeumann) {
    next.v[0] = next.v[1]; next.u[0] = next.u[1]; next.T[0] = next.T[1];
    next.v[n - 1] = next.v[n - 2]; next.u[n - 1] = next.u[n - 2]; next.T[n - 1] = next.T[n - 2];
    return;
  }
  for (Index i : {Index{0}, n - 1}) {
    if (cfg.far_field) {
      const auto b = cfg.far_field(next.grid.nodes[i], next.time);
      next.v[i] = b[0]; next.u[i] = b[1]; next.T[i] = b[2];
    } else {
      next.v[i] = old.v[i]; next.u[i] = old.u[i]; next.T[i] = old.T[i];
    }
  }
}

}  // namespace detail

/// Stability bound of the explicit Lagrangian scheme: acoustic CFL, explicit
/// diffusion, and viscous damping of the central acoustic discretization.
inline Real explicit_dt_bound(const LagrangianState& s, const SolverConfig& cfg) {
  Real max_c2 = 0.0, v_min = s.v[0], v_max = s.v[0];
  for (Index i = 0; i < s.v.size(); ++i) {
    max_c2 = std::max(max_c2, kGamma * s.pressure(i) / s.v[i]);
    v_min = std::min(v_min, s.v[i]);
    v_max = std::max(v_max, s.v[i]);
  }
  const Real dx = s.grid.spacing;
  const Real eps = cfg.epsilon;
  const Real acoustic = eps * dx / std::sqrt(max_c2);
  const Real diffusive = dx * dx / (2.0 * std::max(cfg.mu_tilde, cfg.kappa) / v_min);
  const Real damping = 2.0 * eps * eps * std::min(cfg.mu_tilde, cfg.kappa) / v_max / max_c2;
  return cfg.c_safe * std::min({acoustic, diffusive, damping});
}

struct LagrangianFluxes {
  GridFn mass, momentum, energy;  ///< face fluxes F_{i+1/2}, i = 0..n-2
};

/// Explicit conservative face fluxes; the update is X_i += dt (F_{i+1/2} - F_{i-1/2}) / dx.
inline LagrangianFluxes lagrangian_face_fluxes(const LagrangianState& s, const SolverConfig& cfg) {
  const Index n = s.v.size();
  const Real dx = s.grid.spacing;
  const Real e2 = cfg.epsilon * cfg.epsilon;
  LagrangianFluxes f;
  f.mass.resize(n - 1);
  f.momentum.resize(n - 1);
  f.energy.resize(n - 1);
  for (Index j = 0; j + 1 < n; ++j) {
    const Real vf = 0.5 * (s.v[j] + s.v[j + 1]);
    const Real uf = 0.5 * (s.u[j] + s.u[j + 1]);
    const Real ux = (s.u[j + 1] - s.u[j]) / dx;
    const Real Tx = (s.T[j + 1] - s.T[j]) / dx;
    const Real Pl = s.pressure(j), Pr = s.pressure(j + 1);
    f.mass[j] = uf;
    f.momentum[j] = -0.5 * (Pl + Pr) / e2 + cfg.mu_tilde * ux / vf;
    f.energy[j] = -0.5 * (Pl * s.u[j] + Pr * s.u[j + 1]) + cfg.kappa * Tx / vf + e2 * cfg.mu_tilde * uf * ux / vf;
  }
  return f;
}

inline LagrangianState step_lagrangian_explicit(const LagrangianState& s, const SolverConfig& cfg) {
  const Real bound = explicit_dt_bound(s, cfg);
  if (cfg.dt > bound) throw CFLViolation(cfg.dt, bound);
  const Index n = s.v.size();
  const Real r = cfg.dt / s.grid.spacing;
  const Real e2 = cfg.epsilon * cfg.epsilon;
  const LagrangianFluxes f = lagrangian_face_fluxes(s, cfg);
  LagrangianState next = s;
  next.time = s.time + cfg.dt;
  for (Index i = 1; i + 1 < n; ++i) {
    next.v[i] = s.v[i] + r * (f.mass[i] - f.mass[i - 1]);
    next.u[i] = s.u[i] + r * (f.momentum[i] - f.momentum[i - 1]);
    const Real energy = s.T[i] + 0.5 * e2 * s.u[i] * s.u[i] + r * (f.energy[i] - f.energy[i - 1]);
    next.T[i] = energy - 0.5 * e2 * next.u[i] * next.u[i];
  }
  detail::apply_lagrangian_bc(next, s, cfg);
  detail::check_lagrangian(next);
  return next;
}

/// Semi-implicit step. Implicit: the pressure gradient (linearized P about the
/// old state), the velocity divergence in the mass and energy equations, the
/// viscous and heat fluxes. Explicit: the eps^2 viscous work. Both the mass
/// and total energy updates remain in conservative flux form.
inline LagrangianState step_lagrangian_semi_implicit(const LagrangianState& s, const SolverConfig& cfg) {
  const Real dx = s.grid.spacing;
  const Real bound = cfg.c_safe * dx;
  if (cfg.dt > bound) throw CFLViolation(cfg.dt, bound);
  const Index n = s.v.size();
  const Real dt = cfg.dt;
  const Real e2 = cfg.epsilon * cfg.epsilon;
  const Real half_r = 0.5 * dt / dx;
  const Real mu_r = dt * cfg.mu_tilde / (dx * dx);
  const Real k_r = dt * cfg.kappa / (dx * dx);
  const Real p_r = half_r / e2;

  GridFn P(n), work_flux(n - 1);
  for (Index i = 0; i < n; ++i) P[i] = s.pressure(i);
  for (Index j = 0; j + 1 < n; ++j) {
    const Real vf = 0.5 * (s.v[j] + s.v[j + 1]);
    const Real uf = 0.5 * (s.u[j] + s.u[j + 1]);
    work_flux[j] = e2 * cfg.mu_tilde * uf * (s.u[j + 1] - s.u[j]) / (dx * vf);
  }

  // Unknowns per node: (v, u, T). P_lin,j = (T_j - P_j v_j) / v_j^n + P_j.
  BlockTridiagonal<3> sys(n);
  enum { V = 0, U = 1, T = 2 };
  for (Index i = 1; i + 1 < n; ++i) {
    const Real inv_vl = 2.0 / (s.v[i - 1] + s.v[i]);
    const Real inv_vr = 2.0 / (s.v[i] + s.v[i + 1]);
    Mat<3>& A = sys.lower[i];
    Mat<3>& B = sys.diag[i];
    Mat<3>& C = sys.upper[i];
    A = Mat<3>{}; B = Mat<3>{}; C = Mat<3>{};

    // mass: v_i - half_r (u_{i+1} - u_{i-1}) = v_i^n
    B[V][V] = 1.0;
    A[V][U] = half_r;
    C[V][U] = -half_r;

    // momentum
    B[U][U] = 1.0 + mu_r * (inv_vl + inv_vr);
    A[U][U] = -mu_r * inv_vl;
    C[U][U] = -mu_r * inv_vr;
    C[U][T] = p_r / s.v[i + 1];
    C[U][V] = -p_r * P[i + 1] / s.v[i + 1];
    A[U][T] = -p_r / s.v[i - 1];
    A[U][V] = p_r * P[i - 1] / s.v[i - 1];

    // energy, with |eps u|^2/2 linearized as eps^2 u^n u - eps^2 (u^n)^2 / 2
    B[T][T] = 1.0 + k_r * (inv_vl + inv_vr);
    A[T][T] = -k_r * inv_vl;
    C[T][T] = -k_r * inv_vr;
    B[T][U] = e2 * s.u[i];
    C[T][U] = half_r * P[i + 1];
    A[T][U] = -half_r * P[i - 1];

    const Real energy = s.T[i] + 0.5 * e2 * s.u[i] * s.u[i];
    sys.rhs[i] = {s.v[i], s.u[i] - p_r * (P[i + 1] - P[i - 1]),
                  energy + 0.5 * e2 * s.u[i] * s.u[i] + (dt / dx) * (work_flux[i] - work_flux[i - 1])};
  }

  LagrangianState next = s;
  next.time = s.time + dt;
  if (cfg.bc == Boundary::HomogeneousNeumann) {
    detail::pin_neumann(sys);
  } else {
    for (Index i : {Index{0}, n - 1}) {
      std::array<Real, 3> b{s.v[i], s.u[i], s.T[i]};
      if (cfg.far_field) b = cfg.far_field(s.grid.nodes[i], next.time);
      sys.pin(i, b);
    }
  }

  const auto x = sys.solve();
  for (Index i = 0; i < n; ++i) {
    next.v[i] = x[i][V];
    next.u[i] = x[i][U];
    const Real du = x[i][U] - s.u[i];
    next.T[i] = (i == 0 || i + 1 == n) ? x[i][T] : x[i][T] - 0.5 * e2 * du * du;
  }
  detail::check_lagrangian(next);
  return next;
}

inline LagrangianState step_lagrangian(const LagrangianState& s, const SolverConfig& cfg) {
  return cfg.scheme == Scheme::Explicit ? step_lagrangian_explicit(s, cfg) : step_lagrangian_semi_implicit(s, cfg);
}

// ---------------------------------------------------------------------------
// Fluctuation stepper

namespace detail {

inline Real upwind_derivative(const GridFn& f, Index i, Real velocity, Real dx) {
  return velocity > 0.0 ? (f[i] - f[i - 1]) / dx : (f[i + 1] - f[i]) / dx;
}

inline void check_fluctuation(const FluctuationState& s, Real eps, const FluctuationBox& box) {
  for (Index i = 0; i < s.p.size(); ++i) {
    if (!std::isfinite(s.p[i]) || !std::isfinite(s.u[i]) || !std::isfinite(s.theta[i]))
      throw SimulationDiverged("non-finite value at node " + std::to_string(i), s.time);
    if (std::abs(s.u[i]) > kVelocityCap) throw SimulationDiverged("velocity blow-up", s.time);
    const Real a = std::exp(-eps * s.p[i]);
    const Real b = std::exp(s.theta[i]);
    if (!(a >= box.a_lo && a <= box.a_hi && b >= box.b_lo && b <= box.b_hi))
      throw SimulationDiverged("state left the admissible box at node " + std::to_string(i), s.time);
  }
}

}  // namespace detail

inline FluctuationState step_fluctuation_semi_implicit(const FluctuationState& s, const SolverConfig& cfg) {
  const Index n = s.p.size();
  const Real dx = s.grid.spacing;
  const Real dt = cfg.dt;
  const Real eps = cfg.epsilon;
  Real u_max = 0.0;
  for (Real u : s.u) u_max = std::max(u_max, std::abs(u));
  if (u_max > 0.0 && dt > cfg.c_safe * dx / u_max) throw CFLViolation(dt, cfg.c_safe * dx / u_max);

  GridFn a(n), b(n);
  for (Index i = 0; i < n; ++i) {
    a[i] = std::exp(-eps * s.p[i]);
    b[i] = std::exp(s.theta[i]);
  }
  const Real inv_dx2 = 1.0 / (dx * dx);

  BlockTridiagonal<3> sys(n);
  enum { Pv = 0, Uv = 1, Th = 2 };
  for (Index i = 1; i + 1 < n; ++i) {
    Mat<3>& A = sys.lower[i];
    Mat<3>& B = sys.diag[i];
    Mat<3>& C = sys.upper[i];
    A = Mat<3>{}; B = Mat<3>{}; C = Mat<3>{};
    const Real cl = 0.5 * (a[i - 1] * b[i - 1] + a[i] * b[i]);
    const Real cr = 0.5 * (a[i] * b[i] + a[i + 1] * b[i + 1]);
    const Real bl = 0.5 * (b[i - 1] + b[i]);
    const Real br = 0.5 * (b[i] + b[i + 1]);
    const Real ux = (s.u[i + 1] - s.u[i - 1]) / (2.0 * dx);
    const Real px = (s.p[i + 1] - s.p[i - 1]) / (2.0 * dx);
    const Real thx = (s.theta[i + 1] - s.theta[i - 1]) / (2.0 * dx);
    const Real ui = s.u[i];

    // p: p + (dt/eps)[(u_{i+1}-u_{i-1})/dx - kappa (c theta_x)_x] = explicit
    const Real kp = dt * cfg.kappa * inv_dx2 / eps;
    B[Pv][Pv] = 1.0;
    C[Pv][Uv] = dt / (eps * dx);
    A[Pv][Uv] = -dt / (eps * dx);
    B[Pv][Th] = kp * (cl + cr);
    A[Pv][Th] = -kp * cl;
    C[Pv][Th] = -kp * cr;

    // u: u + (dt b/eps) p_x - dt mu a b u_xx = explicit
    const Real vu = dt * cfg.mu_tilde * a[i] * b[i] * inv_dx2;
    B[Uv][Uv] = 1.0 + 2.0 * vu;
    A[Uv][Uv] = -vu;
    C[Uv][Uv] = -vu;
    C[Uv][Pv] = dt * b[i] / (2.0 * eps * dx);
    A[Uv][Pv] = -dt * b[i] / (2.0 * eps * dx);

    // theta: theta + dt u_x - dt kappa a (b theta_x)_x = explicit
    const Real kt = dt * cfg.kappa * a[i] * inv_dx2;
    B[Th][Th] = 1.0 + kt * (bl + br);
    A[Th][Th] = -kt * bl;
    C[Th][Th] = -kt * br;
    C[Th][Uv] = dt / (2.0 * dx);
    A[Th][Uv] = -dt / (2.0 * dx);

    sys.rhs[i] = {
        s.p[i] - dt * ui * detail::upwind_derivative(s.p, i, ui, dx) +
            dt * (cfg.mu_tilde * eps * a[i] * ux * ux + cfg.kappa * a[i] * b[i] * px * thx),
        s.u[i] - dt * ui * detail::upwind_derivative(s.u, i, ui, dx),
        s.theta[i] - dt * ui * detail::upwind_derivative(s.theta, i, ui, dx) +
            dt * cfg.mu_tilde * eps * eps * a[i] * ux * ux,
    };
  }

  FluctuationState next = s;
  next.time = s.time + dt;
  if (cfg.bc == Boundary::HomogeneousNeumann) {
    detail::pin_neumann(sys);
  } else {
    for (Index i : {Index{0}, n - 1}) {
      std::array<Real, 3> bv{s.p[i], s.u[i], s.theta[i]};
      if (cfg.far_field) bv = cfg.far_field(s.grid.nodes[i], next.time);
      sys.pin(i, bv);
    }
  }

  const auto x = sys.solve();
  for (Index i = 0; i < n; ++i) {
    next.p[i] = x[i][Pv];
    next.u[i] = x[i][Uv];
    next.theta[i] = x[i][Th];
  }
  detail::check_fluctuation(next, eps, cfg.box);
  return next;
}

// ---------------------------------------------------------------------------
// Limit heat equation theta_t = (kappa e^theta / 2) theta_xx

struct LimitSolution {
  GridFn theta;
  GridFn u_bar;  ///< kappa e^theta theta_x / 2
};

inline GridFn limit_velocity(const GridFn& theta, Real kappa, Real dx) {
  const Index n = theta.size();
  GridFn u(n, 0.0);
  for (Index i = 1; i + 1 < n; ++i)
    u[i] = 0.5 * kappa * std::exp(theta[i]) * (theta[i + 1] - theta[i - 1]) / (2.0 * dx);
  return u;
}

/// Backward Euler with the diffusivity frozen at the old level; Dirichlet data
/// held at the initial endpoint values. `dt <= 0` picks min(dx, 0.01).
inline LimitSolution solve_limit_theta(const GridFn& theta_in, Real kappa, const Grid& grid, Real t_end,
                                       Real dt = 0.0) {
  if (!(kappa > 0.0)) throw ConfigInvalid("physical.kappa", "must be positive");
  if (!(t_end > 0.0)) throw ConfigInvalid("t_end", "must be positive");
  const Index n = grid.cells;
  if (theta_in.size() != n) throw ConfigInvalid("theta_in", "size must match the grid");
  for (Real th : theta_in)
    if (!std::isfinite(th)) throw ConfigInvalid("theta_in", "must be bounded");
  const Real dx = grid.spacing;
  if (dt <= 0.0) dt = std::min(dx, 0.01);
  const Index steps = static_cast<Index>(std::ceil(t_end / dt - 1e-9));
  dt = t_end / static_cast<Real>(steps);

  GridFn theta = theta_in;
  GridFn lo(n), di(n), up(n);
  for (Index k = 0; k < steps; ++k) {
    lo[0] = up[0] = 0.0; di[0] = 1.0;
    lo[n - 1] = up[n - 1] = 0.0; di[n - 1] = 1.0;
    for (Index i = 1; i + 1 < n; ++i) {
      const Real r = dt * 0.5 * kappa * std::exp(theta[i]) / (dx * dx);
      lo[i] = -r;
      up[i] = -r;
      di[i] = 1.0 + 2.0 * r;
    }
    GridFn rhs = theta;
    rhs.front() = theta_in.front();
    rhs.back() = theta_in.back();
    theta = solve_tridiagonal(lo, di, up, rhs);
  }
  LimitSolution out;
  out.u_bar = limit_velocity(theta, kappa, dx);
  out.theta = std::move(theta);
  return out;
}

// ---------------------------------------------------------------------------
// Time loop

template <class State>
struct Snapshot {
  Real requested_time = 0.0;
  State state;
};

template <class State>
struct Trajectory {
  SolverConfig config;
  std::vector<Snapshot<State>> snapshots;
  bool diverged = false;
  Real diverged_time = 0.0;
  std::string failure;
};

/// Step from `initial` to end_time. Each requested snapshot is taken at the
/// first step boundary at or after its time; the actual time is kept in the
/// snapshot state. With no snapshot_times, only the final state is recorded.
template <class State, class Stepper>
Trajectory<State> run(const State& initial, const SolverConfig& cfg, Stepper&& step) {
  cfg.validate();
  Trajectory<State> traj;
  traj.config = cfg;
  std::vector<Real> wanted = cfg.snapshot_times;
  if (wanted.empty()) wanted.push_back(cfg.end_time);

  auto step_index = [&](Real t) { return static_cast<Index>(std::ceil(t / cfg.dt - 1e-9)); };
  const Index total = step_index(cfg.end_time);
  State cur = initial;
  const Real t0 = initial.time;
  Index next_snap = 0;
  auto capture = [&](Index k) {
    while (next_snap < wanted.size() && step_index(wanted[next_snap]) <= k) {
      if (traj.snapshots.empty() || traj.snapshots.back().state.time < cur.time) {
        traj.snapshots.push_back({wanted[next_snap], cur});
      }
      ++next_snap;
    }
  };
  capture(0);
  for (Index k = 1; k <= total; ++k) {
    try {
      cur = step(cur, cfg);
    } catch (const SimulationDiverged& e) {
      if (!cfg.capture_divergence) throw;
      traj.diverged = true;
      traj.diverged_time = e.time;
      traj.failure = e.what();
      return traj;
    }
    cur.time = t0 + static_cast<Real>(k) * cfg.dt;
    capture(k);
  }
  return traj;
}

inline Trajectory<LagrangianState> run(const LagrangianState& initial, const SolverConfig& cfg) {
  return run(initial, cfg, [](const LagrangianState& s, const SolverConfig& c) { return step_lagrangian(s, c); });
}

inline Trajectory<FluctuationState> run(const FluctuationState& initial, const SolverConfig& cfg) {
  return run(initial, cfg, [](const FluctuationState& s, const SolverConfig& c) {
    return step_fluctuation_semi_implicit(s, c);
  });
}

// ---------------------------------------------------------------------------
// Scaling y = x / eps, tau = t / eps^2, u -> eps u

enum class ScaleDirection { ToScaled, ToPhysical };

inline LagrangianState rescale(const LagrangianState& s, Real eps, ScaleDirection dir) {
  if (!(eps > 0.0)) throw ConfigInvalid("epsilon", "must be positive");
  const Real fx = dir == ScaleDirection::ToScaled ? 1.0 / eps : eps;
  const Real ft = fx * fx;
  const Real fu = dir == ScaleDirection::ToScaled ? eps : 1.0 / eps;
  LagrangianState r = s;
  r.grid.half_length *= fx;
  r.grid.spacing *= fx;
  for (Real& x : r.grid.nodes) x *= fx;
  r.time *= ft;
  for (Real& u : r.u) u *= fu;
  return r;
}

// ---------------------------------------------------------------------------
// Snapshot files

namespace detail {
template <class Stream>
void write_header(Stream& os, const char* kind, Real time, Real eps, const Grid& g) {
  char buf[160];
  os << "# kind=" << kind << "\n";
  std::snprintf(buf, sizeof buf, "# time=%.17g\n# epsilon=%.17g\n# half_length=%.17g\n", time, eps, g.half_length);
  os << buf;
  std::snprintf(buf, sizeof buf, "# cells=%zu\n# spacing=%.17g\n", g.cells, g.spacing);
  os << buf;
}
}  // namespace detail

template <class Stream>
void write_snapshot(Stream& os, const LagrangianState& s, Real eps) {
  detail::write_header(os, "lagrangian", s.time, eps, s.grid);
  os << "# columns=x v u T\n";
  char buf[160];
  for (Index i = 0; i < s.v.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g\n", s.grid.nodes[i], s.v[i], s.u[i], s.T[i]);
    os << buf;
  }
}

template <class Stream>
void write_snapshot(Stream& os, const FluctuationState& s, Real eps) {
  detail::write_header(os, "fluctuation", s.time, eps, s.grid);
  os << "# columns=x p u theta\n";
  char buf[160];
  for (Index i = 0; i < s.p.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g %.17g\n", s.grid.nodes[i], s.p[i], s.u[i], s.theta[i]);
    os << buf;
  }
}

}  // namespace lowmach
