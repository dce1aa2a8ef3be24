#pragma once

// Self-similar diffusive wave of  rho_t = (kappa rho_x / (2 rho))_x.
//
// With eta = x / sqrt(1+t) the profile Xi(eta) solves the two-point problem
//
//     (kappa Xi' / (2 Xi))' + (eta/2) Xi' = 0,   Xi(-inf) = left, Xi(+inf) = right,
//
// which we truncate to [-H, H] with Dirichlet pinning. The same profile serves
// as the Eulerian density wave and as the Lagrangian temperature wave.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include "lowmach/banded.hpp"
#include "lowmach/core.hpp"

namespace lowmach {

struct WaveSolveOptions {
  Real half_width = 12.0;
  Index nodes = 4001;
  Real newton_tol = 1e-12;
  Index max_iters = 50;
  Real tail_tol = 1e-10;
};

struct WaveProfile {
  GridFn eta_grid;
  GridFn values;
  GridFn derivs;  ///< dXi/deta at the nodes
  Real left_state = 1.0;
  Real right_state = 1.0;
  Real kappa = 1.0;
  Real half_width = 12.0;

  Real spacing() const { return eta_grid[1] - eta_grid[0]; }
  Real strength() const { return std::abs(right_state - left_state); }
  bool constant() const { return left_state == right_state; }
};

/// Nonlinear diffusivity d(rho) = kappa / (2 rho).
inline Real diffusivity(Real kappa, Real rho) { return kappa / (2.0 * rho); }

struct WaveSample {
  Real value = 0.0;
  Real dx = 0.0;
  Real dt = 0.0;
  Real dxx = 0.0;  ///< second x-derivative, from the similarity ODE
};

namespace detail {

inline GridFn uniform_nodes(Real half_width, Index n) {
  GridFn eta(n);
  const Real h = 2.0 * half_width / static_cast<Real>(n - 1);
  for (Index i = 0; i < n; ++i) eta[i] = -half_width + h * static_cast<Real>(i);
  eta[n - 1] = half_width;
  return eta;
}

// Scaled residual of the flux-form discretization: 2h^2/kappa times the FD
// equation, so that it is measured in units of Xi.
inline void wave_residual(const GridFn& eta, const GridFn& xi, Real kappa, GridFn& res) {
  const Index n = xi.size();
  const Real h = eta[1] - eta[0];
  const Real c = h / kappa;  // (2h^2/kappa) * (1/(4h))
  res.assign(n, 0.0);
  for (Index i = 1; i + 1 < n; ++i) {
    res[i] = (std::log(xi[i + 1]) - 2.0 * std::log(xi[i]) + std::log(xi[i - 1])) +
             c * eta[i] * 0.5 * (xi[i + 1] - xi[i - 1]);
  }
}

inline Real max_abs(const GridFn& a) {
  Real m = 0.0;
  for (Real v : a) m = std::max(m, std::abs(v));
  return m;
}

// Node derivatives from the first integral of the similarity ODE:
// F = kappa Xi'/(2 Xi) obeys F' = -eta Xi F / kappa, so
// F(eta) = F(eta*) exp(-(1/kappa) int_{eta*}^{eta} s Xi(s) ds).
// This keeps the Gaussian tails accurate far below round-off of Xi itself.
inline GridFn wave_derivatives(const GridFn& eta, const GridFn& xi, Real kappa) {
  const Index n = xi.size();
  const Real h = eta[1] - eta[0];
  GridFn fd(n, 0.0);
  Index anchor = 1;
  for (Index i = 1; i + 1 < n; ++i) {
    fd[i] = (std::log(xi[i + 1]) - std::log(xi[i - 1])) / (2.0 * h);
    if (std::abs(fd[i]) > std::abs(fd[anchor])) anchor = i;
  }
  const Real f_anchor = 0.5 * kappa * fd[anchor];
  GridFn exponent(n, 0.0);
  for (Index i = anchor + 1; i < n; ++i)
    exponent[i] = exponent[i - 1] + 0.5 * h * (eta[i] * xi[i] + eta[i - 1] * xi[i - 1]) / kappa;
  for (Index i = anchor; i-- > 0;)
    exponent[i] = exponent[i + 1] - 0.5 * h * (eta[i] * xi[i] + eta[i + 1] * xi[i + 1]) / kappa;
  GridFn d(n);
  for (Index i = 0; i < n; ++i) d[i] = 2.0 * xi[i] / kappa * f_anchor * std::exp(-exponent[i]);
  return d;
}

}  // namespace detail

/// Solve the similarity ODE by damped Newton on the flux-form finite
/// difference system. Throws ConfigInvalid on bad inputs and SolveFailed if
/// the scaled residual does not drop below `opts.newton_tol`.
inline WaveProfile solve_wave(Real left, Real right, Real kappa, const WaveSolveOptions& opts = {}) {
  if (!(left > 0.0)) throw ConfigInvalid("left", "must be positive");
  if (!(right > 0.0)) throw ConfigInvalid("right", "must be positive");
  if (!(kappa > 0.0)) throw ConfigInvalid("kappa", "must be positive");
  if (opts.nodes < 64) throw ConfigInvalid("nodes", "must be at least 64");
  if (!(opts.half_width > 0.0)) throw ConfigInvalid("half_width", "must be positive");
  if (!(opts.newton_tol > 0.0)) throw ConfigInvalid("newton_tol", "must be positive");

  WaveProfile prof;
  prof.left_state = left;
  prof.right_state = right;
  prof.kappa = kappa;
  prof.half_width = opts.half_width;
  prof.eta_grid = detail::uniform_nodes(opts.half_width, opts.nodes);
  const Index n = opts.nodes;

  if (left == right) {
    prof.values.assign(n, left);
    prof.derivs.assign(n, 0.0);
    return prof;
  }

  const GridFn& eta = prof.eta_grid;
  const Real h = eta[1] - eta[0];
  GridFn xi(n);
  for (Index i = 0; i < n; ++i) xi[i] = left + (right - left) * 0.5 * (1.0 + std::tanh(eta[i]));
  xi.front() = left;
  xi.back() = right;

  GridFn res, trial(n), trial_res;
  detail::wave_residual(eta, xi, kappa, res);
  Real rnorm = detail::max_abs(res);
  const Real c = h / kappa;

  Index iter = 0;
  GridFn a(n), b(n), cc(n), rhs(n);
  while (rnorm > opts.newton_tol) {
    if (iter++ >= opts.max_iters)
      throw SolveFailed("wave Newton did not converge: residual " + std::to_string(rnorm));
    a[0] = 0.0; b[0] = 1.0; cc[0] = 0.0; rhs[0] = 0.0;
    a[n - 1] = 0.0; b[n - 1] = 1.0; cc[n - 1] = 0.0; rhs[n - 1] = 0.0;
    for (Index i = 1; i + 1 < n; ++i) {
      a[i] = 1.0 / xi[i - 1] - 0.5 * c * eta[i];
      b[i] = -2.0 / xi[i];
      cc[i] = 1.0 / xi[i + 1] + 0.5 * c * eta[i];
      rhs[i] = -res[i];
    }
    const GridFn step = solve_tridiagonal(a, b, cc, rhs);

    Real lambda = 1.0;
    bool accepted = false;
    for (int halving = 0; halving <= 30; ++halving, lambda *= 0.5) {
      bool positive = true;
      for (Index i = 0; i < n; ++i) {
        trial[i] = xi[i] + lambda * step[i];
        if (!(trial[i] > 0.0)) positive = false;
      }
      if (!positive) continue;
      detail::wave_residual(eta, trial, kappa, trial_res);
      const Real tn = detail::max_abs(trial_res);
      if (tn < rnorm || tn <= opts.newton_tol) {
        xi.swap(trial);
        res.swap(trial_res);
        rnorm = tn;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      // Residual is at round-off; no further decrease is possible.
      if (rnorm <= 1e3 * opts.newton_tol) break;
      throw SolveFailed("wave line search failed at residual " + std::to_string(rnorm));
    }
  }

  prof.values = std::move(xi);
  prof.derivs = detail::wave_derivatives(eta, prof.values, kappa);
  return prof;
}

/// Monotone cubic Hermite evaluation of Xi and Xi' at eta (Fritsch-Carlson
/// limited node slopes). Outside [-H, H] returns the endpoint with zero slope.
inline std::pair<Real, Real> wave_interpolate(const WaveProfile& p, Real eta) {
  const Index n = p.values.size();
  if (eta <= p.eta_grid.front()) return {p.left_state, 0.0};
  if (eta >= p.eta_grid.back()) return {p.right_state, 0.0};
  const Real h = p.spacing();
  Index k = static_cast<Index>((eta - p.eta_grid.front()) / h);
  k = std::min(k, n - 2);
  const Real y0 = p.values[k], y1 = p.values[k + 1];
  const Real delta = (y1 - y0) / h;
  Real m0 = p.derivs[k], m1 = p.derivs[k + 1];
  if (delta == 0.0) {
    m0 = m1 = 0.0;
  } else {
    const Real al = m0 / delta, be = m1 / delta;
    if (al < 0.0) m0 = 0.0;
    if (be < 0.0) m1 = 0.0;
    const Real s = al * al + be * be;
    if (s > 9.0) {
      const Real tau = 3.0 / std::sqrt(s);
      m0 = tau * al * delta;
      m1 = tau * be * delta;
    }
  }
  const Real s = (eta - p.eta_grid[k]) / h;
  const Real s2 = s * s, s3 = s2 * s;
  const Real h00 = 2 * s3 - 3 * s2 + 1, h10 = s3 - 2 * s2 + s, h01 = -2 * s3 + 3 * s2, h11 = s3 - s2;
  const Real value = h00 * y0 + h10 * h * m0 + h01 * y1 + h11 * h * m1;
  const Real d00 = 6 * s2 - 6 * s, d10 = 3 * s2 - 4 * s + 1, d01 = -6 * s2 + 6 * s, d11 = 3 * s2 - 2 * s;
  const Real deriv = (d00 * y0 + d01 * y1) / h + d10 * m0 + d11 * m1;
  return {value, deriv};
}

/// Evaluate the space-time wave Xi(x / sqrt(1+t)) and its derivatives.
inline WaveSample wave_eval(const WaveProfile& p, Real x, Real t) {
  const Real s = std::sqrt(1.0 + t);
  const Real eta = x / s;
  WaveSample out;
  if (p.constant()) {
    out.value = p.left_state;
    return out;
  }
  if (eta <= p.eta_grid.front() || eta >= p.eta_grid.back()) {
    out.value = eta <= p.eta_grid.front() ? p.left_state : p.right_state;
    return out;
  }
  const auto [xi, dxi] = wave_interpolate(p, eta);
  out.value = xi;
  out.dx = dxi / s;
  out.dt = -eta * dxi / (2.0 * (1.0 + t));
  // Xi'' = Xi'^2 / Xi - eta Xi Xi' / kappa
  out.dxx = (dxi * dxi / xi - eta * xi * dxi / p.kappa) / (1.0 + t);
  return out;
}

struct RelaxationResult {
  GridFn x;
  GridFn eta;
  GridFn rho;
  Real time = 0.0;
};

/// Independent time-marching oracle for the wave profile.
///
/// Integrates rho_t = (kappa rho_x / (2 rho))_x on [-L, L] with n nodes from a
/// step (midpoint node averaged) released at t = -1, so that at t = t_relax the
/// self-similar variable is eta = x / sqrt(1 + t_relax). Linearly implicit
/// conservative Euler with geometrically growing steps.
inline RelaxationResult relaxation_oracle(Real left, Real right, Real kappa, Real t_relax, Index n,
                                          Real half_length) {
  if (!(left > 0.0) || !(right > 0.0)) throw ConfigInvalid("endpoints", "must be positive");
  if (!(kappa > 0.0)) throw ConfigInvalid("kappa", "must be positive");
  if (n < 16) throw ConfigInvalid("n", "must be at least 16");
  if (!(t_relax > 0.0)) throw ConfigInvalid("t_relax", "must be positive");
  if (half_length / std::sqrt(1.0 + t_relax) < 6.0)
    throw ConfigInvalid("t_relax", "wave support exceeds the domain");

  RelaxationResult out;
  out.x = detail::uniform_nodes(half_length, n);
  const Real dx = out.x[1] - out.x[0];
  GridFn rho(n);
  for (Index i = 0; i < n; ++i) rho[i] = out.x[i] < 0.0 ? left : (out.x[i] > 0.0 ? right : 0.5 * (left + right));

  const Real duration = 1.0 + t_relax;
  const Real growth = 1e-3;
  Real elapsed = 0.0;
  Real dt = 1e-6;
  GridFn a(n), b(n), c(n), rhs(n), lg(n);
  const Real k2 = 0.5 * kappa / (dx * dx);
  while (elapsed < duration) {
    dt = std::min({std::max(dt, growth * elapsed), duration - elapsed});
    for (Index i = 0; i < n; ++i) lg[i] = std::log(rho[i]);
    // rho' - dt k2 L[ log rho + (rho' - rho)/rho ] = rho
    a[0] = c[0] = 0.0; b[0] = 1.0; rhs[0] = left;
    a[n - 1] = c[n - 1] = 0.0; b[n - 1] = 1.0; rhs[n - 1] = right;
    for (Index i = 1; i + 1 < n; ++i) {
      a[i] = -dt * k2 / rho[i - 1];
      c[i] = -dt * k2 / rho[i + 1];
      b[i] = 1.0 + 2.0 * dt * k2 / rho[i];
      const Real lin_l = lg[i - 1] - 1.0, lin_c = lg[i] - 1.0, lin_r = lg[i + 1] - 1.0;
      rhs[i] = rho[i] + dt * k2 * (lin_l - 2.0 * lin_c + lin_r);
    }
    rho = solve_tridiagonal(a, b, c, rhs);
    elapsed += dt;
    for (Index i = 0; i < n; ++i)
      if (!(rho[i] > 0.0) || !std::isfinite(rho[i]))
        throw SimulationDiverged("relaxation oracle lost positivity", elapsed - 1.0);
  }
  out.rho = std::move(rho);
  out.time = t_relax;
  out.eta.resize(n);
  for (Index i = 0; i < n; ++i) out.eta[i] = out.x[i] / std::sqrt(duration);
  return out;
}

/// Write the profile dump: `#` header lines, then `eta value deriv` rows.
template <class Stream>
void write_wave_profile(Stream& os, const WaveProfile& p) {
  char buf[128];
  os << "# lowmach wave profile\n";
  std::snprintf(buf, sizeof buf, "# left=%.17g\n", p.left_state); os << buf;
  std::snprintf(buf, sizeof buf, "# right=%.17g\n", p.right_state); os << buf;
  std::snprintf(buf, sizeof buf, "# kappa=%.17g\n", p.kappa); os << buf;
  std::snprintf(buf, sizeof buf, "# H=%.17g\n", p.half_width); os << buf;
  os << "# nodes=" << p.values.size() << "\n";
  for (Index i = 0; i < p.values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g %.17g\n", p.eta_grid[i], p.values[i], p.derivs[i]);
    os << buf;
  }
}

}  // namespace lowmach
