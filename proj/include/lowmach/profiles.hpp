#pragma once

// Diffusive-wave profiles built on a WaveProfile.
//
// Lagrangian frame (wave is the temperature wave T^):
//   v_bar = T_bar = T^,  u_bar = kappa T^_x / (2 T^)
// Eulerian frame (wave is the density wave Xi):
//   rho_bar = Xi,  T_bar = 1/Xi,  u_bar = -kappa Xi_x / (2 Xi^2) = (kappa/2) T_bar_x
// The corrected profile only changes the temperature:
//   T_tilde = T_bar - (eps u_bar)^2 / 2.

#include <cmath>
#include <span>
#include <vector>

#include "lowmach/core.hpp"
#include "lowmach/series.hpp"
#include "lowmach/wave.hpp"

namespace lowmach {

enum class Frame { Eulerian, Lagrangian };

struct ProfileSet {
  WaveProfile wave;
  Real kappa = 1.0;
  Real mu_tilde = 1.0;
  Real epsilon = 0.0;
  Frame frame = Frame::Lagrangian;

  /// Far-field temperatures (T_-, T_+) regardless of frame.
  Real temperature_left() const { return frame == Frame::Lagrangian ? wave.left_state : 1.0 / wave.left_state; }
  Real temperature_right() const { return frame == Frame::Lagrangian ? wave.right_state : 1.0 / wave.right_state; }
};

/// Build a profile set from far-field temperatures. The Eulerian wave
/// connects the densities 1/T_- and 1/T_+ (unit far-field pressure).
inline ProfileSet make_profiles(Frame frame, Real temp_left, Real temp_right, Real kappa, Real mu_tilde,
                                Real epsilon, const WaveSolveOptions& opts = {}) {
  if (!(temp_left > 0.0)) throw ConfigInvalid("physical.endpoints[0]", "must be positive");
  if (!(temp_right > 0.0)) throw ConfigInvalid("physical.endpoints[1]", "must be positive");
  if (!(mu_tilde > 0.0)) throw ConfigInvalid("physical.mu_tilde", "must be positive");
  if (!(epsilon >= 0.0)) throw ConfigInvalid("epsilon", "must be non-negative");
  ProfileSet ps;
  ps.kappa = kappa;
  ps.mu_tilde = mu_tilde;
  ps.epsilon = epsilon;
  ps.frame = frame;
  ps.wave = frame == Frame::Lagrangian ? solve_wave(temp_left, temp_right, kappa, opts)
                                       : solve_wave(1.0 / temp_left, 1.0 / temp_right, kappa, opts);
  return ps;
}

inline ProfileSet with_epsilon(ProfileSet ps, Real eps) {
  ps.epsilon = eps;
  return ps;
}

/// (v or rho, u, T) at a point.
struct Triple {
  Real first = 0.0;
  Real u = 0.0;
  Real T = 0.0;
};

/// Bar-profile velocity and its x-derivative at (x, t).
struct VelocityJet {
  Real u = 0.0;
  Real ux = 0.0;
};

inline VelocityJet bar_velocity(const ProfileSet& ps, const WaveSample& w) {
  const Real k = ps.kappa;
  if (ps.frame == Frame::Lagrangian) {
    const Real u = 0.5 * k * w.dx / w.value;
    const Real ux = 0.5 * k * (w.dxx / w.value - w.dx * w.dx / (w.value * w.value));
    return {u, ux};
  }
  const Real xi2 = w.value * w.value;
  const Real u = -0.5 * k * w.dx / xi2;
  const Real ux = -0.5 * k * (w.dxx / xi2 - 2.0 * w.dx * w.dx / (xi2 * w.value));
  return {u, ux};
}

inline Triple eval_bar(const ProfileSet& ps, Real x, Real t) {
  const WaveSample w = wave_eval(ps.wave, x, t);
  const VelocityJet vel = bar_velocity(ps, w);
  if (ps.frame == Frame::Lagrangian) return {w.value, vel.u, w.value};
  return {w.value, vel.u, 1.0 / w.value};
}

inline Triple eval_tilde(const ProfileSet& ps, Real x, Real t) {
  Triple b = eval_bar(ps, x, t);
  const Real eu = ps.epsilon * b.u;
  b.T -= 0.5 * eu * eu;
  if (!(b.T > 0.0)) throw NonPositiveState("corrected temperature is not positive at x=" + std::to_string(x));
  return b;
}

/// Limit pressure of the bar profile. Eulerian: pi = mu u_x - rho u^2 +
/// (kappa/2) rho_t / rho. Lagrangian: pi = mu u_x / v - kappa T^_t / (2 T^).
inline Real eval_pi(const ProfileSet& ps, Real x, Real t) {
  const WaveSample w = wave_eval(ps.wave, x, t);
  const VelocityJet vel = bar_velocity(ps, w);
  if (ps.frame == Frame::Lagrangian)
    return ps.mu_tilde * vel.ux / w.value - 0.5 * ps.kappa * w.dt / w.value;
  return ps.mu_tilde * vel.ux - w.value * vel.u * vel.u + 0.5 * ps.kappa * w.dt / w.value;
}

struct ResidualPair {
  Real r1 = 0.0;
  Real r2 = 0.0;
};

/// Flux residuals of the corrected Lagrangian profile in the approximate system.
inline ResidualPair eval_residuals(const ProfileSet& ps, Real x, Real t) {
  if (ps.frame != Frame::Lagrangian) throw ConfigInvalid("frame", "residuals are defined in the Lagrangian frame");
  const WaveSample w = wave_eval(ps.wave, x, t);
  const VelocityJet vel = bar_velocity(ps, w);
  const Real e2 = ps.epsilon * ps.epsilon;
  const Real v = w.value, u = vel.u, ux = vel.ux, mu = ps.mu_tilde, k = ps.kappa;
  ResidualPair r;
  r.r1 = e2 * (0.5 * k * w.dt / w.value - 0.5 * u * u / v - mu * ux / v);
  r.r2 = e2 * (k / w.value * u * ux - 0.5 * u * u * u / v - mu * u * ux / v);
  return r;
}

/// Sup-norms of (r1, r2) per time, taken over `xs` or, when empty, over the
/// similarity nodes x = eta sqrt(1+t). Stored in linf[0] and linf[1].
inline NormSeries residual_decay_report(const ProfileSet& ps, std::span<const Real> t_list,
                                        std::span<const Real> xs = {}) {
  if (t_list.empty()) throw ConfigInvalid("t_list", "must be non-empty");
  NormSeries series;
  series.label = "residuals";
  for (Real t : t_list) {
    Metrics m;
    m.time = t;
    auto visit = [&](Real x) {
      const ResidualPair r = eval_residuals(ps, x, t);
      m.linf[0] = std::max(m.linf[0], std::abs(r.r1));
      m.linf[1] = std::max(m.linf[1], std::abs(r.r2));
    };
    if (xs.empty()) {
      const Real s = std::sqrt(1.0 + t);
      for (Real eta : ps.wave.eta_grid) visit(eta * s);
    } else {
      for (Real x : xs) visit(x);
    }
    series.push(t, m);
  }
  return series;
}

}  // namespace lowmach
