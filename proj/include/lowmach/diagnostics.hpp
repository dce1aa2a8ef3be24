#pragma once

// Norms, integrated perturbations, rate fits and structural checks measured on
// solver states.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lowmach/core.hpp"
#include "lowmach/profiles.hpp"
#include "lowmach/series.hpp"
#include "lowmach/solver.hpp"

namespace lowmach {

struct Window {
  Real lo = -5.0;
  Real hi = 5.0;
};

// ---------------------------------------------------------------------------
// Norms

/// L2 (trapezoid), Linf and forward-difference H1 seminorm of each component.
inline Metrics field_norms(const std::array<GridFn, 3>& diffs, Real dx, Real time = 0.0) {
  Metrics m;
  m.time = time;
  for (std::size_t c = 0; c < 3; ++c) {
    const GridFn& d = diffs[c];
    const Index n = d.size();
    Real l2 = 0.0, linf = 0.0, h1 = 0.0;
    for (Index i = 0; i < n; ++i) {
      const Real w = (i == 0 || i + 1 == n) ? 0.5 : 1.0;
      l2 += w * d[i] * d[i];
      linf = std::max(linf, std::abs(d[i]));
      if (i + 1 < n) {
        const Real g = (d[i + 1] - d[i]) / dx;
        h1 += g * g;
      }
    }
    m.l2[c] = std::sqrt(l2 * dx);
    m.linf[c] = linf;
    m.h1_semi[c] = std::sqrt(h1 * dx);
  }
  return m;
}

enum class ProfileKind { Bar, Tilde };

/// Norms of (v - v_ref, eps u - eps u_ref, T - T_ref) at the state's time.
inline Metrics diff_norms(const LagrangianState& s, const ProfileSet& ps, ProfileKind which) {
  const Index n = s.v.size();
  std::array<GridFn, 3> d{GridFn(n), GridFn(n), GridFn(n)};
  for (Index i = 0; i < n; ++i) {
    const Real x = s.grid.nodes[i];
    const Triple ref = which == ProfileKind::Bar ? eval_bar(ps, x, s.time) : eval_tilde(ps, x, s.time);
    d[0][i] = s.v[i] - ref.first;
    d[1][i] = ps.epsilon * (s.u[i] - ref.u);
    d[2][i] = s.T[i] - ref.T;
  }
  return field_norms(d, s.grid.spacing, s.time);
}

/// Trapezoid L2 norm of f over the nodes inside `w`.
inline Real window_l2(const GridFn& f, const Grid& grid, Window w) {
  Real acc = 0.0;
  Real prev_x = 0.0, prev_f2 = 0.0;
  bool have_prev = false;
  for (Index i = 0; i < grid.cells; ++i) {
    const Real x = grid.nodes[i];
    if (x < w.lo || x > w.hi) {
      have_prev = false;
      continue;
    }
    const Real f2 = f[i] * f[i];
    if (have_prev) acc += 0.5 * (f2 + prev_f2) * (x - prev_x);
    prev_x = x;
    prev_f2 = f2;
    have_prev = true;
  }
  return std::sqrt(acc);
}

/// Trapezoid rule over (possibly non-uniform) sample times.
inline Real time_integrate(std::span<const Real> t, std::span<const Real> f) {
  Real acc = 0.0;
  for (Index k = 1; k < t.size(); ++k) acc += 0.5 * (f[k] + f[k - 1]) * (t[k] - t[k - 1]);
  return acc;
}

// ---------------------------------------------------------------------------
// Integrated perturbations in the scaled variable y = x / eps

struct Antiderivatives {
  GridFn Phi, Psi, Wtilde, W;
  GridFn y;
};

/// phi = v - v~, psi = eps(u - u~), omega = T + |eps u|^2/2 - T~ - |eps u~|^2/2,
/// integrated from the left boundary in y = x / eps; W = W~ - eps u~ Psi.
/// Takes a state in physical coordinates.
inline Antiderivatives antiderivatives(const LagrangianState& s, const ProfileSet& ps, Real eps) {
  const Index n = s.v.size();
  GridFn phi(n), psi(n), omega(n), ut(n);
  for (Index i = 0; i < n; ++i) {
    const Triple ref = eval_tilde(ps, s.grid.nodes[i], s.time);
    ut[i] = ref.u;
    phi[i] = s.v[i] - ref.first;
    psi[i] = eps * (s.u[i] - ref.u);
    omega[i] = (s.T[i] + 0.5 * eps * eps * s.u[i] * s.u[i]) - (ref.T + 0.5 * eps * eps * ref.u * ref.u);
  }
  const Real dy = s.grid.spacing / eps;
  Antiderivatives a;
  a.Phi.assign(n, 0.0);
  a.Psi.assign(n, 0.0);
  a.Wtilde.assign(n, 0.0);
  a.W.assign(n, 0.0);
  a.y.resize(n);
  for (Index i = 0; i < n; ++i) a.y[i] = s.grid.nodes[i] / eps;
  for (Index i = 1; i < n; ++i) {
    a.Phi[i] = a.Phi[i - 1] + 0.5 * dy * (phi[i] + phi[i - 1]);
    a.Psi[i] = a.Psi[i - 1] + 0.5 * dy * (psi[i] + psi[i - 1]);
    a.Wtilde[i] = a.Wtilde[i - 1] + 0.5 * dy * (omega[i] + omega[i - 1]);
  }
  for (Index i = 0; i < n; ++i) a.W[i] = a.Wtilde[i] - eps * ut[i] * a.Psi[i];
  return a;
}

/// max over nodes of |(Phi, Psi, W)|^2, the squared sup-norm of the triple.
inline Real antiderivative_sup_squared(const Antiderivatives& a) {
  Real m = 0.0;
  for (Index i = 0; i < a.Phi.size(); ++i)
    m = std::max(m, a.Phi[i] * a.Phi[i] + a.Psi[i] * a.Psi[i] + a.W[i] * a.W[i]);
  return m;
}

// ---------------------------------------------------------------------------
// Rate fits

/// Least-squares line y = a + b x; exponent holds the slope b, log_prefactor the intercept a.
inline RateFit fit_line(std::span<const Real> xs, std::span<const Real> ys) {
  if (xs.size() != ys.size()) throw ConfigInvalid("fit_rate", "abscissa and values differ in length");
  if (xs.size() < 2) throw ConfigInvalid("fit_rate", "need at least two points");
  const Index n = xs.size();
  Real mx = 0.0, my = 0.0;
  for (Index i = 0; i < n; ++i) {
    mx += xs[i];
    my += ys[i];
  }
  mx /= static_cast<Real>(n);
  my /= static_cast<Real>(n);
  Real sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (Index i = 0; i < n; ++i) {
    sxx += (xs[i] - mx) * (xs[i] - mx);
    sxy += (xs[i] - mx) * (ys[i] - my);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0)) throw ConfigInvalid("fit_rate", "abscissa values must not all coincide");
  RateFit f;
  f.exponent = sxy / sxx;
  f.log_prefactor = my - f.exponent * mx;
  Real ss_res = 0.0;
  for (Index i = 0; i < n; ++i) {
    const Real r = ys[i] - (f.log_prefactor + f.exponent * xs[i]);
    ss_res += r * r;
  }
  f.r_squared = syy > 0.0 ? std::clamp(1.0 - ss_res / syy, 0.0, 1.0) : 1.0;
  return f;
}

/// Least-squares line through (log x, log y).
inline RateFit fit_power_law(std::span<const Real> xs, std::span<const Real> ys) {
  if (xs.size() != ys.size()) throw ConfigInvalid("fit_rate", "abscissa and values differ in length");
  std::vector<Real> lx(xs.size()), ly(ys.size());
  for (Index i = 0; i < xs.size(); ++i) {
    if (!(xs[i] > 0.0)) throw ConfigInvalid("fit_rate", "abscissa must be positive");
    if (!(ys[i] > 0.0)) throw ConfigInvalid("fit_rate", "values must be positive");
    lx[i] = std::log(xs[i]);
    ly[i] = std::log(ys[i]);
  }
  return fit_line(lx, ly);
}

enum class RateAxis { OnePlusT, Epsilon };

using ComponentSelector = std::function<Real(const Metrics&)>;

inline ComponentSelector select_linf(std::size_t c) {
  return [c](const Metrics& m) { return m.linf[c]; };
}
inline ComponentSelector select_l2(std::size_t c) {
  return [c](const Metrics& m) { return m.l2[c]; };
}

/// Fit value ~ x^exponent. For the Epsilon axis the record key `t` holds eps.
inline RateFit fit_rate(const NormSeries& series, const ComponentSelector& component, RateAxis axis) {
  if (series.records.size() < 3) throw ConfigInvalid("fit_rate", "need at least three records");
  std::vector<Real> xs, ys;
  for (const NormRecord& r : series.records) {
    xs.push_back(axis == RateAxis::OnePlusT ? 1.0 + r.t : r.t);
    ys.push_back(component(r.metrics));
  }
  return fit_power_law(xs, ys);
}

// ---------------------------------------------------------------------------
// Thermal creep

struct CreepReport {
  Index region_points = 0;
  Index pass_points = 0;
  Real c1_used = 10.0;
  Real eta0 = 1.0;

  Real pass_fraction() const {
    return region_points == 0 ? 1.0 : static_cast<Real>(pass_points) / static_cast<Real>(region_points);
  }
};

namespace detail {
inline Real central_diff(const GridFn& f, Index i, Real dx) { return (f[i + 1] - f[i - 1]) / (2.0 * dx); }
}  // namespace detail

/// Test (2/(3 c1)) T_x <= u <= 2 c1 T_x on |x| <= eta0 sqrt(1+t). For a
/// decreasing temperature wave the signs of u and T_x are both flipped first.
inline CreepReport creep_check(const LagrangianState& s, const ProfileSet& ps, Real eta0, Real c1) {
  CreepReport rep;
  rep.c1_used = c1;
  rep.eta0 = eta0;
  const Real sign = ps.temperature_right() >= ps.temperature_left() ? 1.0 : -1.0;
  const Real reach = eta0 * std::sqrt(1.0 + s.time);
  const Real dx = s.grid.spacing;
  for (Index i = 1; i + 1 < s.v.size(); ++i) {
    if (std::abs(s.grid.nodes[i]) > reach) continue;
    ++rep.region_points;
    const Real tx = sign * detail::central_diff(s.T, i, dx);
    const Real u = sign * s.u[i];
    bool ok;
    if (tx == 0.0)
      ok = std::abs(u) <= 1e-12;
    else
      ok = (2.0 / (3.0 * c1)) * tx <= u && u <= 2.0 * c1 * tx;
    if (ok) ++rep.pass_points;
  }
  return rep;
}

/// c1 = 2 max over the region of max(u/T_x, (2/3) T_x/u) on the exact bar profile.
inline Real auto_creep_constant(const ProfileSet& ps, const Grid& grid, Real t, Real eta0) {
  const Real reach = eta0 * std::sqrt(1.0 + t);
  Real worst = 0.0;
  for (Real x : grid.nodes) {
    if (std::abs(x) > reach) continue;
    const WaveSample w = wave_eval(ps.wave, x, t);
    const Real tx = ps.frame == Frame::Lagrangian ? w.dx : -w.dx / (w.value * w.value);
    const Real u = bar_velocity(ps, w).u;
    if (tx == 0.0 || u == 0.0) continue;
    worst = std::max({worst, u / tx, (2.0 / 3.0) * tx / u});
  }
  return worst > 0.0 ? 2.0 * worst : 10.0;
}

// ---------------------------------------------------------------------------
// Fluctuation diagnostics

/// Discrete d/dx(2u - kappa e^{theta - eps p} theta_x) at interior nodes, in the
/// same compact form the fluctuation stepper uses. Boundary entries are zero.
inline GridFn incompressibility_field(const FluctuationState& s, Real kappa, Real eps) {
  const Index n = s.p.size();
  const Real dx = s.grid.spacing;
  GridFn c(n), d(n, 0.0);
  for (Index i = 0; i < n; ++i) c[i] = std::exp(s.theta[i] - eps * s.p[i]);
  for (Index i = 1; i + 1 < n; ++i) {
    const Real cl = 0.5 * (c[i - 1] + c[i]);
    const Real cr = 0.5 * (c[i] + c[i + 1]);
    d[i] = (s.u[i + 1] - s.u[i - 1]) / dx -
           kappa * (cr * (s.theta[i + 1] - s.theta[i]) - cl * (s.theta[i] - s.theta[i - 1])) / (dx * dx);
  }
  return d;
}

inline Real incompressibility_defect(const FluctuationState& s, Real kappa, Real eps, Window window = {}) {
  if (window.lo < s.grid.nodes.front() || window.hi > s.grid.nodes.back() || !(window.lo < window.hi))
    throw ConfigInvalid("window", "must lie within the grid");
  return window_l2(incompressibility_field(s, kappa, eps), s.grid, window);
}

struct PhysicalFields {
  GridFn rho, u, T;
};

/// rho = e^{eps p - theta}, T = e^theta; the pressure rho T equals e^{eps p}.
inline PhysicalFields reconstruct_physical(const FluctuationState& s, Real eps) {
  const Index n = s.p.size();
  PhysicalFields f{GridFn(n), s.u, GridFn(n)};
  for (Index i = 0; i < n; ++i) {
    f.rho[i] = std::exp(eps * s.p[i] - s.theta[i]);
    f.T[i] = std::exp(s.theta[i]);
  }
  return f;
}

// ---------------------------------------------------------------------------
// CSV output

inline std::string fmt17(Real x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

template <class Stream>
void write_norm_series_csv(Stream& os, const NormSeries& s) {
  os << "t,l2_v,l2_u,l2_T,linf_v,linf_u,linf_T,h1_v,h1_u,h1_T\n";
  for (const NormRecord& r : s.records) {
    os << fmt17(r.t);
    for (Real x : r.metrics.l2) os << ',' << fmt17(x);
    for (Real x : r.metrics.linf) os << ',' << fmt17(x);
    for (Real x : r.metrics.h1_semi) os << ',' << fmt17(x);
    os << '\n';
  }
}

template <class Stream>
void write_rate_fits_csv(Stream& os, const std::vector<std::pair<std::string, RateFit>>& fits) {
  os << "label,exponent,log_prefactor,r_squared\n";
  for (const auto& [label, f] : fits)
    os << label << ',' << fmt17(f.exponent) << ',' << fmt17(f.log_prefactor) << ',' << fmt17(f.r_squared) << '\n';
}

}  // namespace lowmach
