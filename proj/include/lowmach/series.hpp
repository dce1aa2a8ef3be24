#pragma once

#include <array>
#include <string>
#include <vector>

#include "lowmach/core.hpp"

namespace lowmach {

/// Per-component norms of a difference field; components are (v, u, T) for
/// Lagrangian comparisons.
struct Metrics {
  Real time = 0.0;
  std::array<Real, 3> l2{};
  std::array<Real, 3> linf{};
  std::array<Real, 3> h1_semi{};

  Real l2_squared_total() const { return l2[0] * l2[0] + l2[1] * l2[1] + l2[2] * l2[2]; }
};

struct NormRecord {
  Real t = 0.0;
  Metrics metrics;
};

struct NormSeries {
  std::string label;
  std::vector<NormRecord> records;

  void push(Real t, const Metrics& m) {
    if (!records.empty() && !(t > records.back().t))
      throw ConfigInvalid("NormSeries.t", "times must be strictly increasing");
    records.push_back({t, m});
  }
};

struct RateFit {
  Real exponent = 0.0;
  Real log_prefactor = 0.0;
  Real r_squared = 0.0;
};

}  // namespace lowmach
