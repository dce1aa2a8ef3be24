#pragma once

#include <cmath>
#include <cstddef>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <vector>

namespace lowmach {

using Real = double;
using Index = std::size_t;

/// Nodal samples of a scalar field on a Grid.
using GridFn = std::vector<Real>;

enum class ErrorKind {
  ConfigInvalid,
  SolveFailed,
  SimulationDiverged,
  CFLViolation,
  NonPositiveState,
};

inline const char* to_string(ErrorKind k) {
  switch (k) {
    case ErrorKind::ConfigInvalid: return "ConfigInvalid";
    case ErrorKind::SolveFailed: return "SolveFailed";
    case ErrorKind::SimulationDiverged: return "SimulationDiverged";
    case ErrorKind::CFLViolation: return "CFLViolation";
    case ErrorKind::NonPositiveState: return "NonPositiveState";
  }
  return "Unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

struct ConfigInvalid : Error {
  /// `path` names the offending key or argument, e.g. "physical.kappa".
  explicit ConfigInvalid(const std::string& path_, const std::string& why = "")
      : Error(ErrorKind::ConfigInvalid, why.empty() ? path_ : path_ + " (" + why + ")"), path(path_) {}
  std::string path;
};
struct SolveFailed : Error {
  explicit SolveFailed(const std::string& w) : Error(ErrorKind::SolveFailed, w) {}
};
struct SimulationDiverged : Error {
  SimulationDiverged(const std::string& w, Real t) : Error(ErrorKind::SimulationDiverged, w), time(t) {}
  Real time;
};
struct CFLViolation : Error {
  CFLViolation(Real dt_, Real bound_)
      : Error(ErrorKind::CFLViolation, describe(dt_, bound_)),
        dt(dt_), bound(bound_) {}
  Real dt;
  Real bound;

 private:
  static std::string describe(Real dt, Real bound) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "dt=%.6g exceeds stability bound %.6g", dt, bound);
    return buf;
  }
};
struct NonPositiveState : Error {
  explicit NonPositiveState(const std::string& w) : Error(ErrorKind::NonPositiveState, w) {}
};

inline bool finite(Real x) { return std::isfinite(x); }

}  // namespace lowmach
