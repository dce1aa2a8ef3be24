#pragma once

// Block-tridiagonal solves by forward elimination / back substitution.
//
// Row i reads  lower[i] * x[i-1] + diag[i] * x[i] + upper[i] * x[i+1] = rhs[i],
// with lower[0] and upper[n-1] ignored. Diagonal blocks are factored with
// partial pivoting; a pivot smaller than kPivotTol raises SolveFailed.

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lowmach/core.hpp"

namespace lowmach {

inline constexpr Real kPivotTol = 1e-14;

template <std::size_t N>
using Vec = std::array<Real, N>;

template <std::size_t N>
using Mat = std::array<std::array<Real, N>, N>;

template <std::size_t N>
constexpr Mat<N> identity() {
  Mat<N> m{};
  for (std::size_t i = 0; i < N; ++i) m[i][i] = 1.0;
  return m;
}

template <std::size_t N>
Vec<N> mul(const Mat<N>& a, const Vec<N>& x) {
  Vec<N> y{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t j = 0; j < N; ++j) y[i] += a[i][j] * x[j];
  return y;
}

template <std::size_t N>
Mat<N> mul(const Mat<N>& a, const Mat<N>& b) {
  Mat<N> c{};
  for (std::size_t i = 0; i < N; ++i)
    for (std::size_t k = 0; k < N; ++k) {
      const Real aik = a[i][k];
      if (aik == 0.0) continue;
      for (std::size_t j = 0; j < N; ++j) c[i][j] += aik * b[k][j];
    }
  return c;
}

/// LU factorization of a small dense block with row pivoting.
template <std::size_t N>
class BlockLU {
 public:
  explicit BlockLU(const Mat<N>& a) : lu_(a) {
    for (std::size_t i = 0; i < N; ++i) perm_[i] = i;
    for (std::size_t k = 0; k < N; ++k) {
      std::size_t p = k;
      for (std::size_t i = k + 1; i < N; ++i)
        if (std::abs(lu_[i][k]) > std::abs(lu_[p][k])) p = i;
      if (!(std::abs(lu_[p][k]) >= kPivotTol))
        throw SolveFailed("block pivot is numerically singular");
      if (p != k) {
        std::swap(lu_[p], lu_[k]);
        std::swap(perm_[p], perm_[k]);
      }
      for (std::size_t i = k + 1; i < N; ++i) {
        lu_[i][k] /= lu_[k][k];
        for (std::size_t j = k + 1; j < N; ++j) lu_[i][j] -= lu_[i][k] * lu_[k][j];
      }
    }
  }

  Vec<N> solve(const Vec<N>& b) const {
    Vec<N> y{};
    for (std::size_t i = 0; i < N; ++i) {
      Real s = b[perm_[i]];
      for (std::size_t j = 0; j < i; ++j) s -= lu_[i][j] * y[j];
      y[i] = s;
    }
    for (std::size_t ii = N; ii-- > 0;) {
      Real s = y[ii];
      for (std::size_t j = ii + 1; j < N; ++j) s -= lu_[ii][j] * y[j];
      y[ii] = s / lu_[ii][ii];
    }
    return y;
  }

  Mat<N> solve(const Mat<N>& b) const {
    Mat<N> x{};
    for (std::size_t j = 0; j < N; ++j) {
      Vec<N> col{};
      for (std::size_t i = 0; i < N; ++i) col[i] = b[i][j];
      const Vec<N> s = solve(col);
      for (std::size_t i = 0; i < N; ++i) x[i][j] = s[i];
    }
    return x;
  }

 private:
  Mat<N> lu_;
  std::array<std::size_t, N> perm_{};
};

template <std::size_t N>
struct BlockTridiagonal {
  std::vector<Mat<N>> lower, diag, upper;
  std::vector<Vec<N>> rhs;

  explicit BlockTridiagonal(Index n) : lower(n), diag(n), upper(n), rhs(n) {}
  Index size() const { return diag.size(); }

  /// Replace row i by the identity equation x[i] = value.
  void pin(Index i, const Vec<N>& value) {
    lower[i] = Mat<N>{};
    upper[i] = Mat<N>{};
    diag[i] = identity<N>();
    rhs[i] = value;
  }

  std::vector<Vec<N>> solve() const {
    const Index n = size();
    std::vector<Mat<N>> c(n);
    std::vector<Vec<N>> d(n);
    for (Index i = 0; i < n; ++i) {
      Mat<N> m = diag[i];
      Vec<N> r = rhs[i];
      if (i > 0) {
        const Mat<N> ac = mul(lower[i], c[i - 1]);
        const Vec<N> ad = mul(lower[i], d[i - 1]);
        for (std::size_t a = 0; a < N; ++a) {
          r[a] -= ad[a];
          for (std::size_t b = 0; b < N; ++b) m[a][b] -= ac[a][b];
        }
      }
      const BlockLU<N> lu(m);
      if (i + 1 < n) c[i] = lu.solve(upper[i]);
      d[i] = lu.solve(r);
    }
    std::vector<Vec<N>> x(n);
    x[n - 1] = d[n - 1];
    for (Index i = n - 1; i-- > 0;) {
      const Vec<N> cx = mul(c[i], x[i + 1]);
      for (std::size_t a = 0; a < N; ++a) x[i][a] = d[i][a] - cx[a];
    }
    return x;
  }
};

/// Scalar Thomas algorithm. `lower[0]` and `upper[n-1]` are ignored.
inline GridFn solve_tridiagonal(std::span<const Real> lower, std::span<const Real> diag,
                                std::span<const Real> upper, std::span<const Real> rhs) {
  const Index n = diag.size();
  GridFn c(n), d(n), x(n);
  for (Index i = 0; i < n; ++i) {
    Real m = diag[i];
    Real r = rhs[i];
    if (i > 0) {
      m -= lower[i] * c[i - 1];
      r -= lower[i] * d[i - 1];
    }
    if (!(std::abs(m) >= kPivotTol)) throw SolveFailed("tridiagonal pivot below tolerance at row " + std::to_string(i));
    c[i] = (i + 1 < n) ? upper[i] / m : 0.0;
    d[i] = r / m;
  }
  x[n - 1] = d[n - 1];
  for (Index i = n - 1; i-- > 0;) x[i] = d[i] - c[i] * x[i + 1];
  return x;
}

}  // namespace lowmach
