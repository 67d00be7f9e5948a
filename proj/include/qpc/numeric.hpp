#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "qpc/errors.hpp"

namespace qpc {

inline std::vector<double> linspace(double a, double b, int n) {
  if (n < 2) throw ArgumentError("linspace needs at least 2 points");
  std::vector<double> out(static_cast<size_t>(n));
  const double h = (b - a) / (n - 1);
  for (int i = 0; i < n; ++i) out[static_cast<size_t>(i)] = a + h * i;
  out.back() = b;
  return out;
}

// Linear interpolation on sorted ascending xs; clamps outside the range.
inline double interp_linear(std::span<const double> xs, std::span<const double> ys, double x) {
  if (xs.size() != ys.size() || xs.size() < 2) throw ArgumentError("interp_linear: bad table");
  if (x <= xs.front()) return ys.front();
  if (x >= xs.back()) return ys.back();
  const auto it = std::upper_bound(xs.begin(), xs.end(), x);
  const size_t i = static_cast<size_t>(it - xs.begin());
  const double t = (x - xs[i - 1]) / (xs[i] - xs[i - 1]);
  return ys[i - 1] + t * (ys[i] - ys[i - 1]);
}

// Cumulative integral of uniformly sampled y (spacing h) using local quadratic
// interpolants; one order better than cumulative trapezoid, which matters for
// the Hartree-map derivative identity.
inline std::vector<double> cumulative_integral(std::span<const double> y, double h) {
  const size_t n = y.size();
  if (n < 3) throw ArgumentError("cumulative_integral needs >= 3 samples");
  std::vector<double> out(n, 0.0);
  // Interval [i, i+1] integrated from the quadratic through (i-1, i, i+1),
  // except the first interval which uses (0, 1, 2).
  out[1] = h / 12.0 * (5.0 * y[0] + 8.0 * y[1] - y[2]);
  for (size_t i = 1; i + 1 < n; ++i) {
    out[i + 1] = out[i] + h / 12.0 * (-y[i - 1] + 8.0 * y[i] + 5.0 * y[i + 1]);
  }
  return out;
}

// Trapezoid rule on a uniform grid.
inline double trapezoid(std::span<const double> y, double h) {
  if (y.size() < 2) return 0.0;
  double s = 0.5 * (y.front() + y.back());
  for (size_t i = 1; i + 1 < y.size(); ++i) s += y[i];
  return s * h;
}

// Solves A x = b in place by Gaussian elimination with partial pivoting.
// Dimensions here are tiny (polynomial fits, LM normal equations).
inline std::vector<double> solve_dense(std::vector<double> a, std::vector<double> b) {
  const size_t n = b.size();
  if (a.size() != n * n) throw ArgumentError("solve_dense: dimension mismatch");
  for (size_t col = 0; col < n; ++col) {
    size_t piv = col;
    for (size_t r = col + 1; r < n; ++r) {
      if (std::fabs(a[r * n + col]) > std::fabs(a[piv * n + col])) piv = r;
    }
    if (std::fabs(a[piv * n + col]) < 1e-300) throw ArgumentError("solve_dense: singular matrix");
    if (piv != col) {
      for (size_t k = 0; k < n; ++k) std::swap(a[col * n + k], a[piv * n + k]);
      std::swap(b[col], b[piv]);
    }
    for (size_t r = col + 1; r < n; ++r) {
      const double f = a[r * n + col] / a[col * n + col];
      if (f == 0.0) continue;
      for (size_t k = col; k < n; ++k) a[r * n + k] -= f * a[col * n + k];
      b[r] -= f * b[col];
    }
  }
  std::vector<double> x(n, 0.0);
  for (size_t i = n; i-- > 0;) {
    double s = b[i];
    for (size_t k = i + 1; k < n; ++k) s -= a[i * n + k] * x[k];
    x[i] = s / a[i * n + i];
  }
  return x;
}

// Least-squares polynomial coefficients (ascending powers) of given degree.
inline std::vector<double> polyfit(std::span<const double> x, std::span<const double> y,
                                   int degree) {
  if (x.size() != y.size() || x.size() < static_cast<size_t>(degree + 1)) {
    throw ArgumentError("polyfit: not enough samples");
  }
  const int m = degree + 1;
  std::vector<double> ata(static_cast<size_t>(m * m), 0.0);
  std::vector<double> atb(static_cast<size_t>(m), 0.0);
  std::vector<double> pw(static_cast<size_t>(m));
  for (size_t s = 0; s < x.size(); ++s) {
    pw[0] = 1.0;
    for (int j = 1; j < m; ++j) pw[static_cast<size_t>(j)] = pw[static_cast<size_t>(j - 1)] * x[s];
    for (int i = 0; i < m; ++i) {
      atb[static_cast<size_t>(i)] += pw[static_cast<size_t>(i)] * y[s];
      for (int j = 0; j < m; ++j) {
        ata[static_cast<size_t>(i * m + j)] += pw[static_cast<size_t>(i)] * pw[static_cast<size_t>(j)];
      }
    }
  }
  return solve_dense(std::move(ata), std::move(atb));
}

namespace detail {
// 8-point Gauss-Legendre nodes/weights on [-1, 1].
inline constexpr double kGl8Nodes[8] = {
    -0.9602898564975363, -0.7966664774136267, -0.5255324099163290, -0.1834346424956498,
    0.1834346424956498,  0.5255324099163290,  0.7966664774136267,  0.9602898564975363};
inline constexpr double kGl8Weights[8] = {
    0.1012285362903763, 0.2223810344533745, 0.3137066458778873, 0.3626837833783620,
    0.3626837833783620, 0.3137066458778873, 0.2223810344533745, 0.1012285362903763};
}  // namespace detail

// Composite 8-point Gauss-Legendre integral of f over [a, b] with n panels.
template <typename F>
double gauss_legendre(F&& f, double a, double b, int panels) {
  const double w = (b - a) / panels;
  double total = 0.0;
  for (int p = 0; p < panels; ++p) {
    const double lo = a + p * w;
    const double mid = lo + 0.5 * w;
    double acc = 0.0;
    for (int k = 0; k < 8; ++k) {
      acc += detail::kGl8Weights[k] * f(mid + 0.5 * w * detail::kGl8Nodes[k]);
    }
    total += acc * 0.5 * w;
  }
  return total;
}

}  // namespace qpc
