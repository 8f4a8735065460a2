#pragma once

// Reference computations used only by the tests. They avoid the library's own
// code paths so a shared bug cannot hide on both sides of a comparison.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

namespace oracle {

using Vec = std::vector<double>;
using Mat = std::vector<Vec>;  // row-major, rows of equal length

inline Vec matvec(const Mat& a, const Vec& x) {
  Vec y(a.size(), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j) y[i] += a[i][j] * x[j];
  return y;
}

inline Mat transpose(const Mat& a) {
  Mat t(a.empty() ? 0 : a[0].size(), Vec(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < a[i].size(); ++j) t[j][i] = a[i][j];
  return t;
}

inline Mat matmul(const Mat& a, const Mat& b) {
  Mat c(a.size(), Vec(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
  return c;
}

/// Columns A e_j of a black-box linear map.
inline Mat assemble(std::size_t rows, std::size_t cols, const std::function<Vec(const Vec&)>& f) {
  Mat a(rows, Vec(cols));
  for (std::size_t j = 0; j < cols; ++j) {
    Vec e(cols, 0.0);
    e[j] = 1.0;
    const Vec c = f(e);
    for (std::size_t i = 0; i < rows; ++i) a[i][j] = c[i];
  }
  return a;
}

/// Eigenvalues of a symmetric 3x3 matrix from its characteristic polynomial,
/// located by sign changes on a fine grid and refined by bisection. Sorted
/// descending.
inline Vec eigenvalues_3x3(const Mat& m) {
  const double c2 = -(m[0][0] + m[1][1] + m[2][2]);
  const double c1 = m[0][0] * m[1][1] + m[0][0] * m[2][2] + m[1][1] * m[2][2] -
                    m[0][1] * m[1][0] - m[0][2] * m[2][0] - m[1][2] * m[2][1];
  const double c0 = -(m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) -
                      m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0]) +
                      m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]));
  auto p = [&](double x) { return ((x + c2) * x + c1) * x + c0; };
  double bound = 1.0;
  for (const auto& r : m)
    for (double v : r) bound += std::abs(v);
  Vec roots;
  const int steps = 200000;
  double prev_x = -bound, prev = p(prev_x);
  for (int s = 1; s <= steps && roots.size() < 3; ++s) {
    const double x = -bound + 2.0 * bound * s / steps;
    const double v = p(x);
    if (prev == 0.0) {
      roots.push_back(prev_x);
    } else if ((prev < 0) != (v < 0)) {
      double lo = prev_x, hi = x;
      for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if ((p(lo) < 0) == (p(mid) < 0)) lo = mid; else hi = mid;
      }
      roots.push_back(0.5 * (lo + hi));
    }
    prev_x = x;
    prev = v;
  }
  std::sort(roots.rbegin(), roots.rend());
  return roots;
}

/// Closed-form least squares slope/intercept for y ~ w x + b.
inline std::pair<double, double> linear_fit(const Vec& x, const Vec& y) {
  const double n = static_cast<double>(x.size());
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += x[i] * x[i];
    sxy += x[i] * y[i];
  }
  const double w = (n * sxy - sx * sy) / (n * sxx - sx * sx);
  return {w, (sy - w * sx) / n};
}

}  // namespace oracle
