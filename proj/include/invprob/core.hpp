#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace invprob {

using Vector = std::vector<double>;
using ConstSpan = std::span<const double>;

//==============================================================================
// Errors
//==============================================================================

/// Thrown when the length of an argument does not match what an operator
/// expects. The message always names both lengths.
class dimension_error : public std::invalid_argument {
 public:
  dimension_error(const std::string& what, std::size_t expected,
                  std::size_t actual)
      : std::invalid_argument(what + ": expected length " +
                              std::to_string(expected) + ", got " +
                              std::to_string(actual)),
        expected_(expected),
        actual_(actual) {}

  std::size_t expected() const noexcept { return expected_; }
  std::size_t actual() const noexcept { return actual_; }

 private:
  std::size_t expected_;
  std::size_t actual_;
};

/// An iterative routine hit its iteration cap or broke down.
class convergence_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline void require_length(const char* what, std::size_t expected,
                           std::size_t actual) {
  if (expected != actual) throw dimension_error(what, expected, actual);
}

//==============================================================================
// Vector helpers
//==============================================================================

inline double dot(ConstSpan a, ConstSpan b) {
  require_length("dot", a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// Neumaier-compensated accumulator. Used for the long spectral expansions
/// where the result must not depend on summation order beyond 1e-12.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

inline double compensated_dot(ConstSpan a, ConstSpan b) {
  require_length("compensated_dot", a.size(), b.size());
  CompensatedSum s;
  for (std::size_t i = 0; i < a.size(); ++i) s.add(a[i] * b[i]);
  return s.value();
}

inline double norm2(ConstSpan a) { return std::sqrt(dot(a, a)); }

inline double norm_inf(ConstSpan a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline double norm1(ConstSpan a) {
  double s = 0.0;
  for (double v : a) s += std::abs(v);
  return s;
}

inline double distance(ConstSpan a, ConstSpan b) {
  require_length("distance", a.size(), b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

/// y += alpha * x
inline void axpy(double alpha, ConstSpan x, std::span<double> y) {
  require_length("axpy", y.size(), x.size());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vector add(ConstSpan a, ConstSpan b) {
  require_length("add", a.size(), b.size());
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] + b[i];
  return r;
}

inline Vector subtract(ConstSpan a, ConstSpan b) {
  require_length("subtract", a.size(), b.size());
  Vector r(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) r[i] = a[i] - b[i];
  return r;
}

inline Vector scaled(double alpha, ConstSpan a) {
  Vector r(a.begin(), a.end());
  for (double& v : r) v *= alpha;
  return r;
}

inline bool all_finite(ConstSpan a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

/// 17 significant digits: enough for an exact double round trip.
inline std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

//==============================================================================
// Random numbers
//==============================================================================

/// SplitMix64: a counter-based 64-bit generator. The n-th output (n = 1, 2,
/// ...) is mix(seed + n * 0x9E3779B97F4A7C15) with
///   mix(z): z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
///           z ^= z >> 27; z *= 0x94D049BB133111EB;
///           z ^= z >> 31
/// Uniform doubles take the top 53 bits. Normals use Box-Muller and return the
/// cosine branch first, then the cached sine branch.
class SplitMix64 {
 public:
  explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

  std::uint64_t next() {
    state_ += 0x9E3779B97F4A7C15ULL;
    std::uint64_t z = state_;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer on [0, n). Uses rejection to avoid modulo bias.
  std::uint64_t below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("SplitMix64::below: n must be > 0");
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = next();
    } while (x >= limit);
    return x % n;
  }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double phi = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(phi);
    has_spare_ = true;
    return r * std::cos(phi);
  }

  Vector normal_vector(std::size_t n, double scale = 1.0) {
    Vector v(n);
    for (double& x : v) x = scale * normal();
    return v;
  }

  Vector uniform_vector(std::size_t n, double lo = -1.0, double hi = 1.0) {
    Vector v(n);
    for (double& x : v) x = uniform(lo, hi);
    return v;
  }

 private:
  std::uint64_t state_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace invprob
