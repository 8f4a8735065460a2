#pragma once

#include <algorithm>
#include <functional>
#include <memory>
#include <string>
#include <utility>

#include "core.hpp"

namespace invprob::prox {

/// prox_{tau J}(v) = argmin_z 1/2 ||z - v||^2 + tau J(z), tagged with a
/// short description of J.
struct ProxOp {
  std::function<Vector(ConstSpan, double)> evaluate;
  std::string descriptor;

  Vector operator()(ConstSpan v, double tau) const { return evaluate(v, tau); }
};

//==============================================================================
// Closed-form maps
//==============================================================================

/// Soft shrinkage. |v_i| == tau maps to 0.
inline Vector shrink(ConstSpan v, double tau) {
  if (tau < 0.0) throw std::invalid_argument("shrink: tau must be >= 0");
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double x = v[i];
    if (x > tau)
      out[i] = x - tau;
    else if (x < -tau)
      out[i] = x + tau;
    else
      out[i] = 0.0;
  }
  return out;
}

/// Prox of J = 1/2 ||. - f||^2: (v + tau f) / (1 + tau).
inline Vector prox_squared_l2(ConstSpan v, double tau, ConstSpan center) {
  if (tau < 0.0) throw std::invalid_argument("prox_squared_l2: tau must be >= 0");
  require_length("prox_squared_l2 center", v.size(), center.size());
  Vector out(v.size());
  for (std::size_t i = 0; i < v.size(); ++i)
    out[i] = (v[i] + tau * center[i]) / (1.0 + tau);
  return out;
}

/// Prox of sigma H* for H = 1/2 ||. - f||^2: (z - sigma f) / (sigma + 1).
inline Vector prox_conj_datafit(ConstSpan z, double sigma, ConstSpan f) {
  if (sigma < 0.0) throw std::invalid_argument("prox_conj_datafit: sigma must be >= 0");
  require_length("prox_conj_datafit data", z.size(), f.size());
  Vector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = (z[i] - sigma * f[i]) / (sigma + 1.0);
  return out;
}

/// Componentwise clamp onto the infinity-norm ball of radius alpha.
inline Vector project_inf_ball(ConstSpan z, double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("project_inf_ball: alpha must be >= 0");
  Vector out(z.size());
  for (std::size_t i = 0; i < z.size(); ++i) out[i] = std::clamp(z[i], -alpha, alpha);
  return out;
}

//==============================================================================
// Orthogonal transforms
//==============================================================================

struct OrthogonalTransform {
  std::size_t size = 0;
  std::function<Vector(ConstSpan)> forward;
  std::function<Vector(ConstSpan)> inverse;
  std::string name;
};

inline bool is_power_of_two(std::size_t n) { return n > 0 && (n & (n - 1)) == 0; }

namespace detail {

inline void haar_forward_inplace(double* x, std::size_t n, std::size_t stride,
                                 Vector& scratch) {
  constexpr double r = 0.70710678118654752440;  // 1/sqrt(2)
  scratch.resize(n);
  for (std::size_t len = n; len > 1; len /= 2) {
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < half; ++i) {
      const double a = x[(2 * i) * stride], b = x[(2 * i + 1) * stride];
      scratch[i] = (a + b) * r;
      scratch[half + i] = (a - b) * r;
    }
    for (std::size_t i = 0; i < len; ++i) x[i * stride] = scratch[i];
  }
}

inline void haar_inverse_inplace(double* x, std::size_t n, std::size_t stride,
                                 Vector& scratch) {
  constexpr double r = 0.70710678118654752440;
  scratch.resize(n);
  for (std::size_t len = 2; len <= n; len *= 2) {
    const std::size_t half = len / 2;
    for (std::size_t i = 0; i < half; ++i) {
      const double a = x[i * stride], d = x[(half + i) * stride];
      scratch[2 * i] = (a + d) * r;
      scratch[2 * i + 1] = (a - d) * r;
    }
    for (std::size_t i = 0; i < len; ++i) x[i * stride] = scratch[i];
  }
}

}  // namespace detail

/// Full multilevel orthonormal Haar transform. Coefficient layout after the
/// last level: [scaling, coarsest detail, ..., finest details].
inline OrthogonalTransform haar_transform(std::size_t size) {
  if (!is_power_of_two(size))
    throw std::invalid_argument("haar_transform: size " + std::to_string(size) +
                                " is not a power of two");
  auto fwd = [size](ConstSpan v) {
    require_length("haar forward", size, v.size());
    Vector x(v.begin(), v.end()), s;
    detail::haar_forward_inplace(x.data(), size, 1, s);
    return x;
  };
  auto inv = [size](ConstSpan c) {
    require_length("haar inverse", size, c.size());
    Vector x(c.begin(), c.end()), s;
    detail::haar_inverse_inplace(x.data(), size, 1, s);
    return x;
  };
  return {size, fwd, inv, "haar(" + std::to_string(size) + ")"};
}

/// Tensor-product Haar transform on a rows x cols image (rows, then columns).
inline OrthogonalTransform haar_transform_2d(std::size_t rows, std::size_t cols) {
  if (!is_power_of_two(rows) || !is_power_of_two(cols))
    throw std::invalid_argument("haar_transform_2d: " + std::to_string(rows) + "x" +
                                std::to_string(cols) + " is not a power of two per axis");
  const std::size_t n = rows * cols;
  auto fwd = [=](ConstSpan v) {
    require_length("haar2d forward", n, v.size());
    Vector x(v.begin(), v.end()), s;
    for (std::size_t i = 0; i < rows; ++i)
      detail::haar_forward_inplace(x.data() + i * cols, cols, 1, s);
    for (std::size_t j = 0; j < cols; ++j)
      detail::haar_forward_inplace(x.data() + j, rows, cols, s);
    return x;
  };
  auto inv = [=](ConstSpan c) {
    require_length("haar2d inverse", n, c.size());
    Vector x(c.begin(), c.end()), s;
    for (std::size_t j = 0; j < cols; ++j)
      detail::haar_inverse_inplace(x.data() + j, rows, cols, s);
    for (std::size_t i = 0; i < rows; ++i)
      detail::haar_inverse_inplace(x.data() + i * cols, cols, 1, s);
    return x;
  };
  return {n, fwd, inv,
          "haar2d(" + std::to_string(rows) + "x" + std::to_string(cols) + ")"};
}

inline OrthogonalTransform identity_transform(std::size_t size) {
  auto id = [size](ConstSpan v) {
    require_length("identity transform", size, v.size());
    return Vector(v.begin(), v.end());
  };
  return {size, id, id, "identity(" + std::to_string(size) + ")"};
}

/// Prox of tau ||W .||_1 for orthogonal W: W^T shrink(W v, tau).
inline Vector prox_wavelet_l1(ConstSpan v, double tau, const OrthogonalTransform& w) {
  if (tau < 0.0) throw std::invalid_argument("prox_wavelet_l1: tau must be >= 0");
  require_length("prox_wavelet_l1 input", w.size, v.size());
  return w.inverse(shrink(w.forward(v), tau));
}

//==============================================================================
// ProxOp factories
//==============================================================================

/// J = 0.
inline ProxOp zero_prox() {
  return {[](ConstSpan v, double) { return Vector(v.begin(), v.end()); }, "0"};
}

/// J = weight ||.||_1.
inline ProxOp l1_prox(double weight = 1.0) {
  if (weight < 0.0) throw std::invalid_argument("l1_prox: negative weight");
  return {[weight](ConstSpan v, double tau) { return shrink(v, tau * weight); },
          format_double(weight) + "*||.||_1"};
}

/// J = weight/2 ||. - center||^2.
inline ProxOp squared_l2_prox(Vector center, double weight = 1.0) {
  if (weight < 0.0) throw std::invalid_argument("squared_l2_prox: negative weight");
  return {[c = std::move(center), weight](ConstSpan v, double tau) {
            return prox_squared_l2(v, tau * weight, c);
          },
          format_double(weight) + "/2*||.-f||^2"};
}

/// J = weight/2 ||.||^2.
inline ProxOp squared_norm_prox(double weight = 1.0) {
  if (weight < 0.0) throw std::invalid_argument("squared_norm_prox: negative weight");
  return {[weight](ConstSpan v, double tau) { return scaled(1.0 / (1.0 + tau * weight), v); },
          format_double(weight) + "/2*||.||^2"};
}

/// sigma H* for H = 1/2 ||. - f||^2.
inline ProxOp datafit_conjugate_prox(Vector f) {
  return {[f = std::move(f)](ConstSpan z, double sigma) {
            return prox_conj_datafit(z, sigma, f);
          },
          "(1/2||.-f||^2)^*"};
}

/// Indicator of the infinity ball of radius alpha; the step is irrelevant.
inline ProxOp inf_ball_projection(double alpha) {
  if (alpha < 0.0) throw std::invalid_argument("inf_ball_projection: negative radius");
  return {[alpha](ConstSpan z, double) { return project_inf_ball(z, alpha); },
          "chi_{||.||_inf<=" + format_double(alpha) + "}"};
}

/// J = weight ||W .||_1.
inline ProxOp wavelet_l1_prox(OrthogonalTransform w, double weight = 1.0) {
  if (weight < 0.0) throw std::invalid_argument("wavelet_l1_prox: negative weight");
  const std::string name = w.name;
  return {[w = std::move(w), weight](ConstSpan v, double tau) {
            return prox_wavelet_l1(v, tau * weight, w);
          },
          format_double(weight) + "*||" + name + " .||_1"};
}

/// Prox of a separable sum: blocks are consecutive slices of the argument.
inline ProxOp block_prox(std::vector<std::pair<std::size_t, ProxOp>> blocks) {
  std::string desc;
  std::size_t total = 0;
  for (const auto& [n, p] : blocks) {
    desc += (desc.empty() ? "" : " + ") + p.descriptor;
    total += n;
  }
  auto shared = std::make_shared<const std::vector<std::pair<std::size_t, ProxOp>>>(
      std::move(blocks));
  return {[shared, total](ConstSpan v, double tau) {
            require_length("block_prox input", total, v.size());
            Vector out;
            out.reserve(total);
            std::size_t off = 0;
            for (const auto& [n, p] : *shared) {
              const Vector part = p.evaluate(v.subspan(off, n), tau);
              require_length("block_prox block output", n, part.size());
              out.insert(out.end(), part.begin(), part.end());
              off += n;
            }
            return out;
          },
          desc};
}

}  // namespace invprob::prox
