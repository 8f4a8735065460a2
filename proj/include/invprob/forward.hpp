#pragma once

#include <cmath>
#include <string>

#include "linop.hpp"

/// Discrete forward operators: 1-D integration and differentiation, 2-D
/// convolution, a ray-driven Radon transform and the forward-difference image
/// gradient. Every operator is also exposed as a LinearMap with its exact
/// adjoint.
namespace invprob::forward {

//==============================================================================
// 1-D integration / differentiation
//==============================================================================

/// Cumulative sum scaled by 1/(N-1): f_i = (1/(N-1)) sum_{j<=i} u_j.
inline LinearMap integration_operator(std::size_t n) {
  if (n < 2) throw std::invalid_argument("integration_operator: N must be >= 2");
  const double w = 1.0 / static_cast<double>(n - 1);
  auto fwd = [n, w](ConstSpan x) {
    Vector y(n);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      s += x[i];
      y[i] = w * s;
    }
    return y;
  };
  auto adj = [n, w](ConstSpan y) {
    Vector x(n);
    double s = 0.0;
    for (std::size_t i = n; i-- > 0;) {
      s += y[i];
      x[i] = w * s;
    }
    return x;
  };
  return LinearMap(n, n, fwd, adj);
}

/// (N-1)(I - S) with S the subdiagonal shift; the exact inverse of
/// integration_operator(N).
inline LinearMap backward_difference_operator(std::size_t n) {
  if (n < 2)
    throw std::invalid_argument("backward_difference_operator: N must be >= 2");
  const double w = static_cast<double>(n - 1);
  auto fwd = [n, w](ConstSpan x) {
    Vector y(n);
    y[0] = w * x[0];
    for (std::size_t i = 1; i < n; ++i) y[i] = w * (x[i] - x[i - 1]);
    return y;
  };
  auto adj = [n, w](ConstSpan y) {
    Vector x(n);
    for (std::size_t i = 0; i + 1 < n; ++i) x[i] = w * (y[i] - y[i + 1]);
    x[n - 1] = w * y[n - 1];
    return x;
  };
  return LinearMap(n, n, fwd, adj);
}

//==============================================================================
// Grids
//==============================================================================

/// Cell-centred grid; cell (i1, i2), zero-based, has centre
/// (a1 + (i1 + 1/2) h1, a2 + (i2 + 1/2) h2). Images on the grid are stored
/// row-major with i1 as the row index.
struct Grid2D {
  std::size_t m1 = 1, m2 = 1;
  double h1 = 1.0, h2 = 1.0;
  double a1 = 0.0, a2 = 0.0;

  Grid2D() = default;
  Grid2D(std::size_t m1_, std::size_t m2_, double h1_, double h2_, double a1_,
         double a2_)
      : m1(m1_), m2(m2_), h1(h1_), h2(h2_), a1(a1_), a2(a2_) {
    if (m1 < 1 || m2 < 1) throw std::invalid_argument("Grid2D: empty grid");
    if (!(h1 > 0.0) || !(h2 > 0.0))
      throw std::invalid_argument("Grid2D: step sizes must be positive");
  }

  /// m1 x m2 cells of size h centred on the origin.
  static Grid2D centered(std::size_t m1, std::size_t m2, double h) {
    return Grid2D(m1, m2, h, h, -0.5 * static_cast<double>(m1) * h,
                  -0.5 * static_cast<double>(m2) * h);
  }

  std::size_t size() const { return m1 * m2; }
  double x1(std::size_t i1) const { return a1 + (static_cast<double>(i1) + 0.5) * h1; }
  double x2(std::size_t i2) const { return a2 + (static_cast<double>(i2) + 0.5) * h2; }
};

//==============================================================================
// Convolution
//==============================================================================

enum class BoundaryRule { zero, circular, reflect };

inline std::string to_string(BoundaryRule b) {
  switch (b) {
    case BoundaryRule::zero: return "zero";
    case BoundaryRule::circular: return "circular";
    case BoundaryRule::reflect: return "reflect";
  }
  return "?";
}

/// (2r+1) x (2r+1) kernel; weight(a, b) for offsets a, b in [-r, r].
struct Kernel2D {
  std::size_t radius = 0;
  Vector weights{1.0};

  Kernel2D() = default;
  Kernel2D(std::size_t r, Vector w) : radius(r), weights(std::move(w)) {
    require_length("Kernel2D weights", side() * side(), weights.size());
    if (!all_finite(weights)) throw std::invalid_argument("Kernel2D: non-finite weight");
  }

  static Kernel2D delta() { return Kernel2D(0, {1.0}); }

  std::size_t side() const { return 2 * radius + 1; }
  double weight(long a, long b) const {
    const long r = static_cast<long>(radius);
    return weights[static_cast<std::size_t>((a + r) * static_cast<long>(side()) + (b + r))];
  }
};

/// Samples exp(-|x|^2 / (2 sigma^2)) / (2 pi sigma^2) at integer offsets and
/// renormalises to unit sum so constants are preserved after truncation.
inline Kernel2D gaussian_kernel(double sigma, std::size_t radius) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_kernel: sigma must be > 0");
  const std::size_t side = 2 * radius + 1;
  const long r = static_cast<long>(radius);
  Vector w(side * side);
  const double c = 1.0 / (2.0 * std::numbers::pi * sigma * sigma);
  for (long a = -r; a <= r; ++a)
    for (long b = -r; b <= r; ++b)
      w[static_cast<std::size_t>((a + r) * static_cast<long>(side) + (b + r))] =
          c * std::exp(-static_cast<double>(a * a + b * b) / (2.0 * sigma * sigma));
  CompensatedSum total;
  for (double v : w) total.add(v);
  const double t = total.value();
  for (double& v : w) v /= t;
  return Kernel2D(radius, std::move(w));
}

namespace detail {

// Maps a possibly out-of-range index to [0, m) under the boundary rule, or
// returns -1 when the sample is outside and the rule is zero padding.
inline long boundary_index(long i, long m, BoundaryRule rule) {
  if (i >= 0 && i < m) return i;
  switch (rule) {
    case BoundaryRule::zero: return -1;
    case BoundaryRule::circular: return ((i % m) + m) % m;
    case BoundaryRule::reflect: return i < 0 ? -i - 1 : 2 * m - i - 1;
  }
  return -1;
}

inline void check_kernel(const Kernel2D& k, std::size_t m1, std::size_t m2) {
  if (k.radius >= std::min(m1, m2))
    throw std::invalid_argument("convolve: kernel radius " +
                                std::to_string(k.radius) +
                                " must be smaller than the image extent " +
                                std::to_string(std::min(m1, m2)));
}

}  // namespace detail

/// (g * u)(i) = sum_j g(j) u(i - j), missing samples supplied by the
/// boundary rule. Output has the input's shape.
inline Vector convolve(ConstSpan image, std::size_t m1, std::size_t m2,
                       const Kernel2D& kernel,
                       BoundaryRule boundary = BoundaryRule::zero) {
  require_length("convolve image", m1 * m2, image.size());
  detail::check_kernel(kernel, m1, m2);
  const long r = static_cast<long>(kernel.radius);
  const long lm1 = static_cast<long>(m1), lm2 = static_cast<long>(m2);
  Vector out(m1 * m2, 0.0);
  for (long i1 = 0; i1 < lm1; ++i1)
    for (long i2 = 0; i2 < lm2; ++i2) {
      double s = 0.0;
      for (long a = -r; a <= r; ++a) {
        const long k1 = detail::boundary_index(i1 - a, lm1, boundary);
        if (k1 < 0) continue;
        for (long b = -r; b <= r; ++b) {
          const long k2 = detail::boundary_index(i2 - b, lm2, boundary);
          if (k2 < 0) continue;
          s += kernel.weight(a, b) * image[static_cast<std::size_t>(k1 * lm2 + k2)];
        }
      }
      out[static_cast<std::size_t>(i1 * lm2 + i2)] = s;
    }
  return out;
}

/// Exact adjoint of convolve(): scatters each output sample back along the
/// same index map.
inline Vector convolve_adjoint(ConstSpan data, std::size_t m1, std::size_t m2,
                               const Kernel2D& kernel,
                               BoundaryRule boundary = BoundaryRule::zero) {
  require_length("convolve_adjoint data", m1 * m2, data.size());
  detail::check_kernel(kernel, m1, m2);
  const long r = static_cast<long>(kernel.radius);
  const long lm1 = static_cast<long>(m1), lm2 = static_cast<long>(m2);
  Vector out(m1 * m2, 0.0);
  for (long i1 = 0; i1 < lm1; ++i1)
    for (long i2 = 0; i2 < lm2; ++i2) {
      const double y = data[static_cast<std::size_t>(i1 * lm2 + i2)];
      if (y == 0.0) continue;
      for (long a = -r; a <= r; ++a) {
        const long k1 = detail::boundary_index(i1 - a, lm1, boundary);
        if (k1 < 0) continue;
        for (long b = -r; b <= r; ++b) {
          const long k2 = detail::boundary_index(i2 - b, lm2, boundary);
          if (k2 < 0) continue;
          out[static_cast<std::size_t>(k1 * lm2 + k2)] += kernel.weight(a, b) * y;
        }
      }
    }
  return out;
}

inline LinearMap convolution_operator(std::size_t m1, std::size_t m2,
                                      Kernel2D kernel,
                                      BoundaryRule boundary = BoundaryRule::zero) {
  detail::check_kernel(kernel, m1, m2);
  return LinearMap(
      m1 * m2, m1 * m2,
      [=](ConstSpan x) { return convolve(x, m1, m2, kernel, boundary); },
      [=](ConstSpan y) { return convolve_adjoint(y, m1, m2, kernel, boundary); });
}

//==============================================================================
// Radon transform
//==============================================================================

/// Line integrals indexed by (angle, offset); values are row-major with one
/// row per angle. The source grid shape and node spacing are recorded so the
/// backprojection can reproduce the same discretisation.
struct Sinogram {
  Vector angles;
  Vector offsets;
  double node_spacing = 0.0;
  std::size_t grid_m1 = 0, grid_m2 = 0;
  Vector values;

  double operator()(std::size_t a, std::size_t s) const {
    return values[a * offsets.size() + s];
  }
};

namespace detail {

// Visits the bilinear weights of every quadrature node along the line
// (s cos phi + t sin phi, s sin phi - t cos phi). Nodes are equispaced with
// spacing dt and symmetric about t = 0; samples outside the grid are zero.
template <class Visit>
void trace_ray(const Grid2D& g, double phi, double s, double dt, Visit&& visit) {
  const double c = std::cos(phi), sn = std::sin(phi);
  const double e1 = static_cast<double>(g.m1) * g.h1;
  const double e2 = static_cast<double>(g.m2) * g.h2;
  const double far1 = std::max(std::abs(g.a1), std::abs(g.a1 + e1));
  const double far2 = std::max(std::abs(g.a2), std::abs(g.a2 + e2));
  const double reach = std::sqrt(far1 * far1 + far2 * far2) + std::max(g.h1, g.h2);
  const std::size_t nodes = static_cast<std::size_t>(std::ceil(2.0 * reach / dt)) + 1;
  const double mid = 0.5 * static_cast<double>(nodes - 1);
  const long m1 = static_cast<long>(g.m1), m2 = static_cast<long>(g.m2);
  for (std::size_t k = 0; k < nodes; ++k) {
    const double t = (static_cast<double>(k) - mid) * dt;
    const double x = s * c + t * sn;
    const double y = s * sn - t * c;
    const double xi = (x - g.a1) / g.h1 - 0.5;
    const double eta = (y - g.a2) / g.h2 - 0.5;
    if (xi <= -1.0 || eta <= -1.0 || xi >= static_cast<double>(m1) ||
        eta >= static_cast<double>(m2))
      continue;
    const long i0 = static_cast<long>(std::floor(xi));
    const long j0 = static_cast<long>(std::floor(eta));
    const double wx = xi - static_cast<double>(i0);
    const double wy = eta - static_cast<double>(j0);
    const double w[2][2] = {{(1 - wx) * (1 - wy), (1 - wx) * wy},
                            {wx * (1 - wy), wx * wy}};
    for (int di = 0; di < 2; ++di) {
      const long i = i0 + di;
      if (i < 0 || i >= m1) continue;
      for (int dj = 0; dj < 2; ++dj) {
        const long j = j0 + dj;
        if (j < 0 || j >= m2 || w[di][dj] == 0.0) continue;
        visit(static_cast<std::size_t>(i * m2 + j), w[di][dj] * dt);
      }
    }
  }
}

inline double resolve_spacing(const Grid2D& g, double node_spacing) {
  if (node_spacing < 0.0) throw std::invalid_argument("radon: negative node spacing");
  return node_spacing > 0.0 ? node_spacing : 0.5 * std::min(g.h1, g.h2);
}

}  // namespace detail

/// Ray-driven Radon transform with bilinear interpolation. node_spacing = 0
/// selects half the smaller grid step.
inline Sinogram radon(ConstSpan image, const Grid2D& grid, const Vector& angles,
                      const Vector& offsets, double node_spacing = 0.0) {
  if (angles.empty() || offsets.empty())
    throw std::invalid_argument("radon: empty angle or offset list");
  require_length("radon image", grid.size(), image.size());
  Sinogram sino{angles, offsets, detail::resolve_spacing(grid, node_spacing),
                grid.m1, grid.m2, Vector(angles.size() * offsets.size(), 0.0)};
  for (std::size_t a = 0; a < angles.size(); ++a)
    for (std::size_t s = 0; s < offsets.size(); ++s) {
      double acc = 0.0;
      detail::trace_ray(grid, angles[a], offsets[s], sino.node_spacing,
                        [&](std::size_t idx, double w) { acc += w * image[idx]; });
      sino.values[a * offsets.size() + s] = acc;
    }
  return sino;
}

/// Backprojection: the exact adjoint of radon() on the same grid.
inline Vector radon_adjoint(const Sinogram& sino, const Grid2D& grid) {
  if (sino.angles.empty() || sino.offsets.empty())
    throw std::invalid_argument("radon_adjoint: empty angle or offset list");
  require_length("radon_adjoint sinogram values",
                 sino.angles.size() * sino.offsets.size(), sino.values.size());
  if (sino.grid_m1 != grid.m1 || sino.grid_m2 != grid.m2)
    throw std::invalid_argument("radon_adjoint: sinogram was produced on a " +
                                std::to_string(sino.grid_m1) + "x" +
                                std::to_string(sino.grid_m2) + " grid, not " +
                                std::to_string(grid.m1) + "x" +
                                std::to_string(grid.m2));
  if (!(sino.node_spacing > 0.0))
    throw std::invalid_argument("radon_adjoint: sinogram lacks a node spacing");
  Vector out(grid.size(), 0.0);
  const std::size_t ns = sino.offsets.size();
  for (std::size_t a = 0; a < sino.angles.size(); ++a)
    for (std::size_t s = 0; s < ns; ++s) {
      const double y = sino.values[a * ns + s];
      if (y == 0.0) continue;
      detail::trace_ray(grid, sino.angles[a], sino.offsets[s], sino.node_spacing,
                        [&](std::size_t idx, double w) { out[idx] += w * y; });
    }
  return out;
}

inline LinearMap radon_operator(const Grid2D& grid, Vector angles, Vector offsets,
                                double node_spacing = 0.0) {
  if (angles.empty() || offsets.empty())
    throw std::invalid_argument("radon_operator: empty angle or offset list");
  const double dt = detail::resolve_spacing(grid, node_spacing);
  const std::size_t rows = angles.size() * offsets.size();
  return LinearMap(
      rows, grid.size(),
      [=](ConstSpan x) { return radon(x, grid, angles, offsets, dt).values; },
      [=](ConstSpan y) {
        Sinogram s{angles, offsets, dt, grid.m1, grid.m2, Vector(y.begin(), y.end())};
        return radon_adjoint(s, grid);
      });
}

/// n equispaced angles on [0, pi).
inline Vector uniform_angles(std::size_t n) {
  Vector a(n);
  for (std::size_t i = 0; i < n; ++i)
    a[i] = std::numbers::pi * static_cast<double>(i) / static_cast<double>(n);
  return a;
}

/// n offsets with spacing ds, symmetric about zero.
inline Vector symmetric_offsets(std::size_t n, double ds) {
  Vector s(n);
  const double mid = 0.5 * static_cast<double>(n - 1);
  for (std::size_t i = 0; i < n; ++i) s[i] = (static_cast<double>(i) - mid) * ds;
  return s;
}

//==============================================================================
// Image gradient / divergence
//==============================================================================

/// Forward differences. Component 1 (rows) occupies the first m*n entries,
/// component 2 (columns) the second; the last row of component 1 and the last
/// column of component 2 are zero.
inline Vector grad2d(ConstSpan u, std::size_t m, std::size_t n) {
  if (m < 1 || n < 1) throw std::invalid_argument("grad2d: empty image");
  require_length("grad2d image", m * n, u.size());
  Vector g(2 * m * n, 0.0);
  double* g1 = g.data();
  double* g2 = g.data() + m * n;
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      if (i + 1 < m) g1[k] = u[k + n] - u[k];
      if (j + 1 < n) g2[k] = u[k + 1] - u[k];
    }
  return g;
}

/// Discrete divergence, defined as -grad2d^T.
inline Vector div2d(ConstSpan p, std::size_t m, std::size_t n) {
  require_length("div2d field", 2 * m * n, p.size());
  const double* p1 = p.data();
  const double* p2 = p.data() + m * n;
  Vector d(m * n, 0.0);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      const std::size_t k = i * n + j;
      double v = 0.0;
      if (i + 1 < m) v += p1[k];
      if (i > 0) v -= p1[k - n];
      if (j + 1 < n) v += p2[k];
      if (j > 0) v -= p2[k - 1];
      d[k] = v;
    }
  return d;
}

inline LinearMap gradient_operator(std::size_t m, std::size_t n) {
  return LinearMap(
      2 * m * n, m * n, [m, n](ConstSpan u) { return grad2d(u, m, n); },
      [m, n](ConstSpan p) { return scaled(-1.0, div2d(p, m, n)); });
}

/// Anisotropic total variation sum |(grad u)_k|.
inline double total_variation(ConstSpan u, std::size_t m, std::size_t n) {
  return norm1(grad2d(u, m, n));
}

}  // namespace invprob::forward
