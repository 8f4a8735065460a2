#pragma once

#include <cmath>
#include <functional>
#include <limits>
#include <string>

#include "linop.hpp"
#include "solve.hpp"

/// Generalised inverses and spectral regularisation
///   R f = sum_i r(sigma_i) <f, v_i> u_i
/// on top of a stored singular system.
namespace invprob::spectral {

//==============================================================================
// Filters
//==============================================================================

class SpectralFilter {
 public:
  enum class Kind { pseudo_inverse, tikhonov, tsvd, learned };

  static SpectralFilter pseudo_inverse() { return SpectralFilter(Kind::pseudo_inverse, 0.0, {}); }

  /// r(sigma) = sigma / (sigma^2 + alpha)
  static SpectralFilter tikhonov(double alpha) {
    if (!(alpha > 0.0)) throw std::invalid_argument("tikhonov filter: alpha must be > 0");
    return SpectralFilter(Kind::tikhonov, alpha, {});
  }

  /// r(sigma) = 1/sigma for sigma >= cut, else 0
  static SpectralFilter tsvd(double cut) {
    if (cut < 0.0) throw std::invalid_argument("tsvd filter: cut must be >= 0");
    return SpectralFilter(Kind::tsvd, cut, {});
  }

  /// One coefficient per stored singular index.
  static SpectralFilter learned(Vector theta) {
    if (!all_finite(theta)) throw std::invalid_argument("learned filter: non-finite theta");
    return SpectralFilter(Kind::learned, 0.0, std::move(theta));
  }

  Kind kind() const noexcept { return kind_; }
  double parameter() const noexcept { return param_; }
  const Vector& theta() const noexcept { return theta_; }

  double coefficient(double sigma, std::size_t index) const {
    switch (kind_) {
      case Kind::pseudo_inverse: return 1.0 / sigma;
      case Kind::tikhonov: return sigma / (sigma * sigma + param_);
      case Kind::tsvd: return sigma >= param_ ? 1.0 / sigma : 0.0;
      case Kind::learned:
        if (index >= theta_.size())
          throw dimension_error("learned filter index", theta_.size(), index + 1);
        return theta_[index];
    }
    return 0.0;
  }

 private:
  SpectralFilter(Kind k, double p, Vector t) : kind_(k), param_(p), theta_(std::move(t)) {}

  Kind kind_;
  double param_;
  Vector theta_;
};

//==============================================================================
// Expansions
//==============================================================================

/// <f, v_i> for every stored index (compensated).
inline Vector range_coefficients(const SvdFactorization& svd, ConstSpan f) {
  require_length("range coefficients data", svd.rows, f.size());
  Vector c(svd.rank);
  for (std::size_t i = 0; i < svd.rank; ++i) c[i] = compensated_dot(f, svd.left_vectors[i]);
  return c;
}

/// <u, u_i> for every stored index (compensated).
inline Vector domain_coefficients(const SvdFactorization& svd, ConstSpan u) {
  require_length("domain coefficients input", svd.cols, u.size());
  Vector c(svd.rank);
  for (std::size_t i = 0; i < svd.rank; ++i) c[i] = compensated_dot(u, svd.right_vectors[i]);
  return c;
}

/// sum_i c_i u_i with a compensated sum per output entry.
inline Vector synthesize_domain(const SvdFactorization& svd, ConstSpan c) {
  require_length("synthesize coefficients", svd.rank, c.size());
  std::vector<CompensatedSum> acc(svd.cols);
  for (std::size_t i = 0; i < svd.rank; ++i) {
    if (c[i] == 0.0) continue;
    const Vector& ui = svd.right_vectors[i];
    for (std::size_t j = 0; j < svd.cols; ++j) acc[j].add(c[i] * ui[j]);
  }
  Vector out(svd.cols);
  for (std::size_t j = 0; j < svd.cols; ++j) out[j] = acc[j].value();
  return out;
}

inline Vector filter_apply(const SvdFactorization& svd, const SpectralFilter& filter,
                           ConstSpan f) {
  if (filter.kind() == SpectralFilter::Kind::learned)
    require_length("filter_apply learned coefficients", svd.rank, filter.theta().size());
  Vector c = range_coefficients(svd, f);
  for (std::size_t i = 0; i < svd.rank; ++i)
    c[i] *= filter.coefficient(svd.singular_values[i], i);
  return synthesize_domain(svd, c);
}

/// Minimal-norm least-squares solution sum_i (1/sigma_i) <f, v_i> u_i.
inline Vector pseudo_inverse_apply(const SvdFactorization& svd, ConstSpan f) {
  return filter_apply(svd, SpectralFilter::pseudo_inverse(), f);
}

/// A^+ = sum_i (1/sigma_i) u_i v_i^T as a cols x rows matrix.
inline Matrix pseudo_inverse_matrix(const SvdFactorization& svd) {
  Matrix m(svd.cols, svd.rows);
  for (std::size_t k = 0; k < svd.rank; ++k) {
    const double inv = 1.0 / svd.singular_values[k];
    for (std::size_t i = 0; i < svd.cols; ++i) {
      const double a = inv * svd.right_vectors[k][i];
      for (std::size_t j = 0; j < svd.rows; ++j) m(i, j) += a * svd.left_vectors[k][j];
    }
  }
  return m;
}

//==============================================================================
// Diagnostics
//==============================================================================

/// Largest absolute deviation in each Moore-Penrose identity.
struct MoorePenroseReport {
  double a_adag_a = 0.0;      // A A+ A = A
  double adag_a_adag = 0.0;   // A+ A A+ = A+
  double sym_a_adag = 0.0;    // (A A+)^T = A A+
  double sym_adag_a = 0.0;    // (A+ A)^T = A+ A
  bool passed = false;

  double worst() const {
    return std::max(std::max(a_adag_a, adag_a_adag), std::max(sym_a_adag, sym_adag_a));
  }
};

inline MoorePenroseReport moore_penrose_check(const Matrix& a, const Matrix& adag,
                                              double tol) {
  require_length("moore_penrose_check rows of A+", a.cols(), adag.rows());
  require_length("moore_penrose_check cols of A+", a.rows(), adag.cols());
  const Matrix aad = a * adag;
  const Matrix ada = adag * a;
  MoorePenroseReport r;
  r.a_adag_a = (aad * a - a).max_abs();
  r.adag_a_adag = (ada * adag - adag).max_abs();
  r.sym_a_adag = (aad.transpose() - aad).max_abs();
  r.sym_adag_a = (ada.transpose() - ada).max_abs();
  r.passed = r.worst() <= tol;
  return r;
}

struct PicardEntry {
  double sigma;
  double coefficient;  // |<f, v_i>|
  double ratio;        // |<f, v_i>| / sigma_i
  double partial_sum;  // sum_{j <= i} ratio_j^2
};

inline std::vector<PicardEntry> picard_diagnostic(const SvdFactorization& svd, ConstSpan f) {
  const Vector c = range_coefficients(svd, f);
  std::vector<PicardEntry> out;
  out.reserve(svd.rank);
  CompensatedSum partial;
  for (std::size_t i = 0; i < svd.rank; ++i) {
    const double s = svd.singular_values[i];
    const double ratio = std::abs(c[i]) / s;
    partial.add(ratio * ratio);
    out.push_back({s, std::abs(c[i]), ratio, partial.value()});
  }
  return out;
}

//==============================================================================
// Tikhonov
//==============================================================================

/// Solves (A^T A + alpha I) u = A^T f by conjugate gradients from u0 = 0.
/// Uses cfg.max_iter and cfg.tol (absolute residual). A capped run returns
/// the best iterate with reason max_iter.
inline solve::SolveResult tikhonov_solve_cg(const LinearMap& a, ConstSpan f, double alpha,
                                            const solve::SolverConfig& cfg) {
  if (!(alpha > 0.0)) throw std::invalid_argument("tikhonov_solve_cg: alpha must be > 0");
  const LinearMap c = normal_operator(a, alpha);
  const Vector b = a.adjoint_apply(f);
  return solve::conjugate_gradient(c, b, Vector(a.cols(), 0.0), cfg.max_iter, cfg.tol);
}

/// (A^T A + ratio I)^{-1} (A^T f + ratio mu_prior): the MAP estimate under a
/// Gaussian prior N(mu_prior, sigma_u^2 I) and noise N(0, sigma^2 I), with
/// ratio = sigma^2 / sigma_u^2. Throws std::domain_error if singular.
inline Vector map_gaussian_closed_form(const Matrix& a, ConstSpan f, double ratio,
                                       ConstSpan mu_prior) {
  if (ratio < 0.0) throw std::invalid_argument("map_gaussian_closed_form: ratio must be >= 0");
  require_length("map_gaussian_closed_form data", a.rows(), f.size());
  require_length("map_gaussian_closed_form prior mean", a.cols(), mu_prior.size());
  Matrix c = a.transpose() * a;
  for (std::size_t i = 0; i < c.rows(); ++i) c(i, i) += ratio;
  Vector rhs = a.multiply_transpose(f);
  for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] += ratio * mu_prior[i];
  return solve_dense(std::move(c), std::move(rhs));
}

//==============================================================================
// Learned / statistical filters
//==============================================================================

/// Per-index noise energies Delta_i = E <eps, v_i>^2 and prior energies
/// Pi_i = E <u, u_i>^2.
struct SpectralStatistics {
  Vector delta;
  Vector pi;
};

/// theta_i = sigma_i / (sigma_i^2 + Delta_i / Pi_i); theta_i = 0 where Pi_i = 0.
inline SpectralFilter mse_optimal_filter(const SvdFactorization& svd,
                                         const SpectralStatistics& stats) {
  require_length("mse_optimal_filter noise energies", svd.rank, stats.delta.size());
  require_length("mse_optimal_filter prior energies", svd.rank, stats.pi.size());
  Vector theta(svd.rank);
  for (std::size_t i = 0; i < svd.rank; ++i) {
    const double d = stats.delta[i], p = stats.pi[i];
    if (d < 0.0 || p < 0.0)
      throw std::invalid_argument("mse_optimal_filter: negative energy at index " +
                                  std::to_string(i));
    const double s = svd.singular_values[i];
    theta[i] = p == 0.0 ? 0.0 : s / (s * s + d / p);
  }
  return SpectralFilter::learned(std::move(theta));
}

//==============================================================================
// Morozov discrepancy principle
//==============================================================================

struct MorozovSearch {
  double alpha_min = 1e-8;
  double alpha_max = 1e4;
  std::size_t points_per_decade = 13;
  std::size_t bisection_steps = 30;
};

struct MorozovResult {
  double alpha = 0.0;
  Vector u;
  double discrepancy = 0.0;
  Vector grid;
  Vector grid_discrepancy;
  /// Whether the discrepancy was non-decreasing along the grid.
  bool monotone = true;
};

inline Vector morozov_grid(const MorozovSearch& s) {
  if (!(s.alpha_min > 0.0) || !(s.alpha_max > s.alpha_min) || s.points_per_decade == 0)
    throw std::invalid_argument("morozov: invalid search range");
  const double decades = std::log10(s.alpha_max / s.alpha_min);
  const std::size_t n =
      static_cast<std::size_t>(std::llround(decades * static_cast<double>(s.points_per_decade)));
  Vector g(n + 1);
  for (std::size_t j = 0; j <= n; ++j)
    g[j] = s.alpha_min *
           std::pow(10.0, static_cast<double>(j) / static_cast<double>(s.points_per_decade));
  g[n] = s.alpha_max;
  return g;
}

/// Largest alpha with ||A u_alpha - f_delta|| <= mu delta: scans a geometric
/// grid, then bisects (geometrically) between the last feasible and the first
/// infeasible grid point. Throws std::runtime_error if even alpha_min fails.
inline MorozovResult morozov_select_alpha(const std::function<Vector(double)>& solve_alpha,
                                          const LinearMap& a, ConstSpan f_delta,
                                          double delta, double mu,
                                          const MorozovSearch& search = {}) {
  if (!(delta > 0.0)) throw std::invalid_argument("morozov: delta must be > 0");
  if (!(mu >= 1.0)) throw std::invalid_argument("morozov: mu must be >= 1");
  require_length("morozov data", a.rows(), f_delta.size());
  const double bound = mu * delta;
  auto discrepancy = [&](const Vector& u) { return distance(a.apply(u), f_delta); };

  MorozovResult res;
  res.grid = morozov_grid(search);
  std::vector<Vector> sols;
  sols.reserve(res.grid.size());
  for (double al : res.grid) {
    sols.push_back(solve_alpha(al));
    res.grid_discrepancy.push_back(discrepancy(sols.back()));
  }
  for (std::size_t j = 1; j < res.grid.size(); ++j) {
    const double prev = res.grid_discrepancy[j - 1];
    if (res.grid_discrepancy[j] < prev - 1e-9 * (1.0 + prev)) res.monotone = false;
  }
  std::size_t feasible = res.grid.size();
  for (std::size_t j = res.grid.size(); j-- > 0;)
    if (res.grid_discrepancy[j] <= bound) {
      feasible = j;
      break;
    }
  if (feasible == res.grid.size())
    throw std::runtime_error("morozov: no feasible alpha; discrepancy at alpha_min = " +
                             format_double(res.grid_discrepancy.front()) + " exceeds " +
                             format_double(bound));
  res.alpha = res.grid[feasible];
  res.u = sols[feasible];
  res.discrepancy = res.grid_discrepancy[feasible];
  if (feasible + 1 == res.grid.size()) return res;

  double lo = res.grid[feasible], hi = res.grid[feasible + 1];
  for (std::size_t it = 0; it < search.bisection_steps; ++it) {
    const double mid = std::sqrt(lo * hi);
    Vector u = solve_alpha(mid);
    const double d = discrepancy(u);
    if (d <= bound) {
      lo = mid;
      res.alpha = mid;
      res.u = std::move(u);
      res.discrepancy = d;
    } else {
      hi = mid;
    }
  }
  return res;
}

}  // namespace invprob::spectral
