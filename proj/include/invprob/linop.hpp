#pragma once

#include <algorithm>
#include <functional>
#include <initializer_list>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <utility>

#include "core.hpp"

namespace invprob {

//==============================================================================
// Dense row-major matrix
//==============================================================================

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}
  Matrix(std::size_t rows, std::size_t cols, Vector row_major)
      : rows_(rows), cols_(cols), data_(std::move(row_major)) {
    require_length("Matrix data", rows * cols, data_.size());
  }

  static Matrix from_rows(
      std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
      require_length("Matrix::from_rows row", c, row.size());
      std::copy(row.begin(), row.end(), m.data_.begin() + i * c);
      ++i;
    }
    return m;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix diagonal(ConstSpan d) {
    Matrix m(d.size(), d.size());
    for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  ConstSpan row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  const Vector& data() const noexcept { return data_; }
  Vector& data() noexcept { return data_; }

  Vector column(std::size_t j) const {
    Vector c(rows_);
    for (std::size_t i = 0; i < rows_; ++i) c[i] = (*this)(i, j);
    return c;
  }

  Vector multiply(ConstSpan x) const {
    require_length("Matrix::multiply", cols_, x.size());
    Vector y(rows_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      const double* r = data_.data() + i * cols_;
      double s = 0.0;
      for (std::size_t j = 0; j < cols_; ++j) s += r[j] * x[j];
      y[i] = s;
    }
    return y;
  }

  Vector multiply_transpose(ConstSpan y) const {
    require_length("Matrix::multiply_transpose", rows_, y.size());
    Vector x(cols_, 0.0);
    for (std::size_t i = 0; i < rows_; ++i) {
      const double* r = data_.data() + i * cols_;
      const double yi = y[i];
      for (std::size_t j = 0; j < cols_; ++j) x[j] += r[j] * yi;
    }
    return x;
  }

  Matrix transpose() const {
    Matrix t(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
      for (std::size_t j = 0; j < cols_; ++j) t(j, i) = (*this)(i, j);
    return t;
  }

  friend Matrix operator*(const Matrix& a, const Matrix& b) {
    require_length("Matrix product inner dimension", a.cols_, b.rows_);
    Matrix c(a.rows_, b.cols_);
    for (std::size_t i = 0; i < a.rows_; ++i)
      for (std::size_t k = 0; k < a.cols_; ++k) {
        const double aik = a(i, k);
        if (aik == 0.0) continue;
        for (std::size_t j = 0; j < b.cols_; ++j) c(i, j) += aik * b(k, j);
      }
    return c;
  }

  friend Matrix operator-(const Matrix& a, const Matrix& b) {
    require_length("Matrix difference rows", a.rows_, b.rows_);
    require_length("Matrix difference cols", a.cols_, b.cols_);
    Matrix c = a;
    for (std::size_t i = 0; i < c.data_.size(); ++i) c.data_[i] -= b.data_[i];
    return c;
  }

  double frobenius_norm() const { return norm2(data_); }
  double max_abs() const { return norm_inf(data_); }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  Vector data_;
};

inline Matrix random_gaussian_matrix(std::size_t rows, std::size_t cols,
                                     SplitMix64& rng) {
  return Matrix(rows, cols, rng.normal_vector(rows * cols));
}

//==============================================================================
// LinearMap
//==============================================================================

/// Matrix-free linear operator R^cols -> R^rows with its adjoint.
///
/// apply() and adjoint_apply() validate argument lengths and the lengths
/// returned by the wrapped callables. When a dense view is attached, it must
/// describe the same operator.
class LinearMap {
 public:
  using Fn = std::function<Vector(ConstSpan)>;

  LinearMap(std::size_t rows, std::size_t cols, Fn apply, Fn adjoint,
            std::optional<Matrix> dense_view = std::nullopt)
      : rows_(rows),
        cols_(cols),
        apply_(std::move(apply)),
        adjoint_(std::move(adjoint)),
        dense_(std::move(dense_view)) {
    if (dense_) {
      require_length("LinearMap dense_view rows", rows_, dense_->rows());
      require_length("LinearMap dense_view cols", cols_, dense_->cols());
    }
  }

  static LinearMap from_matrix(Matrix m) {
    auto shared = std::make_shared<const Matrix>(m);
    const std::size_t r = m.rows(), c = m.cols();
    return LinearMap(
        r, c, [shared](ConstSpan x) { return shared->multiply(x); },
        [shared](ConstSpan y) { return shared->multiply_transpose(y); },
        std::move(m));
  }

  static LinearMap identity(std::size_t n) {
    auto copy = [](ConstSpan x) { return Vector(x.begin(), x.end()); };
    return LinearMap(n, n, copy, copy);
  }

  static LinearMap zero(std::size_t rows, std::size_t cols) {
    return LinearMap(
        rows, cols, [rows](ConstSpan) { return Vector(rows, 0.0); },
        [cols](ConstSpan) { return Vector(cols, 0.0); });
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  Vector apply(ConstSpan x) const {
    require_length("LinearMap::apply input", cols_, x.size());
    Vector y = apply_(x);
    require_length("LinearMap::apply output", rows_, y.size());
    return y;
  }

  Vector adjoint_apply(ConstSpan y) const {
    require_length("LinearMap::adjoint_apply input", rows_, y.size());
    Vector x = adjoint_(y);
    require_length("LinearMap::adjoint_apply output", cols_, x.size());
    return x;
  }

  const std::optional<Matrix>& dense_view() const noexcept { return dense_; }

  /// Dense matrix of the operator; probes unit vectors when no view exists.
  Matrix to_dense() const {
    if (dense_) return *dense_;
    Matrix m(rows_, cols_);
    Vector e(cols_, 0.0);
    for (std::size_t j = 0; j < cols_; ++j) {
      e[j] = 1.0;
      const Vector c = apply(e);
      for (std::size_t i = 0; i < rows_; ++i) m(i, j) = c[i];
      e[j] = 0.0;
    }
    return m;
  }

 private:
  std::size_t rows_;
  std::size_t cols_;
  Fn apply_;
  Fn adjoint_;
  std::optional<Matrix> dense_;
};

inline Vector apply(const LinearMap& op, ConstSpan x) { return op.apply(x); }
inline Vector adjoint_apply(const LinearMap& op, ConstSpan y) {
  return op.adjoint_apply(y);
}

/// outer ∘ inner
inline LinearMap compose(const LinearMap& outer, const LinearMap& inner) {
  require_length("compose inner dimension", outer.cols(), inner.rows());
  return LinearMap(
      outer.rows(), inner.cols(),
      [outer, inner](ConstSpan x) { return outer.apply(inner.apply(x)); },
      [outer, inner](ConstSpan y) {
        return inner.adjoint_apply(outer.adjoint_apply(y));
      });
}

/// Vertical stack [top; bottom], both acting on the same domain.
inline LinearMap stack(const LinearMap& top, const LinearMap& bottom) {
  require_length("stack domain", top.cols(), bottom.cols());
  const std::size_t r1 = top.rows();
  return LinearMap(
      top.rows() + bottom.rows(), top.cols(),
      [top, bottom](ConstSpan x) {
        Vector y = top.apply(x);
        const Vector z = bottom.apply(x);
        y.insert(y.end(), z.begin(), z.end());
        return y;
      },
      [top, bottom, r1](ConstSpan y) {
        Vector x = top.adjoint_apply(y.subspan(0, r1));
        const Vector z = bottom.adjoint_apply(y.subspan(r1));
        for (std::size_t i = 0; i < x.size(); ++i) x[i] += z[i];
        return x;
      });
}

/// A^T A + alpha I as a self-adjoint map on the domain of A.
inline LinearMap normal_operator(const LinearMap& a, double alpha) {
  auto f = [a, alpha](ConstSpan x) {
    Vector y = a.adjoint_apply(a.apply(x));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
    return y;
  };
  return LinearMap(a.cols(), a.cols(), f, f);
}

/// |<Ax, y> - <x, A^T y>| / (1 + ||Ax|| ||y||)
inline double adjoint_mismatch(const LinearMap& op, ConstSpan x, ConstSpan y) {
  const Vector ax = op.apply(x);
  const Vector aty = op.adjoint_apply(y);
  return std::abs(dot(ax, y) - dot(x, aty)) / (1.0 + norm2(ax) * norm2(y));
}

//==============================================================================
// Singular value decomposition
//==============================================================================

/// Singular system {(sigma_i, u_i, v_i)} with A u_i = sigma_i v_i.
///
/// right_vectors live in the domain (length cols), left_vectors in the range
/// (length rows). Only singular values above the rank cutoff are stored.
struct SvdFactorization {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<Vector> left_vectors;
  std::vector<Vector> right_vectors;
  Vector singular_values;
  std::size_t rank = 0;

  Matrix reconstruct() const {
    Matrix m(rows, cols);
    for (std::size_t k = 0; k < rank; ++k)
      for (std::size_t i = 0; i < rows; ++i) {
        const double a = singular_values[k] * left_vectors[k][i];
        for (std::size_t j = 0; j < cols; ++j) m(i, j) += a * right_vectors[k][j];
      }
    return m;
  }
};

namespace detail {

struct JacobiResult {
  std::vector<Vector> columns;  // A V, column-wise
  std::vector<Vector> v;        // right rotations, column-wise
};

// One-sided (Hestenes) Jacobi on a tall-or-square matrix.
inline JacobiResult one_sided_jacobi(const Matrix& a) {
  const std::size_t m = a.rows(), n = a.cols();
  JacobiResult r;
  r.columns.assign(n, Vector(m));
  r.v.assign(n, Vector(n, 0.0));
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m; ++i) r.columns[j][i] = a(i, j);
    r.v[j][j] = 1.0;
  }
  constexpr double eps = 1e-15;
  constexpr int max_sweeps = 100;
  double worst = 0.0;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    worst = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        Vector& cp = r.columns[p];
        Vector& cq = r.columns[q];
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
          alpha += cp[i] * cp[i];
          beta += cq[i] * cq[i];
          gamma += cp[i] * cq[i];
        }
        if (alpha == 0.0 || beta == 0.0) continue;
        const double off = std::abs(gamma) / std::sqrt(alpha * beta);
        worst = std::max(worst, off);
        if (off <= eps) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) /
                         (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double x = cp[i], y = cq[i];
          cp[i] = c * x - s * y;
          cq[i] = s * x + c * y;
        }
        Vector& vp = r.v[p];
        Vector& vq = r.v[q];
        for (std::size_t i = 0; i < n; ++i) {
          const double x = vp[i], y = vq[i];
          vp[i] = c * x - s * y;
          vq[i] = s * x + c * y;
        }
      }
    }
    if (!rotated) return r;
  }
  throw convergence_error(
      "svd: one-sided Jacobi did not converge after " +
      std::to_string(max_sweeps) +
      " sweeps; largest remaining column cosine " + format_double(worst));
}

}  // namespace detail

/// SVD by one-sided Jacobi rotations. Singular values at or below
/// rank_cutoff * sigma_max are dropped.
inline SvdFactorization svd(const Matrix& matrix, double rank_cutoff = 1e-12) {
  if (!all_finite(matrix.data()))
    throw std::invalid_argument("svd: matrix has non-finite entries");
  if (rank_cutoff < 0.0) throw std::invalid_argument("svd: negative rank_cutoff");

  const bool wide = matrix.rows() < matrix.cols();
  const Matrix work = wide ? matrix.transpose() : matrix;
  detail::JacobiResult jr = detail::one_sided_jacobi(work);

  const std::size_t n = work.cols();
  Vector sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = norm2(jr.columns[j]);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sigma[a] > sigma[b]; });

  SvdFactorization out;
  out.rows = matrix.rows();
  out.cols = matrix.cols();
  const double smax = n ? sigma[order[0]] : 0.0;
  for (std::size_t idx : order) {
    const double s = sigma[idx];
    if (s <= rank_cutoff * smax || s == 0.0) break;
    Vector left = scaled(1.0 / s, jr.columns[idx]);
    Vector right = jr.v[idx];
    // For a wide input we factored A^T, so the roles swap.
    if (wide) std::swap(left, right);
    out.left_vectors.push_back(std::move(left));
    out.right_vectors.push_back(std::move(right));
    out.singular_values.push_back(s);
  }
  out.rank = out.singular_values.size();
  return out;
}

//==============================================================================
// Norm and conditioning diagnostics
//==============================================================================

/// Power-method estimate of the largest singular value. The returned value is
/// the running maximum of ||A x_k|| over unit iterates, hence a lower bound
/// that never decreases as iters grows.
inline double operator_norm(const LinearMap& op, std::size_t iters = 200,
                            std::uint64_t seed = 0) {
  SplitMix64 rng(seed);
  Vector x = rng.normal_vector(op.cols());
  double nx = norm2(x);
  if (nx == 0.0) return 0.0;
  for (double& v : x) v /= nx;
  double best = 0.0;
  for (std::size_t k = 0; k <= iters; ++k) {
    const Vector y = op.apply(x);
    best = std::max(best, norm2(y));
    if (k == iters) break;
    Vector z = op.adjoint_apply(y);
    const double nz = norm2(z);
    if (nz == 0.0) break;
    for (double& v : z) v /= nz;
    x = std::move(z);
  }
  return best;
}

struct ConditionNumbers {
  double cond_mle;
  double cond_map;
};

/// Condition numbers of A^T A (maximum likelihood) and A^T A + ratio I
/// (Gaussian-prior MAP). Reports +inf when the smallest singular value
/// vanishes and ratio is zero.
inline ConditionNumbers condition_numbers(const Matrix& a, double ratio,
                                          double rank_cutoff = 1e-12) {
  if (ratio < 0.0) throw std::invalid_argument("condition_numbers: ratio < 0");
  if (a.max_abs() == 0.0)
    throw std::invalid_argument("condition_numbers: zero matrix");
  const SvdFactorization f = svd(a, rank_cutoff);
  const double smax = f.singular_values.front();
  const double smin = f.rank == a.cols() ? f.singular_values.back() : 0.0;
  constexpr double inf = std::numeric_limits<double>::infinity();
  const double mle = smin > 0.0 ? (smax * smax) / (smin * smin) : inf;
  const double denom = smin * smin + ratio;
  const double map = denom > 0.0 ? (smax * smax + ratio) / denom : inf;
  return {mle, map};
}

//==============================================================================
// Small dense solvers
//==============================================================================

/// Gaussian elimination with partial pivoting. Throws std::domain_error on a
/// numerically singular matrix.
inline Vector solve_dense(Matrix a, Vector b) {
  const std::size_t n = a.rows();
  require_length("solve_dense square", n, a.cols());
  require_length("solve_dense rhs", n, b.size());
  const double scale = std::max(a.max_abs(), std::numeric_limits<double>::min());
  for (std::size_t k = 0; k < n; ++k) {
    std::size_t piv = k;
    for (std::size_t i = k + 1; i < n; ++i)
      if (std::abs(a(i, k)) > std::abs(a(piv, k))) piv = i;
    if (std::abs(a(piv, k)) <= 1e-14 * scale)
      throw std::domain_error("solve_dense: singular system");
    if (piv != k) {
      for (std::size_t j = 0; j < n; ++j) std::swap(a(k, j), a(piv, j));
      std::swap(b[k], b[piv]);
    }
    for (std::size_t i = k + 1; i < n; ++i) {
      const double f = a(i, k) / a(k, k);
      if (f == 0.0) continue;
      for (std::size_t j = k; j < n; ++j) a(i, j) -= f * a(k, j);
      b[i] -= f * b[k];
    }
  }
  Vector x(n);
  for (std::size_t k = n; k-- > 0;) {
    double s = b[k];
    for (std::size_t j = k + 1; j < n; ++j) s -= a(k, j) * x[j];
    x[k] = s / a(k, k);
  }
  return x;
}

}  // namespace invprob
