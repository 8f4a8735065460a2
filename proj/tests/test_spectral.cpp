#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "invprob/spectral.hpp"
#include "oracles.hpp"

using namespace invprob;
using namespace invprob::spectral;

namespace {

// Solves the normal equations A^T A u = A^T f by hand-rolled Cramer's rule
// (3x3), independent of the library's elimination.
oracle::Vec normal_equation_solve_3(const Matrix& a, const Vector& f) {
  oracle::Mat m(3, oracle::Vec(3, 0.0));
  oracle::Vec b(3, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    for (std::size_t j = 0; j < 3; ++j)
      for (std::size_t r = 0; r < a.rows(); ++r) m[i][j] += a(r, i) * a(r, j);
    for (std::size_t r = 0; r < a.rows(); ++r) b[i] += a(r, i) * f[r];
  }
  auto det = [](const oracle::Mat& x) {
    return x[0][0] * (x[1][1] * x[2][2] - x[1][2] * x[2][1]) -
           x[0][1] * (x[1][0] * x[2][2] - x[1][2] * x[2][0]) +
           x[0][2] * (x[1][0] * x[2][1] - x[1][1] * x[2][0]);
  };
  const double d = det(m);
  oracle::Vec u(3);
  for (int k = 0; k < 3; ++k) {
    oracle::Mat mk = m;
    for (int i = 0; i < 3; ++i) mk[i][k] = b[i];
    u[k] = det(mk) / d;
  }
  return u;
}

solve::SolverConfig cg_config(std::size_t iters, double tol) {
  solve::SolverConfig c;
  c.max_iter = iters;
  c.tol = tol;
  return c;
}

}  // namespace

TEST(SpectralFilter, Coefficients) {
  EXPECT_DOUBLE_EQ(SpectralFilter::pseudo_inverse().coefficient(4.0, 0), 0.25);
  EXPECT_DOUBLE_EQ(SpectralFilter::tikhonov(2.0).coefficient(1.0, 0), 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(SpectralFilter::tsvd(1.0).coefficient(2.0, 0), 0.5);
  EXPECT_DOUBLE_EQ(SpectralFilter::tsvd(1.0).coefficient(0.5, 0), 0.0);
  EXPECT_DOUBLE_EQ(SpectralFilter::learned({3.0, 7.0}).coefficient(123.0, 1), 7.0);
  EXPECT_THROW(SpectralFilter::tikhonov(0.0), std::invalid_argument);
  EXPECT_THROW(SpectralFilter::learned({1.0, std::nan("")}), std::invalid_argument);
}

TEST(PseudoInverse, Examples) {
  const Vector f{1.5, -2.0, 0.25};
  const Vector u = pseudo_inverse_apply(svd(Matrix::identity(3)), f);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(u[i], f[i], 1e-15);
  const Vector v = pseudo_inverse_apply(svd(Matrix::diagonal(Vector{1, 0})), Vector{2, 5});
  EXPECT_NEAR(v[0], 2.0, 1e-15);
  EXPECT_EQ(v[1], 0.0);
}

TEST(PseudoInverse, MatchesNormalEquationsAndResidualIsOrthogonal) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SplitMix64 rng(seed);
    const Matrix a = random_gaussian_matrix(4, 3, rng);
    const Vector f = rng.normal_vector(4);
    const Vector u = pseudo_inverse_apply(svd(a), f);
    const auto ref = normal_equation_solve_3(a, f);
    for (std::size_t i = 0; i < 3; ++i) EXPECT_NEAR(u[i], ref[i], 1e-8);
    const Vector r = subtract(a.multiply(u), f);
    for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(dot(r, a.column(j)), 0.0, 1e-8);
  }
}

TEST(MoorePenrose, Examples) {
  const auto r1 = moore_penrose_check(Matrix::identity(3), Matrix::identity(3), 1e-12);
  EXPECT_TRUE(r1.passed);
  EXPECT_EQ(r1.worst(), 0.0);
  const auto r2 =
      moore_penrose_check(Matrix::diagonal(Vector{2, 0}), Matrix::diagonal(Vector{0.5, 0}), 1e-12);
  EXPECT_TRUE(r2.passed);
  SplitMix64 rng(31);
  const Matrix a = random_gaussian_matrix(5, 3, rng);
  const auto r3 = moore_penrose_check(a, pseudo_inverse_matrix(svd(a)), 1e-9);
  EXPECT_TRUE(r3.passed);
  EXPECT_LE(r3.worst(), 1e-9);
  // A plain transpose is not a generalized inverse of a random matrix.
  EXPECT_FALSE(moore_penrose_check(a, a.transpose(), 1e-9).passed);
  EXPECT_THROW(moore_penrose_check(a, a, 1e-9), std::invalid_argument);
}

TEST(Picard, Examples) {
  SplitMix64 rng(32);
  const Matrix a = random_gaussian_matrix(6, 4, rng);
  const auto s = svd(a);
  const auto p1 = picard_diagnostic(s, scaled(s.singular_values[0], s.left_vectors[0]));
  EXPECT_NEAR(p1[0].ratio, 1.0, 1e-12);
  for (std::size_t i = 1; i < p1.size(); ++i) EXPECT_NEAR(p1[i].ratio, 0.0, 1e-12);

  const Vector u = rng.normal_vector(4);
  const auto p2 = picard_diagnostic(s, a.multiply(u));
  double partial = 0.0;
  for (std::size_t i = 0; i < p2.size(); ++i) {
    EXPECT_NEAR(p2[i].ratio, std::abs(dot(u, s.right_vectors[i])), 1e-10);
    EXPECT_DOUBLE_EQ(p2[i].sigma, s.singular_values[i]);
    partial += p2[i].ratio * p2[i].ratio;
    EXPECT_NEAR(p2[i].partial_sum, partial, 1e-12 * (1 + partial));
  }

  // A vector orthogonal to range(A): remove every left singular component.
  Vector g = rng.normal_vector(6);
  for (const auto& v : s.left_vectors) g = subtract(g, scaled(dot(g, v), v));
  for (const auto& e : picard_diagnostic(s, g)) EXPECT_NEAR(e.ratio, 0.0, 1e-12);
}

TEST(FilterApply, TikhonovLimitAndNormBound) {
  const auto id = svd(Matrix::identity(2));
  const Vector f{0.3, -1.7};
  const Vector u = filter_apply(id, SpectralFilter::tikhonov(1e-12), f);
  for (std::size_t i = 0; i < 2; ++i) EXPECT_NEAR(u[i], f[i], 1e-6);

  SplitMix64 rng(33);
  const auto s = svd(random_gaussian_matrix(8, 8, rng));
  for (double alpha : {1e-4, 1e-2, 1.0}) {
    for (int t = 0; t < 50; ++t) {
      const Vector g = rng.normal_vector(8);
      EXPECT_LE(norm2(filter_apply(s, SpectralFilter::tikhonov(alpha), g)),
                norm2(g) / (2.0 * std::sqrt(alpha)) * (1 + 1e-12));
    }
  }
}

TEST(FilterApply, TsvdKeepsLeadingComponent) {
  const auto s = svd(Matrix::diagonal(Vector{3, 1}));
  const Vector u = filter_apply(s, SpectralFilter::tsvd(2.0), Vector{6, 5});
  EXPECT_NEAR(u[0], 2.0, 1e-15);
  EXPECT_EQ(u[1], 0.0);
}

TEST(FilterApply, PseudoInverseKindAndLinearity) {
  SplitMix64 rng(34);
  const auto s = svd(random_gaussian_matrix(7, 5, rng));
  const Vector f = rng.normal_vector(7), g = rng.normal_vector(7);
  const Vector a = filter_apply(s, SpectralFilter::pseudo_inverse(), f);
  const Vector b = pseudo_inverse_apply(s, f);
  for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(a[i], b[i], 1e-13);
  for (const auto& filt : {SpectralFilter::tikhonov(0.1), SpectralFilter::tsvd(0.5),
                           SpectralFilter::learned(rng.normal_vector(5))}) {
    const Vector lhs = filter_apply(s, filt, add(scaled(2.0, f), scaled(-0.5, g)));
    const Vector rhs = add(scaled(2.0, filter_apply(s, filt, f)), scaled(-0.5, filter_apply(s, filt, g)));
    for (std::size_t i = 0; i < 5; ++i) EXPECT_NEAR(lhs[i], rhs[i], 1e-12);
  }
  EXPECT_THROW(filter_apply(s, SpectralFilter::learned({1.0, 2.0}), f), dimension_error);
}

TEST(TikhonovCg, Examples) {
  const auto r1 = tikhonov_solve_cg(LinearMap::identity(2), Vector{2, 4}, 1.0, cg_config(50, 1e-12));
  EXPECT_NEAR(r1.u[0], 1.0, 1e-12);
  EXPECT_NEAR(r1.u[1], 2.0, 1e-12);
  const auto r2 = tikhonov_solve_cg(LinearMap::from_matrix(Matrix::diagonal(Vector{2, 1})),
                                    Vector{5, 2}, 1.0, cg_config(50, 1e-12));
  EXPECT_NEAR(r2.u[0], 2.0, 1e-12);
  EXPECT_NEAR(r2.u[1], 1.0, 1e-12);
  EXPECT_TRUE(r2.converged());
  EXPECT_THROW(tikhonov_solve_cg(LinearMap::identity(2), Vector{1, 1}, 0.0, cg_config(5, 0)),
               std::invalid_argument);
}

TEST(TikhonovCg, MatchesSpectralFilterOnRandom20x20) {
  SplitMix64 rng(35);
  const Matrix a = random_gaussian_matrix(20, 20, rng);
  const Vector f = rng.normal_vector(20);
  const auto r = tikhonov_solve_cg(LinearMap::from_matrix(a), f, 0.5, cg_config(500, 1e-12));
  ASSERT_TRUE(r.converged());
  const Vector ref = filter_apply(svd(a), SpectralFilter::tikhonov(0.5), f);
  for (std::size_t i = 0; i < 20; ++i) EXPECT_NEAR(r.u[i], ref[i], 1e-6);
  const Vector res = subtract(normal_operator(LinearMap::from_matrix(a), 0.5).apply(r.u),
                              a.multiply_transpose(f));
  EXPECT_LE(norm2(res), 1e-12);
}

TEST(TikhonovCg, CapReturnsNonConverged) {
  SplitMix64 rng(36);
  const Matrix a = random_gaussian_matrix(30, 30, rng);
  const auto r = tikhonov_solve_cg(LinearMap::from_matrix(a), rng.normal_vector(30), 1e-6,
                                   cg_config(2, 1e-14));
  EXPECT_FALSE(r.converged());
  EXPECT_EQ(r.u.size(), 30u);
}

TEST(MapGaussian, Examples) {
  SplitMix64 rng(37);
  const Matrix a = random_gaussian_matrix(4, 4, rng);
  const Vector x = rng.normal_vector(4);
  const Vector u = map_gaussian_closed_form(a, a.multiply(x), 0.0, Vector(4, 0.0));
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(u[i], x[i], 1e-9);

  const Vector s1 = map_gaussian_closed_form(Matrix::identity(1), Vector{2}, 1.0, Vector{0});
  EXPECT_NEAR(s1[0], 1.0, 1e-15);

  const Matrix d = Matrix::diagonal(Vector{2, 0.5});
  const Vector f{1, 3}, mu{-1, 4};
  double prev = std::numeric_limits<double>::infinity();
  // Distance to the prior mean scales like (s^2 + 10 r) / (s^2 + r) per step,
  // which reaches 10x once r dominates s^2 = 4.
  for (double ratio : {1e4, 1e5, 1e6, 1e7}) {
    const double dist = distance(map_gaussian_closed_form(d, f, ratio, mu), mu);
    if (std::isfinite(prev)) EXPECT_LE(dist * 10.0, prev * 1.01);
    prev = dist;
  }
  EXPECT_THROW(map_gaussian_closed_form(Matrix::diagonal(Vector{1, 0}), Vector{1, 1}, 0.0,
                                        Vector{0, 0}),
               std::domain_error);
}

TEST(MapGaussian, CoincidesWithTikhonovCgAtZeroMean) {
  SplitMix64 rng(38);
  const Matrix a = random_gaussian_matrix(12, 8, rng);
  const Vector f = rng.normal_vector(12);
  const Vector u = map_gaussian_closed_form(a, f, 0.3, Vector(8, 0.0));
  const auto r = tikhonov_solve_cg(LinearMap::from_matrix(a), f, 0.3, cg_config(200, 1e-13));
  for (std::size_t i = 0; i < 8; ++i) EXPECT_NEAR(u[i], r.u[i], 1e-8);
}

TEST(MseOptimalFilter, Examples) {
  const auto s = svd(Matrix::diagonal(Vector{2, 1}));
  const auto f0 = mse_optimal_filter(s, {{0, 0}, {1, 1}});
  EXPECT_DOUBLE_EQ(f0.theta()[0], 0.5);
  EXPECT_DOUBLE_EQ(f0.theta()[1], 1.0);

  const auto f1 = mse_optimal_filter(s, {{1, 4}, {1, 1}});
  EXPECT_NEAR(f1.theta()[0], 2.0 / 5.0, 1e-15);
  EXPECT_NEAR(f1.theta()[1], 1.0 / 5.0, 1e-15);

  // Brute-force scalar MSE: E (theta (sigma x + e) - x)^2 = (theta sigma - 1)^2 Pi + theta^2 Delta.
  const double sig[2] = {2, 1}, del[2] = {1, 4};
  for (int i = 0; i < 2; ++i) {
    double best = 0, best_mse = 1e300;
    for (int k = 0; k <= 200000; ++k) {
      const double th = k * 1e-5;
      const double mse = (th * sig[i] - 1) * (th * sig[i] - 1) + th * th * del[i];
      if (mse < best_mse) best_mse = mse, best = th;
    }
    EXPECT_NEAR(f1.theta()[i], best, 1e-5);
  }

  const double d2 = 0.09;
  const auto f2 = mse_optimal_filter(s, {{d2, d2}, {1, 1}});
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_NEAR(f2.theta()[i], SpectralFilter::tikhonov(d2).coefficient(s.singular_values[i], i), 1e-15);

  const auto f3 = mse_optimal_filter(s, {{1, 1}, {0, 1}});
  EXPECT_EQ(f3.theta()[0], 0.0);
  EXPECT_THROW(mse_optimal_filter(s, {{-1, 0}, {1, 1}}), std::invalid_argument);
  EXPECT_THROW(mse_optimal_filter(s, {{0, 0}, {1, -1}}), std::invalid_argument);
}

TEST(MseOptimalFilter, BoundedByPseudoInverseAndMonotone) {
  const auto s = svd(Matrix::diagonal(Vector{3, 1, 0.2}));
  double prev[3] = {1e300, 1e300, 1e300};
  for (double ratio : {0.0, 0.01, 0.1, 1.0, 10.0}) {
    const auto f = mse_optimal_filter(s, {Vector(3, ratio), Vector(3, 1.0)});
    for (std::size_t i = 0; i < 3; ++i) {
      EXPECT_LE(f.theta()[i], 1.0 / s.singular_values[i] * (1 + 1e-15));
      EXPECT_LE(f.theta()[i], prev[i]);
      prev[i] = f.theta()[i];
    }
  }
}

TEST(MseOptimalFilter, ErrorDecreasesWithNoiseLevel) {
  const Vector sig{1.0, 0.5, 0.2, 0.05};
  const Vector pi{1.0, 0.5, 0.25, 0.125};
  const auto s = svd(Matrix::diagonal(sig));
  auto mean_error = [&](double delta, std::uint64_t seed) {
    const auto filt = mse_optimal_filter(s, {Vector(4, delta * delta), pi});
    SplitMix64 rng(seed);
    double total = 0.0;
    const int samples = 4000;
    for (int k = 0; k < samples; ++k) {
      Vector u(4), f(4);
      for (std::size_t i = 0; i < 4; ++i) {
        u[i] = std::sqrt(pi[i]) * rng.normal();
        f[i] = sig[i] * u[i] + delta * rng.normal();
      }
      total += distance(filter_apply(s, filt, f), u);
    }
    return total / samples;
  };
  auto median3 = [&](double delta) {
    double v[3] = {mean_error(delta, 1), mean_error(delta, 2), mean_error(delta, 3)};
    std::sort(v, v + 3);
    return v[1];
  };
  const double first = median3(1.0);
  double prev = first;
  for (int n = 1; n <= 12; ++n) {
    const double e = median3(std::ldexp(1.0, -n));
    EXPECT_LT(e, prev) << n;
    prev = e;
  }
  // The noiseless error is zero; the sequence must approach it.
  EXPECT_LT(prev, 0.02 * first);
}

TEST(Morozov, SlackConstraintReturnsUpperBound) {
  const Matrix a = Matrix::diagonal(Vector{1, 0.5});
  const Vector f{1, 1};
  const auto op = LinearMap::from_matrix(a);
  auto solver = [&](double al) { return filter_apply(svd(a), SpectralFilter::tikhonov(al), f); };
  const auto r = morozov_select_alpha(solver, op, f, 10.0, 1.0);
  EXPECT_DOUBLE_EQ(r.alpha, 1e4);
  EXPECT_TRUE(r.monotone);
}

TEST(Morozov, ScalarDiscrepancyWindowAndMonotoneGrid) {
  const double delta = 0.05;
  const Vector fd{1.0 + delta};
  const auto op = LinearMap::identity(1);
  auto solver = [&](double al) { return Vector{fd[0] / (1.0 + al)}; };
  for (double mu : {1.0, 1.5}) {
    const auto r = morozov_select_alpha(solver, op, fd, delta, mu);
    EXPECT_GE(r.discrepancy, 0.5 * mu * delta);
    EXPECT_LE(r.discrepancy, mu * delta);
    EXPECT_NEAR(r.discrepancy, distance(op.apply(r.u), fd), 1e-15);
    EXPECT_TRUE(r.monotone);
    // Closed form: alpha fd / (1 + alpha) = mu delta.
    const double exact = mu * delta / (fd[0] - mu * delta);
    EXPECT_NEAR(r.alpha, exact, 1e-6 * exact);
    for (std::size_t j = 1; j < r.grid_discrepancy.size(); ++j)
      EXPECT_GE(r.grid_discrepancy[j], r.grid_discrepancy[j - 1]);
  }
}

TEST(Morozov, GridShapeAndErrors) {
  const Vector g = morozov_grid({});
  EXPECT_EQ(g.size(), 12u * 13u + 1u);
  EXPECT_DOUBLE_EQ(g.front(), 1e-8);
  EXPECT_NEAR(g.back(), 1e4, 1e-8);
  const auto op = LinearMap::identity(1);
  auto bad = [](double) { return Vector{0.0}; };
  EXPECT_THROW(morozov_select_alpha(bad, op, Vector{1.0}, 0.1, 1.0), std::runtime_error);
  EXPECT_THROW(morozov_select_alpha(bad, op, Vector{1.0}, 0.1, 0.9), std::invalid_argument);
  EXPECT_THROW(morozov_select_alpha(bad, op, Vector{1.0}, 0.0, 1.0), std::invalid_argument);
}
