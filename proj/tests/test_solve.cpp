#include <gtest/gtest.h>

#include <cmath>

#include "invprob/forward.hpp"
#include "invprob/harness.hpp"
#include "invprob/learn.hpp"
#include "invprob/solve.hpp"
#include "invprob/spectral.hpp"
#include "oracles.hpp"

using namespace invprob;
using namespace invprob::solve;

namespace {

struct Quadratic {
  Matrix q;
  Vector b;
  double l;   // largest eigenvalue
  double nu;  // smallest eigenvalue
  Vector minimizer;
  double value(const Vector& u) const { return 0.5 * dot(u, q.multiply(u)) - dot(b, u); }
  Gradient grad() const {
    return [this](ConstSpan u) { return subtract(q.multiply(u), b); };
  }
};

Quadratic random_quadratic(std::uint64_t seed, std::size_t n) {
  SplitMix64 rng(seed);
  const Matrix m = random_gaussian_matrix(n, n, rng);
  Matrix q = m.transpose() * m;
  for (std::size_t i = 0; i < n; ++i) q(i, i) += 0.1 * static_cast<double>(n);
  const auto s = svd(q);
  const Vector b = rng.normal_vector(n);
  return {q, b, operator_norm(LinearMap::from_matrix(q), 3000), s.singular_values.back(),
          solve_dense(q, b)};
}

std::vector<double> objectives(const SolveResult& r) {
  std::vector<double> out;
  for (const auto& rec : r.log.records()) out.push_back(*rec.objective);
  return out;
}

bool same_trace(const SolveResult& a, const SolveResult& b) {
  if (a.u != b.u || a.log.size() != b.log.size()) return false;
  for (std::size_t i = 0; i < a.log.size(); ++i)
    if (a.log[i].k != b.log[i].k || a.log[i].step_norm != b.log[i].step_norm) return false;
  return true;
}

// Exhaustive coarse-to-fine lattice search for 1/2||u - f||^2 + alpha TV(u) on 2x2.
Vector rof_2x2_lattice(const Vector& f, double alpha) {
  auto obj = [&](const Vector& u) {
    return 0.5 * distance(u, f) * distance(u, f) + alpha * forward::total_variation(u, 2, 2);
  };
  Vector c = f;
  double h = 0.25;
  for (int level = 0; level < 10; ++level) {
    Vector best = c;
    double bv = obj(c);
    for (int a = -8; a <= 8; ++a)
      for (int b = -8; b <= 8; ++b)
        for (int d = -8; d <= 8; ++d)
          for (int e = -8; e <= 8; ++e) {
            const Vector u{c[0] + a * h, c[1] + b * h, c[2] + d * h, c[3] + e * h};
            const double v = obj(u);
            if (v < bv) bv = v, best = u;
          }
    c = best;
    h /= 4;
  }
  return c;
}

}  // namespace

TEST(GradientDescent, OneStepOnHalfSquaredNorm) {
  const auto r = gradient_descent([](ConstSpan u) { return Vector(u.begin(), u.end()); },
                                  Vector{3, -4}, 1.0, 1);
  EXPECT_EQ(r.u, (Vector{0, 0}));
}

TEST(GradientDescent, SublinearRateOnDiagonalQuadratic) {
  const Vector d{1, 4};
  auto grad = [&](ConstSpan u) { return Vector{d[0] * u[0], d[1] * u[1]}; };
  auto j = [&](ConstSpan u) { return 0.5 * (d[0] * u[0] * u[0] + d[1] * u[1] * u[1]); };
  const Vector u0{2, -1};
  const double tau = 0.25;
  RunOptions opts;
  opts.objective = j;
  const auto r = gradient_descent(grad, u0, tau, 200, opts);
  ASSERT_EQ(r.log.size(), 200u);
  for (const auto& rec : r.log.records())
    EXPECT_LE(*rec.objective, dot(u0, u0) / (2 * tau * static_cast<double>(rec.k)) + 1e-15);
}

TEST(GradientDescent, QuarticOscillatesFromCriticalStart) {
  const double tau = 0.1;
  const double u0 = 1.0 / std::sqrt(2 * tau);
  const Gradient grad = [](ConstSpan u) { return Vector{4 * u[0] * u[0] * u[0]}; };
  // The two-cycle {u0, -u0} has multiplier -5, so rounding errors grow 5x per
  // step; the first dozen iterates still sit on the cycle.
  const auto r = gradient_descent(grad, Vector{u0}, tau, 13, {1e-12});
  EXPECT_FALSE(r.converged());
  EXPECT_NEAR(r.u[0], -u0, 1e-4);  // odd number of sign flips
  for (const auto& rec : r.log.records()) EXPECT_NEAR(rec.step_norm, 2 * u0, 1e-4);
  // Run long and the iterates never approach the minimiser at 0.
  const auto long_run = gradient_descent(grad, Vector{u0}, tau, 200, {1e-12});
  EXPECT_FALSE(long_run.converged());
  EXPECT_GT(std::abs(long_run.u[0]), u0 / 2);
}

TEST(GradientDescent, RateBoundsOnRandomQuadratics) {
  for (std::uint64_t seed = 1; seed <= 50; ++seed) {
    const auto q = random_quadratic(seed, 6);
    const double tau = 1.0 / q.l;
    const Vector u0(6, 0.0);
    const double r0 = distance(u0, q.minimizer);
    const double jstar = q.value(q.minimizer);
    RunOptions opts;
    opts.objective = [&](ConstSpan u) { return q.value(Vector(u.begin(), u.end())); };
    const auto r = gradient_descent(q.grad(), u0, tau, 100, opts);
    for (const auto& rec : r.log.records())
      EXPECT_LE(*rec.objective - jstar, r0 * r0 / (2 * tau * rec.k) + 1e-10) << seed;

    // Linear rate with a step strictly below 1/L.
    const double t2 = 0.9 / q.l;
    Vector u = u0;
    for (int k = 1; k <= 60; ++k) {
      u = gradient_descent(q.grad(), u, t2, 1).u;
      const double e = distance(u, q.minimizer);
      EXPECT_LE(e * e, std::pow(1 - q.nu * t2, k) * r0 * r0 * (1 + 1e-9) + 1e-20) << seed;
    }
  }
}

TEST(GradientDescent, NonFiniteGradientKeepsLastIterate) {
  int calls = 0;
  auto grad = [&](ConstSpan u) {
    return ++calls < 3 ? Vector(u.begin(), u.end()) : Vector{std::nan("")};
  };
  const auto r = gradient_descent(grad, Vector{8}, 0.5, 10);
  EXPECT_EQ(r.reason, StopReason::non_finite);
  EXPECT_EQ(r.u, (Vector{2}));
  EXPECT_THROW(gradient_descent(grad, Vector{1}, 0.0, 1), std::invalid_argument);
}

TEST(ConjugateGradient, Examples) {
  const Vector b{4, -1, 2};
  const auto r1 = conjugate_gradient(LinearMap::identity(3), b, Vector(3, 0.0), 10, 1e-14);
  EXPECT_EQ(r1.iterations, 1u);
  EXPECT_EQ(r1.u, b);
  const auto r2 = conjugate_gradient(LinearMap::from_matrix(Matrix::diagonal(Vector{1, 2, 3})),
                                     Vector{1, 2, 3}, Vector(3, 0.0), 3, 1e-12);
  EXPECT_TRUE(r2.converged());
  for (double v : r2.u) EXPECT_NEAR(v, 1.0, 1e-10);
}

TEST(ConjugateGradient, ExactInNStepsWithOrthogonalResiduals) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto q = random_quadratic(seed, 8);
    Vector prev_r;
    double worst = 0.0;
    CgOptions opts;
    opts.observer = [&](std::size_t, ConstSpan, ConstSpan r) {
      Vector cur(r.begin(), r.end());
      if (!prev_r.empty() && norm2(cur) > 1e-9)
        worst = std::max(worst, std::abs(dot(cur, prev_r)) / (norm2(cur) * norm2(prev_r)));
      prev_r = std::move(cur);
    };
    const auto r = conjugate_gradient(LinearMap::from_matrix(q.q), q.b, Vector(8, 0.0), 8,
                                      1e-10, opts);
    EXPECT_LE(distance(r.u, q.minimizer), 1e-10 * (1 + norm2(q.minimizer))) << seed;
    EXPECT_LE(worst, 1e-8) << seed;
  }
}

TEST(ConjugateGradient, RejectsIndefiniteOperator) {
  EXPECT_THROW(conjugate_gradient(LinearMap::from_matrix(Matrix::diagonal(Vector{1, -1})),
                                  Vector{0, 1}, Vector(2, 0.0), 5, 1e-12),
               std::domain_error);
}

TEST(ProximalPoint, HalvingAndRates) {
  const Vector u0{8, -2};
  const auto r = proximal_point(prox::squared_norm_prox(), u0, 1.0, 5);
  EXPECT_EQ(r.u, (Vector{0.25, -0.0625}));

  for (double tau : {0.3, 1.0, 4.0}) {
    RunOptions opts;
    opts.objective = [](ConstSpan u) { return 0.5 * dot(u, u); };
    const auto rr = proximal_point(prox::squared_norm_prox(), u0, tau, 40, opts);
    const auto obj = objectives(rr);
    for (std::size_t i = 0; i < obj.size(); ++i) {
      const double k = static_cast<double>(i + 1);
      EXPECT_LE(obj[i], dot(u0, u0) / (2 * tau * k) + 1e-15);
      if (i > 0) EXPECT_LE(obj[i], obj[i - 1]);
    }
    Vector u = u0;
    for (int k = 1; k <= 20; ++k) {
      u = proximal_point(prox::squared_norm_prox(), u, tau, 1).u;
      EXPECT_LE(norm2(u), std::pow(1 + tau, -k) * norm2(u0) * (1 + 1e-12));
    }
  }
}

TEST(ProximalPoint, L1ObjectiveNonIncreasing) {
  SplitMix64 rng(51);
  RunOptions opts;
  opts.objective = [](ConstSpan u) { return norm1(u); };
  const auto r = proximal_point(prox::l1_prox(), rng.normal_vector(10, 3.0), 0.2, 50, opts);
  const auto obj = objectives(r);
  for (std::size_t i = 1; i < obj.size(); ++i) EXPECT_LE(obj[i], obj[i - 1]);
  EXPECT_EQ(norm1(r.u), 0.0);
}

TEST(ProximalGradient, ReducesToGdAndProximalPoint) {
  const auto q = random_quadratic(52, 5);
  const Vector u0(5, 1.0);
  EXPECT_TRUE(same_trace(proximal_gradient(q.grad(), prox::zero_prox(), u0, 0.5 / q.l, 30),
                         gradient_descent(q.grad(), u0, 0.5 / q.l, 30)));
  const Gradient zero = [](ConstSpan u) { return Vector(u.size(), 0.0); };
  EXPECT_TRUE(same_trace(proximal_gradient(zero, prox::l1_prox(0.3), u0, 0.7, 30),
                         proximal_point(prox::l1_prox(0.3), u0, 0.7, 30)));
}

TEST(ProximalGradient, LassoRateBound) {
  SplitMix64 rng(53);
  const auto a = LinearMap::from_matrix(random_gaussian_matrix(15, 10, rng));
  const Vector f = rng.normal_vector(15);
  const double alpha = 0.5;
  const double l = operator_norm(a, 2000);
  const double tau = 1.0 / (l * l * 1.0001);
  const Vector u0(10, 0.0);
  const auto ref = ista(a, f, alpha, tau, u0, 2000);
  const auto obj = lasso_objective(a, f, alpha);
  const double jstar = obj(ref.u);
  const double r0 = distance(u0, ref.u);
  const auto r = ista(a, f, alpha, tau, u0, 300);
  for (const auto& rec : r.log.records())
    EXPECT_LE(*rec.objective - jstar, r0 * r0 / (2 * tau * rec.k) + 1e-9);
}

TEST(Ista, Examples) {
  SplitMix64 rng(54);
  const auto a = LinearMap::from_matrix(random_gaussian_matrix(6, 4, rng));
  const Vector f = rng.normal_vector(6);
  const Vector u0(4, 0.0);
  EXPECT_TRUE(same_trace(ista(a, f, 0.0, 0.05, u0, 40),
                         gradient_descent(least_squares_gradient(a, f), u0, 0.05, 40)));

  const Vector g{2.0, -0.2, 0.7};
  const auto one = ista(LinearMap::identity(3), g, 0.5, 1.0, g, 1);
  EXPECT_EQ(one.u, prox::shrink(g, 0.5));

  const auto scalar = ista(LinearMap::identity(1), Vector{3.0}, 1.0, 0.5, Vector{0.0}, 200);
  EXPECT_NEAR(scalar.u[0], 2.0, 1e-8);
}

TEST(Ista, BitwiseEqualToProximalGradient) {
  SplitMix64 rng(55);
  const auto a = LinearMap::from_matrix(random_gaussian_matrix(8, 8, rng));
  const Vector f = rng.normal_vector(8), u0 = rng.normal_vector(8);
  const auto r1 = ista(a, f, 0.2, 0.02, u0, 100);
  const auto r2 = proximal_gradient(least_squares_gradient(a, f), prox::l1_prox(0.2), u0, 0.02, 100);
  EXPECT_TRUE(same_trace(r1, r2));
}

TEST(ChambollePock, ZeroCouplingIsProximalPoint) {
  const Vector u0{1.0, -2.0, 0.5};
  SolverConfig cfg;
  cfg.tau = 0.7;
  cfg.sigma = 1.0;
  cfg.max_iter = 15;
  const auto cp = chambolle_pock(prox::l1_prox(0.4), prox::datafit_conjugate_prox(Vector(2, 1.0)),
                                 LinearMap::zero(2, 3), cfg, u0, Vector(2, 0.0));
  const auto pp = proximal_point(prox::l1_prox(0.4), u0, 0.7, 15);
  EXPECT_EQ(cp.u, pp.u);
}

TEST(ChambollePock, RejectsStepViolation) {
  SolverConfig cfg;
  cfg.tau = 1.0;
  cfg.sigma = 1.0;
  EXPECT_THROW(chambolle_pock(prox::zero_prox(), prox::zero_prox(),
                              LinearMap::from_matrix(Matrix::diagonal(Vector{2, 1})), cfg,
                              Vector(2, 0.0), Vector(2, 0.0)),
               std::invalid_argument);
  EXPECT_THROW(SolverConfig::chambolle_pock(1.0, 1.0, 1.0, 10), std::invalid_argument);
}

TEST(ChambollePock, TikhonovMatchesCg) {
  SplitMix64 rng(56);
  const Matrix m = random_gaussian_matrix(10, 10, rng);
  const auto a = LinearMap::from_matrix(m);
  const Vector f = rng.normal_vector(10);
  const double alpha = 1.0;
  auto cfg = SolverConfig::chambolle_pock(operator_norm(a, 500) * 1.01, 20000);
  cfg.tol = 1e-13;
  const auto cp = chambolle_pock(prox::squared_norm_prox(alpha), prox::datafit_conjugate_prox(f), a,
                                 cfg, Vector(10, 0.0), Vector(10, 0.0));
  SolverConfig cg;
  cg.max_iter = 200;
  cg.tol = 1e-12;
  const auto ref = spectral::tikhonov_solve_cg(a, f, alpha, cg);
  for (std::size_t i = 0; i < 10; ++i) EXPECT_NEAR(cp.u[i], ref.u[i], 1e-6);
  for (const auto& rec : cp.log.records()) EXPECT_TRUE(std::isfinite(rec.step_norm));
}

TEST(TvReconstruct, PureDataFitAndConstants) {
  SplitMix64 rng(57);
  const Vector f = rng.normal_vector(16);
  const auto id = LinearMap::identity(16);
  const auto cfg = tv_default_config(id, 4, 4, 3000);
  const auto r0 = tv_reconstruct(id, f, 4, 4, 0.0, cfg);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(r0.u[i], f[i], 1e-6);
  const Vector c(16, 0.37);
  for (double alpha : {0.01, 1.0, 100.0}) {
    const auto r = tv_reconstruct(id, c, 4, 4, alpha, cfg);
    for (double v : r.u) EXPECT_NEAR(v, 0.37, 1e-6);
  }
}

TEST(TvReconstruct, MatchesLatticeMinimiserOn2x2) {
  const Vector f{1.0, 0.2, -0.3, 0.6};
  const auto id = LinearMap::identity(4);
  for (double alpha : {0.2, 2.0}) {
    auto cfg = tv_default_config(id, 2, 2, 20000);
    cfg.tol = 1e-14;
    const auto r = tv_reconstruct(id, f, 2, 2, alpha, cfg);
    const Vector ref = rof_2x2_lattice(f, alpha);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(r.u[i], ref[i], 1e-3) << alpha;
  }
}

TEST(Admm, ZeroAlphaReturnsData) {
  SplitMix64 rng(58);
  const Vector f = rng.normal_vector(16);
  const auto r = admm(LinearMap::identity(16), f, 4, 4, 0.0, 1.0, 50);
  for (std::size_t i = 0; i < 16; ++i) EXPECT_NEAR(r.u[i], f[i], 1e-8);
}

TEST(Admm, AgreesWithChambollePockOnPhantom) {
  const std::size_t n = 8;
  const auto img = harness::phantom_ellipses(n);
  const Vector f = harness::add_noise(img.values, 0.05, 3, harness::NoiseMode::gaussian_sigma);
  const auto id = LinearMap::identity(n * n);
  const double alpha = 0.1;
  const auto obj = rof_objective(id, f, n, n, alpha);
  const auto cp = tv_reconstruct(id, f, n, n, alpha, tv_default_config(id, n, n, 2000));
  const auto ad = admm(id, f, n, n, alpha, 2.0, 2000);
  EXPECT_LE(obj(cp.u), obj(ad.u) + 1e-4);
  EXPECT_LE(obj(ad.u), obj(cp.u) + 1e-4);
  EXPECT_LE(std::abs(obj(cp.u) - obj(ad.u)), 1e-3);
  ASSERT_TRUE(ad.log.back().residual.has_value());
  EXPECT_LT(*ad.log.back().residual, 1e-4);
  for (double v : cp.u) EXPECT_LT(std::abs(v), 10.0);
}

TEST(PnpPgd, IdentityAndProxDenoisers) {
  const auto q = random_quadratic(59, 8);
  const Vector u0(8, 0.5);
  const double tau = 0.5 / q.l;
  EXPECT_TRUE(same_trace(pnp_pgd(q.grad(), [](ConstSpan v) { return Vector(v.begin(), v.end()); },
                                 u0, tau, 25),
                         gradient_descent(q.grad(), u0, tau, 25)));
  const auto w = prox::haar_transform(8);
  const double t = 0.3;
  auto den = [&](ConstSpan v) { return prox::prox_wavelet_l1(v, tau * t, w); };
  EXPECT_TRUE(same_trace(pnp_pgd(q.grad(), den, u0, tau, 25),
                         proximal_gradient(q.grad(), prox::wavelet_l1_prox(w, t), u0, tau, 25)));
}

TEST(PnpPgd, AveragedNetworkDenoiserHasMonotoneResidual) {
  // Deconvolution on a 4x4 image with a 3x3 Gaussian blur.
  const std::size_t side = 4, n = side * side;
  const auto a = forward::convolution_operator(side, side, forward::gaussian_kernel(0.8, 1));
  SplitMix64 rng(60);

  // Train a small denoiser on noisy/clean pairs, then cap every layer's
  // spectral norm at 1 so the ReLU network is 1-Lipschitz.
  learn::Dataset data;
  for (int s = 0; s < 200; ++s) {
    Vector clean = rng.uniform_vector(n, 0.0, 1.0);
    Vector noisy = add(clean, rng.normal_vector(n, 0.1));
    data.push_back({std::move(noisy), std::move(clean)});
  }
  auto net = learn::initialize_network({n, n, n}, {learn::Activation::relu(), learn::Activation::identity()}, 61);
  net = learn::sgd_train(net, data, 20, 0.05, 20, 62).net;
  learn::normalize_layers(net, 1.0);
  const auto d = learn::averaged_denoiser([net](ConstSpan v) { return learn::predict(net, v); });

  std::vector<std::pair<Vector, Vector>> pairs;
  for (int p = 0; p < 10000; ++p) pairs.emplace_back(rng.normal_vector(n), rng.normal_vector(n));
  EXPECT_LE(d.probe(pairs), 1.0 + 1e-12);

  const Vector u_true = rng.uniform_vector(n, 0.0, 1.0);
  const Vector f = add(a.apply(u_true), rng.normal_vector(n, 0.01));
  const double l = operator_norm(a, 500);
  const auto r = pnp_pgd(least_squares_gradient(a, f), d, Vector(n, 0.0), 1.0 / (l * l), 200);
  const auto& recs = r.log.records();
  ASSERT_GE(recs.size(), 20u);
  for (std::size_t k = 5; k < recs.size(); ++k)
    EXPECT_LE(recs[k].step_norm, recs[k - 1].step_norm * (1 + 1e-9) + 1e-15) << k;
}

TEST(IterationLog, CountersStrictlyIncrease) {
  IterationLog log;
  log.push({1, std::nullopt, std::nullopt, 0.0});
  EXPECT_THROW(log.push({1, std::nullopt, std::nullopt, 0.0}), std::logic_error);
  RunOptions opts;
  opts.log_every = 7;
  const auto r = gradient_descent([](ConstSpan u) { return scaled(0.1, u); }, Vector{1}, 1.0, 30, opts);
  std::vector<std::size_t> ks;
  for (const auto& rec : r.log.records()) ks.push_back(rec.k);
  EXPECT_EQ(ks, (std::vector<std::size_t>{7, 14, 21, 28, 30}));
}
