#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <limits>
#include <map>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "experiments.hpp"
#include "forward.hpp"
#include "harness.hpp"
#include "learn.hpp"
#include "linop.hpp"
#include "prox.hpp"
#include "solve.hpp"
#include "spectral.hpp"

/// Acceptance suite: one check per numbered criterion, each printed as a
/// single PASS/FAIL line. The oracles here are deliberately separate from the
/// library code paths they check.
namespace invprob::selftest {

struct CriterionResult {
  int id = 0;
  std::string name;
  bool passed = false;
  std::string detail;

  std::string line() const {
    char buf[16];
    std::snprintf(buf, sizeof buf, "%02d", id);
    return std::string(passed ? "PASS " : "FAIL ") + buf + " " + name + ": " + detail;
  }
};

struct Report {
  std::vector<CriterionResult> results;

  bool all_passed() const {
    return std::all_of(results.begin(), results.end(),
                       [](const CriterionResult& r) { return r.passed; });
  }
  std::string text() const {
    std::string s;
    for (const auto& r : results) s += r.line() + "\n";
    return s;
  }
};

/// In-process CLI entry point: (args without program name, stdout, stderr).
using CliRunner =
    std::function<int(const std::vector<std::string>&, std::ostream&, std::ostream&)>;

namespace detail {

inline std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

inline CriterionResult make(int id, std::string name, bool ok, std::string detail) {
  return {id, std::move(name), ok, std::move(detail)};
}

template <class F>
CriterionResult guarded(int id, const std::string& name, F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    return make(id, name, false, std::string("exception: ") + e.what());
  }
}

/// Cyclic coordinate descent for 1/2 ||A u - f||^2 + alpha ||u||_1.
inline Vector lasso_coordinate_descent(const Matrix& a, ConstSpan f, double alpha) {
  const std::size_t m = a.rows(), n = a.cols();
  Vector u(n, 0.0), r(f.begin(), f.end()), col2(n, 0.0);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < m; ++i) col2[j] += a(i, j) * a(i, j);
  for (int sweep = 0; sweep < 200000; ++sweep) {
    double change = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      double rho = 0.0;
      for (std::size_t i = 0; i < m; ++i) rho += a(i, j) * (r[i] + a(i, j) * u[j]);
      const double mag = std::max(std::abs(rho) - alpha, 0.0);
      const double nu = (rho < 0 ? -mag : mag) / col2[j];
      const double d = nu - u[j];
      if (d != 0.0) {
        for (std::size_t i = 0; i < m; ++i) r[i] -= a(i, j) * d;
        u[j] = nu;
      }
      change = std::max(change, std::abs(d));
    }
    if (change < 1e-15) break;
  }
  return u;
}

/// Direct evaluation of 1/2 ||u - f||^2 + alpha (|u1-u0| + |u3-u2| + |u2-u0| + |u3-u1|)
/// on a 2 x 2 image stored row-major.
inline double rof2x2(const double* u, const double* f, double alpha) {
  double s = 0.0;
  for (int i = 0; i < 4; ++i) s += 0.5 * (u[i] - f[i]) * (u[i] - f[i]);
  const double tv = std::abs(u[1] - u[0]) + std::abs(u[3] - u[2]) + std::abs(u[2] - u[0]) +
                    std::abs(u[3] - u[1]);
  return s + alpha * tv;
}

/// Coarse-to-fine exhaustive lattice search for the 2 x 2 ROF minimum.
inline double rof2x2_lattice_min(const double* f, double alpha) {
  double centre[4];
  for (int i = 0; i < 4; ++i) centre[i] = f[i];
  double h = 0.1;
  const int R = 10;
  double best = rof2x2(centre, f, alpha);
  for (int level = 0; level < 8; ++level) {
    double arg[4] = {centre[0], centre[1], centre[2], centre[3]};
    double u[4];
    for (int a = -R; a <= R; ++a)
      for (int b = -R; b <= R; ++b)
        for (int c = -R; c <= R; ++c)
          for (int d = -R; d <= R; ++d) {
            u[0] = centre[0] + a * h;
            u[1] = centre[1] + b * h;
            u[2] = centre[2] + c * h;
            u[3] = centre[3] + d * h;
            const double v = rof2x2(u, f, alpha);
            if (v < best) {
              best = v;
              std::copy(u, u + 4, arg);
            }
          }
    std::copy(arg, arg + 4, centre);
    h /= 4.0;
  }
  return best;
}

/// Central-difference gradient of the squared-error loss in the parameters.
inline Vector finite_difference_gradient(const learn::Network& net, ConstSpan x, ConstSpan y,
                                         double step) {
  learn::Network probe = net;
  const Vector p0 = net.parameters();
  Vector g(p0.size());
  Vector p = p0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = p0[i] + step;
    probe.set_parameters(p);
    const double lp = learn::squared_error(learn::predict(probe, x), y);
    p[i] = p0[i] - step;
    probe.set_parameters(p);
    const double lm = learn::squared_error(learn::predict(probe, x), y);
    p[i] = p0[i];
    g[i] = (lp - lm) / (2.0 * step);
  }
  return g;
}

/// Smallest |pre-activation| over relu / prelu layers.
inline double kink_distance(const learn::Network& net, ConstSpan x) {
  const auto fr = learn::forward(net, x);
  double d = std::numeric_limits<double>::infinity();
  for (std::size_t l = 0; l < net.depth(); ++l) {
    const auto k = net.layers()[l].act.kind;
    if (k != learn::Activation::Kind::relu && k != learn::Activation::Kind::prelu) continue;
    for (double w : fr.cache.w[l]) d = std::min(d, std::abs(w));
  }
  return d;
}

/// Symmetric positive definite quadratic 1/2 u^T Q u - b^T u.
struct Quadratic {
  Matrix q;
  Vector b;
  Vector u_star;
  double j_star;
  double L;
  double nu;

  double value(ConstSpan u) const { return 0.5 * dot(u, q.multiply(u)) - dot(b, u); }
};

inline Quadratic make_quadratic(std::uint64_t seed, std::size_t n) {
  SplitMix64 rng(seed);
  const Matrix m = random_gaussian_matrix(n, n, rng);
  Matrix q = m.transpose() * m;
  for (double& x : q.data()) x /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) q(i, i) += 0.1;
  Quadratic quad{q, rng.normal_vector(n), {}, 0.0, 0.0, 0.0};
  quad.u_star = solve_dense(q, quad.b);
  quad.j_star = quad.value(quad.u_star);
  quad.L = operator_norm(LinearMap::from_matrix(q), 3000, seed);
  const auto s = svd(q);
  quad.nu = s.singular_values.back();
  return quad;
}

}  // namespace detail

//==============================================================================
// Criteria
//==============================================================================

inline CriterionResult criterion01() {
  const std::string name = "adjoint identities";
  return detail::guarded(1, name, [&] {
    std::vector<std::pair<std::string, LinearMap>> ops;
    ops.emplace_back("integration", forward::integration_operator(64));
    ops.emplace_back("backward_difference", forward::backward_difference_operator(64));
    SplitMix64 krng(99);
    const forward::Kernel2D k(2, krng.uniform_vector(25, -1.0, 1.0));
    for (auto rule : {forward::BoundaryRule::zero, forward::BoundaryRule::circular,
                      forward::BoundaryRule::reflect})
      ops.emplace_back("convolution/" + forward::to_string(rule),
                       forward::convolution_operator(12, 10, k, rule));
    const auto grid = forward::Grid2D::centered(16, 16, 2.0 / 16.0);
    ops.emplace_back("radon16", forward::radon_operator(grid, forward::uniform_angles(12),
                                                        forward::symmetric_offsets(23, 0.125)));
    ops.emplace_back("grad2d", forward::gradient_operator(8, 8));
    double worst = 0.0;
    std::string worst_name;
    SplitMix64 rng(1);
    for (const auto& [nm, op] : ops)
      for (int t = 0; t < 100; ++t) {
        const Vector x = rng.normal_vector(op.cols());
        const Vector y = rng.normal_vector(op.rows());
        const double m = adjoint_mismatch(op, x, y);
        if (m > worst) {
          worst = m;
          worst_name = nm;
        }
      }
    return detail::make(1, name, worst <= 1e-10,
                        std::to_string(ops.size()) + " operators x 100 pairs, worst " +
                            detail::sci(worst) + " (" + worst_name + "), bound 1e-10");
  });
}

inline CriterionResult criterion02() {
  const std::string name = "integration o backward_difference = I";
  return detail::guarded(2, name, [&] {
    double worst = 0.0;
    for (std::size_t n : {2u, 17u, 128u, 512u}) {
      const auto a = forward::integration_operator(n);
      const auto d = forward::backward_difference_operator(n);
      const Matrix ad = compose(a, d).to_dense();
      const Matrix da = compose(d, a).to_dense();
      worst = std::max(worst, (ad - Matrix::identity(n)).max_abs());
      worst = std::max(worst, (da - Matrix::identity(n)).max_abs());
    }
    return detail::make(2, name, worst <= 1e-12,
                        "N in {2,17,128,512}, max entry deviation " + detail::sci(worst) +
                            ", bound 1e-12");
  });
}

inline CriterionResult criterion03() {
  const std::string name = "ill-conditioning of differentiation";
  return detail::guarded(3, name, [&] {
    bool ok = true;
    std::string d;
    for (std::size_t n : {16u, 64u, 256u}) {
      const Matrix a = forward::integration_operator(n).to_dense();
      const auto c = condition_numbers(a, 0.0);
      const double cond = std::sqrt(c.cond_mle);
      ok = ok && cond > static_cast<double>(n - 1);
      d += "cond(N=" + std::to_string(n) + ")=" + detail::sci(cond) + " ";
    }
    const auto nd = experiments::run_numdiff({});
    ok = ok && nd.linf_ratio > 10.0;
    d += "linf ratio k=64/k=1 " + detail::sci(nd.linf_ratio) + " (> 10)";
    return detail::make(3, name, ok, d);
  });
}

inline CriterionResult criterion04() {
  const std::string name = "Moore-Penrose equations";
  return detail::guarded(4, name, [&] {
    double worst = 0.0;
    bool ok = true;
    for (std::uint64_t s = 1; s <= 20; ++s) {
      SplitMix64 rng(s);
      const Matrix a = random_gaussian_matrix(6, 4, rng);
      const auto rep = spectral::moore_penrose_check(
          a, spectral::pseudo_inverse_matrix(svd(a)), 1e-9);
      ok = ok && rep.passed;
      worst = std::max(worst, rep.worst());
    }
    return detail::make(4, name, ok,
                        "20 random 6x4, worst deviation " + detail::sci(worst) + ", bound 1e-9");
  });
}

inline CriterionResult criterion05() {
  const std::string name = "Tikhonov consistency triangle";
  return detail::guarded(5, name, [&] {
    double worst = 0.0;
    for (std::uint64_t s = 1; s <= 5; ++s) {
      SplitMix64 rng(100 + s);
      const Matrix a = random_gaussian_matrix(12, 12, rng);
      const Vector f = rng.normal_vector(12);
      const auto fac = svd(a);
      const auto op = LinearMap::from_matrix(a);
      for (double al : {1e-3, 1e-1, 1.0}) {
        const Vector u1 = spectral::filter_apply(fac, spectral::SpectralFilter::tikhonov(al), f);
        solve::SolverConfig cfg;
        cfg.max_iter = 500;
        cfg.tol = 1e-13;
        const Vector u2 = spectral::tikhonov_solve_cg(op, f, al, cfg).u;
        const Vector u3 = spectral::map_gaussian_closed_form(a, f, al, Vector(12, 0.0));
        const double sc = std::max(1.0, norm_inf(u3));
        worst = std::max({worst, norm_inf(subtract(u1, u2)) / sc,
                          norm_inf(subtract(u1, u3)) / sc, norm_inf(subtract(u2, u3)) / sc});
      }
    }
    return detail::make(5, name, worst <= 1e-6,
                        "5 systems x alpha {1e-3,1e-1,1}, worst pairwise " + detail::sci(worst) +
                            ", bound 1e-6");
  });
}

inline CriterionResult criterion06() {
  const std::string name = "GD sublinear rate";
  return detail::guarded(6, name, [&] {
    std::size_t violations = 0, checks = 0;
    double tightest = 0.0;
    for (std::uint64_t s = 1; s <= 50; ++s) {
      const auto q = detail::make_quadratic(s, 10);
      const double tau = 1.0 / q.L;
      SplitMix64 rng(5000 + s);
      const Vector u0 = rng.normal_vector(10, 3.0);
      const double r0 = distance(u0, q.u_star);
      solve::RunOptions opts;
      opts.objective = [&](ConstSpan u) { return q.value(u); };
      const auto res = solve::gradient_descent(
          [&](ConstSpan u) { return subtract(q.q.multiply(u), q.b); }, u0, tau, 200, opts);
      for (const auto& rec : res.log.records()) {
        const double gap = *rec.objective - q.j_star;
        const double bound = r0 * r0 / (2.0 * tau * static_cast<double>(rec.k));
        ++checks;
        if (gap > bound) ++violations;
        tightest = std::max(tightest, gap / bound);
      }
    }
    return detail::make(6, name, violations == 0,
                        std::to_string(checks) + " checks, " + std::to_string(violations) +
                            " violations, max gap/bound " + detail::sci(tightest));
  });
}

inline CriterionResult criterion07() {
  const std::string name = "GD linear rate under strong convexity";
  return detail::guarded(7, name, [&] {
    std::size_t violations = 0, checks = 0;
    double tightest = 0.0;
    for (std::uint64_t s = 1; s <= 50; ++s) {
      const auto q = detail::make_quadratic(s, 10);
      const double tau = 0.9 / q.L;
      SplitMix64 rng(5000 + s);
      const Vector u0 = rng.normal_vector(10, 3.0);
      const double r0 = distance(u0, q.u_star);
      std::vector<double> dist;
      solve::RunOptions opts;
      opts.objective = [&](ConstSpan u) {
        dist.push_back(distance(u, q.u_star));
        return 0.0;
      };
      const auto res = solve::gradient_descent(
          [&](ConstSpan u) { return subtract(q.q.multiply(u), q.b); }, u0, tau, 200, opts);
      for (std::size_t i = 0; i < res.log.size(); ++i) {
        const double k = static_cast<double>(res.log[i].k);
        const double lhs = dist[i] * dist[i];
        const double bound = std::pow(1.0 - q.nu * tau, k) * r0 * r0;
        ++checks;
        if (lhs > bound) ++violations;
        if (bound > 0) tightest = std::max(tightest, lhs / bound);
      }
    }
    return detail::make(7, name, violations == 0,
                        std::to_string(checks) + " checks, " + std::to_string(violations) +
                            " violations, max lhs/bound " + detail::sci(tightest));
  });
}

inline CriterionResult criterion08() {
  const std::string name = "proximal point rates";
  return detail::guarded(8, name, [&] {
    std::size_t violations = 0, checks = 0;
    double tightest = 0.0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
      SplitMix64 rng(700 + s);
      const Vector c = rng.normal_vector(8);
      const Vector u0 = rng.normal_vector(8, 4.0);
      const double r0 = distance(u0, c);
      for (double tau : {0.1, 0.5, 1.0, 2.0}) {
        std::vector<double> dist, obj;
        solve::RunOptions opts;
        opts.objective = [&](ConstSpan u) {
          const double d = distance(u, c);
          dist.push_back(d);
          obj.push_back(0.5 * d * d);
          return 0.5 * d * d;
        };
        const auto res = solve::proximal_point(prox::squared_l2_prox(c), u0, tau, 100, opts);
        // The contraction is an equality for this J, so the iterate reaches
        // the rounding floor of |c| long before k = 100. Comparisons allow a
        // relative 1e-12 plus that absolute floor, nothing more.
        const double floor = 64.0 * std::numeric_limits<double>::epsilon() * (norm2(c) + r0);
        double prev = r0;
        for (std::size_t i = 0; i < res.log.size(); ++i) {
          const double k = static_cast<double>(res.log[i].k);
          const double sub = r0 * r0 / (2.0 * tau * k);
          const double lin = std::pow(1.0 + tau, -k) * r0 * (1.0 + 1e-12) + floor;
          checks += 3;
          if (obj[i] > sub) ++violations;
          if (dist[i] > lin) ++violations;
          if (dist[i] > prev + floor) ++violations;
          prev = dist[i];
          if (dist[i] > floor)
            tightest = std::max(tightest, dist[i] / (std::pow(1.0 + tau, -k) * r0));
        }
      }
    }
    return detail::make(8, name, violations == 0,
                        std::to_string(checks) + " checks, " + std::to_string(violations) +
                            " violations, max contraction ratio " + detail::sci(tightest));
  });
}

inline CriterionResult criterion09() {
  const std::string name = "CG exactness";
  return detail::guarded(9, name, [&] {
    bool ok = true;
    double worst = 0.0;
    for (std::uint64_t s = 1; s <= 20; ++s) {
      const std::size_t n = 5 + (s * 7) % 26;
      SplitMix64 rng(900 + s);
      const Matrix m = random_gaussian_matrix(n, n, rng);
      Matrix c = m.transpose() * m;
      for (std::size_t i = 0; i < n; ++i) c(i, i) += static_cast<double>(n);
      const Vector b = rng.normal_vector(n);
      const auto res = solve::conjugate_gradient(LinearMap::from_matrix(c), b, Vector(n, 0.0),
                                                 n, 1e-10);
      const double r = distance(c.multiply(res.u), b);
      ok = ok && res.converged() && res.iterations <= n && r <= 1e-10;
      worst = std::max(worst, r);
    }
    return detail::make(9, name, ok,
                        "20 SPD systems n<=30, worst true residual " + detail::sci(worst) +
                            " within n iterations, bound 1e-10");
  });
}

inline CriterionResult criterion10() {
  const std::string name = "ISTA optimality";
  return detail::guarded(10, name, [&] {
    const auto one = LinearMap::from_matrix(Matrix::from_rows({{1.0}}));
    const auto sc = solve::ista(one, Vector{3.0}, 1.0, 1.0, Vector{0.0}, 100);
    const double e1 = std::abs(sc.u[0] - 2.0);

    SplitMix64 rng(10);
    Matrix a = random_gaussian_matrix(40, 20, rng);
    for (double& x : a.data()) x /= std::sqrt(40.0);
    const Vector f = rng.normal_vector(40);
    const double alpha = 0.1;
    const auto op = LinearMap::from_matrix(a);
    const double L = svd(a).singular_values.front();
    const auto res = solve::ista(op, f, alpha, 1.0 / (L * L), Vector(20, 0.0), 2000);
    const auto obj = solve::lasso_objective(op, f, alpha);
    const Vector ref = detail::lasso_coordinate_descent(a, f, alpha);
    const double e2 = std::abs(obj(res.u) - obj(ref));

    const auto dc = experiments::run_deconv({});
    const bool ok = e1 <= 1e-8 && e2 <= 1e-6 && dc.ista_support < dc.l2_support;
    return detail::make(10, name, ok,
                        "scalar |u-2| " + detail::sci(e1) + " (<=1e-8), lasso objective gap " +
                            detail::sci(e2) + " (<=1e-6), support ista " +
                            std::to_string(dc.ista_support) + " < l2 " +
                            std::to_string(dc.l2_support));
  });
}

inline CriterionResult criterion11() {
  const std::string name = "Morozov discrepancy principle";
  return detail::guarded(11, name, [&] {
    bool ok = true;
    std::size_t passed = 0;
    for (std::uint64_t s = 1; s <= 10; ++s) {
      SplitMix64 rng(1100 + s);
      const Matrix a = random_gaussian_matrix(20, 12, rng);
      const Vector u = rng.normal_vector(12);
      const double delta = 0.1, mu = 1.2;
      const Vector f = harness::add_noise(a.multiply(u), delta, 1200 + s,
                                          harness::NoiseMode::scaled_to_norm);
      const auto fac = svd(a);
      const auto op = LinearMap::from_matrix(a);
      auto solve_alpha = [&](double al) {
        return spectral::filter_apply(fac, spectral::SpectralFilter::tikhonov(al), f);
      };
      const spectral::MorozovSearch search;
      const auto r = spectral::morozov_select_alpha(solve_alpha, op, f, delta, mu, search);
      const double disc = distance(a.multiply(r.u), f);
      bool good = disc <= mu * delta;
      const Vector grid = spectral::morozov_grid(search);
      const auto above = std::upper_bound(grid.begin(), grid.end(), r.alpha);
      if (above != grid.end())
        good = good && distance(a.multiply(solve_alpha(*above)), f) > mu * delta;
      passed += good;
      ok = ok && good;
    }
    return detail::make(11, name, ok,
                        std::to_string(passed) + "/10 problems feasible at alpha and infeasible "
                                                 "at the next grid point");
  });
}

inline CriterionResult criterion12() {
  const std::string name = "TV cross-solver agreement";
  return detail::guarded(12, name, [&] {
    const auto tv = experiments::run_tv({});
    const double gap = std::abs(tv.cp_objective - tv.admm_objective);

    const double f[4] = {0.9, 0.1, 0.4, 0.7};
    const double alpha = 0.15;
    const double lattice = detail::rof2x2_lattice_min(f, alpha);
    const auto id = LinearMap::identity(4);
    const Vector fv(f, f + 4);
    const auto cfg = solve::tv_default_config(id, 2, 2, 2000);
    const auto cp = solve::tv_reconstruct(id, fv, 2, 2, alpha, cfg);
    const double cp_val = detail::rof2x2(cp.u.data(), f, alpha);
    const double gap2 = std::abs(cp_val - lattice);
    const auto ad = solve::admm(id, fv, 2, 2, alpha, 1.0, 2000);
    const double gap3 = std::abs(detail::rof2x2(ad.u.data(), f, alpha) - lattice);
    const bool ok = gap <= 1e-3 && gap2 <= 1e-3 && gap3 <= 1e-3;
    return detail::make(12, name, ok,
                        "32x32 CP " + detail::sci(tv.cp_objective) + " vs ADMM " +
                            detail::sci(tv.admm_objective) + " gap " + detail::sci(gap) +
                            "; 2x2 lattice gap CP " + detail::sci(gap2) + " ADMM " +
                            detail::sci(gap3) + " (bound 1e-3)");
  });
}

inline std::vector<std::pair<std::vector<std::size_t>, std::vector<learn::Activation>>>
architecture_zoo() {
  using A = learn::Activation;
  return {
      {{4, 3}, {A::identity()}},
      {{3, 4, 2}, {A::relu(), A::identity()}},
      {{3, 5, 4, 2}, {A::sigmoid(), A::sigmoid(), A::identity()}},
      {{3, 6, 3, 2}, {A::prelu(0.1), A::relu(), A::sigmoid()}},
      {{4, 5, 3}, {A::sigmoid(), A::softmax()}},
      {{2, 4, 4, 1}, {A::relu(), A::identity(), A::sigmoid()}},
  };
}

inline CriterionResult criterion13() {
  const std::string name = "backprop vs finite differences";
  return detail::guarded(13, name, [&] {
    double worst = 0.0;
    std::size_t cases = 0;
    const auto zoo = architecture_zoo();
    for (std::uint64_t s = 1; s <= 20; ++s)
      for (std::size_t z = 0; z < zoo.size(); ++z) {
        const auto net = learn::initialize_network(zoo[z].first, zoo[z].second, s * 31 + z);
        SplitMix64 rng(s * 1000 + z);
        Vector x = rng.normal_vector(net.input_size());
        for (int tries = 0; tries < 100 && detail::kink_distance(net, x) < 1e-3; ++tries)
          x = rng.normal_vector(net.input_size());
        const Vector y = rng.uniform_vector(net.output_size(), 0.0, 1.0);
        const Vector g = learn::backprop(net, x, y).flatten();
        const Vector fd = detail::finite_difference_gradient(net, x, y, 1e-5);
        const double scale = std::max({norm_inf(g), norm_inf(fd), 1e-8});
        worst = std::max(worst, norm_inf(subtract(g, fd)) / scale);
        ++cases;
      }
    return detail::make(13, name, worst <= 1e-5,
                        std::to_string(cases) + " (architecture, seed) cases, worst relative " +
                            detail::sci(worst) + ", bound 1e-5");
  });
}

inline CriterionResult criterion14() {
  const std::string name = "minibatch gradient unbiasedness";
  return detail::guarded(14, name, [&] {
    using A = learn::Activation;
    const auto net = learn::initialize_network({3, 4, 2}, {A::sigmoid(), A::identity()}, 14);
    SplitMix64 rng(140);
    learn::Dataset data;
    for (int j = 0; j < 40; ++j) data.push_back({rng.normal_vector(3), rng.normal_vector(2)});
    const Vector full = learn::full_gradient(net, data);
    const std::size_t draws = 10000, p = full.size();
    Vector mean(p, 0.0), sq(p, 0.0);
    SplitMix64 brng(1400);
    for (std::size_t t = 0; t < draws; ++t) {
      const Vector g = learn::batch_gradient(net, data, learn::sample_batch(40, 5, brng));
      for (std::size_t i = 0; i < p; ++i) {
        mean[i] += g[i];
        sq[i] += g[i] * g[i];
      }
    }
    const double n = static_cast<double>(draws);
    std::size_t bad = 0;
    double worst = 0.0;
    for (std::size_t i = 0; i < p; ++i) {
      const double m = mean[i] / n;
      const double var = std::max(0.0, (sq[i] / n - m * m) * n / (n - 1.0));
      const double se = std::sqrt(var / n);
      const double z = se > 0 ? std::abs(m - full[i]) / se : (m == full[i] ? 0.0 : 1e300);
      worst = std::max(worst, z);
      bad += z > 3.0;
    }
    return detail::make(14, name, bad == 0,
                        std::to_string(p) + " components, 1e4 draws, max |mean-full|/se " +
                            detail::sci(worst) + " (<= 3)");
  });
}

inline CriterionResult criterion15() {
  const std::string name = "learned spectral filter";
  return detail::guarded(15, name, [&] {
    const auto noisy = experiments::run_learn_spectral({});
    experiments::LearnSpectralParams p0;
    p0.delta = 0.0;
    const auto clean = experiments::run_learn_spectral(p0);
    double e0 = 0.0;
    for (std::size_t i = 0; i < clean.sigma.size(); ++i)
      e0 = std::max(e0, std::abs(clean.trained[i] - 1.0 / clean.sigma[i]));
    const bool ok = noisy.max_abs_diff <= 5e-2 && e0 <= 1e-3;
    return detail::make(15, name, ok,
                        "10 modes, 1e4 samples: max |theta - closed form| " +
                            detail::sci(noisy.max_abs_diff) + " (<=5e-2); noiseless max |theta - "
                            "1/sigma| " + detail::sci(e0) + " (<=1e-3)");
  });
}

inline CriterionResult criterion16() {
  const std::string name = "data-driven convergence trend";
  return detail::guarded(16, name, [&] {
    const std::size_t modes = 10, ntrain = 2000, ntest = 500;
    std::vector<double> med;
    for (int lvl = 1; lvl <= 6; ++lvl) {
      const double delta = std::ldexp(1.0, -lvl);
      std::vector<double> errs;
      for (std::uint64_t s = 1; s <= 3; ++s) {
        const Matrix a = experiments::synthetic_operator(modes, 0.1, 160 + s);
        const auto fac = svd(a);
        // Common random numbers: the base draws do not depend on delta.
        SplitMix64 rng(1600 + s);
        std::vector<Vector> noise, signal;
        for (std::size_t j = 0; j < ntrain; ++j) {
          signal.push_back(rng.normal_vector(modes));
          noise.push_back(rng.normal_vector(modes, delta));
        }
        const auto st = learn::spectral_statistics(noise, signal, fac);
        const auto filt = spectral::mse_optimal_filter(fac, st.stats);
        CompensatedSum err;
        for (std::size_t j = 0; j < ntest; ++j) {
          const Vector u = rng.normal_vector(modes);
          const Vector f = add(a.multiply(u), rng.normal_vector(modes, delta));
          err.add(distance(spectral::filter_apply(fac, filt, f), u));
        }
        errs.push_back(err.value() / static_cast<double>(ntest));
      }
      std::sort(errs.begin(), errs.end());
      med.push_back(errs[1]);
    }
    bool ok = true;
    std::string d = "median errors";
    for (std::size_t i = 0; i < med.size(); ++i) {
      d += " " + detail::sci(med[i]);
      if (i > 0 && !(med[i] < med[i - 1])) ok = false;
    }
    return detail::make(16, name, ok, d + " along delta = 2^-n, n = 1..6");
  });
}

/// Criteria 1 to 16. `progress`, when given, receives each line as it finishes.
inline Report run_core(std::ostream* progress = nullptr) {
  Report r;
  const std::vector<CriterionResult (*)()> all = {
      criterion01, criterion02, criterion03, criterion04, criterion05, criterion06,
      criterion07, criterion08, criterion09, criterion10, criterion11, criterion12,
      criterion13, criterion14, criterion15, criterion16};
  for (auto c : all) {
    r.results.push_back(c());
    if (progress) *progress << r.results.back().line() << '\n' << std::flush;
  }
  return r;
}

/// CLI invocations whose outputs must be reproducible.
inline std::vector<std::vector<std::string>> determinism_examples() {
  return {
      {"numdiff", "--n", "200", "--delta", "0.01", "--seed", "1"},
      {"deconv", "--ista", "--alpha", "0.1"},
      {"ct", "--mode", "all", "--seed", "3"},
      {"tv", "--iters", "300", "--seed", "2"},
      {"learn-spectral", "--samples", "2000", "--epochs", "20"},
  };
}

namespace detail {

inline std::map<std::string, std::string> snapshot(const std::filesystem::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file())
      files[std::filesystem::relative(e.path(), dir).string()] = harness::read_file(e.path());
  return files;
}

}  // namespace detail

/// Runs each example twice into fresh directories and compares every output
/// byte, including stdout; also compares `first` with a fresh run of 1 to 16.
inline CriterionResult criterion17(const Report& first, const CliRunner& cli) {
  const std::string name = "determinism";
  return detail::guarded(17, name, [&] {
    namespace fs = std::filesystem;
    std::random_device rd;
    const fs::path root =
        fs::temp_directory_path() / ("invprob_selftest_" + std::to_string(rd()) + std::to_string(rd()));
    std::size_t compared = 0;
    std::string problem;
    const auto examples = determinism_examples();
    for (std::size_t e = 0; e < examples.size() && problem.empty(); ++e) {
      std::map<std::string, std::string> snaps[2];
      std::string outs[2];
      for (int run = 0; run < 2; ++run) {
        const fs::path dir = root / ("ex" + std::to_string(e) + "_" + std::to_string(run));
        fs::create_directories(dir);
        auto args = examples[e];
        args.push_back("--out");
        args.push_back(dir.string());
        std::ostringstream o, err;
        const int code = cli(args, o, err);
        if (code != 0) problem = args[0] + " exited with " + std::to_string(code) + ": " + err.str();
        // Output paths differ between runs by construction.
        std::string text = o.str();
        for (auto pos = text.find(dir.string()); pos != std::string::npos;
             pos = text.find(dir.string()))
          text.replace(pos, dir.string().size(), "<out>");
        outs[run] = text;
        snaps[run] = detail::snapshot(dir);
      }
      if (!problem.empty()) break;
      if (snaps[0].empty()) problem = examples[e][0] + " wrote no files";
      else if (snaps[0] != snaps[1]) problem = examples[e][0] + " outputs differ";
      else if (outs[0] != outs[1]) problem = examples[e][0] + " stdout differs";
      compared += snaps[0].size();
    }
    std::error_code ec;
    fs::remove_all(root, ec);
    if (problem.empty() && run_core().text() != first.text())
      problem = "selftest report differs between runs";
    return detail::make(17, name, problem.empty(),
                        problem.empty() ? std::to_string(examples.size()) +
                                              " CLI examples x2 (" + std::to_string(compared) +
                                              " files) and selftest report byte-identical"
                                        : problem);
  });
}

inline Report run_all(const CliRunner& cli, std::ostream* progress = nullptr) {
  Report r = run_core(progress);
  r.results.push_back(criterion17(r, cli));
  if (progress) *progress << r.results.back().line() << '\n' << std::flush;
  return r;
}

}  // namespace invprob::selftest
