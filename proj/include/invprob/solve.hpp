#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "forward.hpp"
#include "linop.hpp"
#include "prox.hpp"

/// First-order solvers. Every solver runs as a plain loop over its iterate,
/// stops on ||u^{k+1} - u^k|| <= tol (1 + ||u^k||) or the iteration budget, and
/// returns the final iterate together with an IterationLog.
namespace invprob::solve {

using Gradient = std::function<Vector(ConstSpan)>;
using Objective = std::function<double(ConstSpan)>;
using Denoiser = std::function<Vector(ConstSpan)>;

//==============================================================================
// Configuration and logging
//==============================================================================

struct SolverConfig {
  double tau = 1.0;
  double sigma = 1.0;
  double theta = 1.0;
  double mu = 1.0;
  std::size_t max_iter = 1000;
  double tol = 0.0;
  std::optional<double> nu;
  /// Known upper bound on ||A||, if any. Zero means "estimate it".
  double op_norm = 0.0;

  void validate() const {
    if (!(tau > 0.0)) throw std::invalid_argument("SolverConfig: tau must be > 0");
    if (!(sigma > 0.0)) throw std::invalid_argument("SolverConfig: sigma must be > 0");
    if (!(theta >= 0.0 && theta <= 1.0))
      throw std::invalid_argument("SolverConfig: theta must lie in [0, 1]");
    if (!(mu > 0.0)) throw std::invalid_argument("SolverConfig: mu must be > 0");
    if (tol < 0.0) throw std::invalid_argument("SolverConfig: tol must be >= 0");
    if (nu && !(*nu >= 0.0)) throw std::invalid_argument("SolverConfig: nu must be >= 0");
  }

  /// Primal-dual configuration; rejects tau sigma ||A||^2 >= 1.
  static SolverConfig chambolle_pock(double op_norm, double tau, double sigma,
                                     std::size_t max_iter, double theta = 1.0) {
    SolverConfig c;
    c.tau = tau;
    c.sigma = sigma;
    c.theta = theta;
    c.max_iter = max_iter;
    c.op_norm = op_norm;
    c.validate();
    if (!(tau * sigma * op_norm * op_norm < 1.0))
      throw std::invalid_argument("SolverConfig: step condition tau*sigma*||A||^2 = " +
                                  format_double(tau * sigma * op_norm * op_norm) +
                                  " is not < 1");
    return c;
  }

  /// tau = sigma = 0.99 / ||A||, theta = 1.
  static SolverConfig chambolle_pock(double op_norm, std::size_t max_iter) {
    if (!(op_norm > 0.0))
      throw std::invalid_argument("SolverConfig: operator norm must be > 0");
    return chambolle_pock(op_norm, 0.99 / op_norm, 0.99 / op_norm, max_iter, 1.0);
  }
};

struct IterationRecord {
  std::size_t k = 0;
  std::optional<double> objective;
  std::optional<double> residual;
  double step_norm = 0.0;
};

class IterationLog {
 public:
  void push(IterationRecord r) {
    if (!records_.empty() && r.k <= records_.back().k)
      throw std::logic_error("IterationLog: iteration counters must increase");
    records_.push_back(std::move(r));
  }
  const std::vector<IterationRecord>& records() const noexcept { return records_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const IterationRecord& back() const { return records_.back(); }
  const IterationRecord& operator[](std::size_t i) const { return records_[i]; }

 private:
  std::vector<IterationRecord> records_;
};

enum class StopReason { tolerance, max_iter, non_finite };

struct SolveResult {
  Vector u;
  IterationLog log;
  StopReason reason = StopReason::max_iter;
  std::size_t iterations = 0;
  Vector dual;  // primal-dual and ADMM methods only

  bool converged() const { return reason == StopReason::tolerance; }
};

struct RunOptions {
  double tol = 0.0;
  Objective objective;  // logged each recorded iteration when set
  std::size_t log_every = 1;
};

namespace detail {

inline bool stalled(double step, double unorm, double tol) {
  return step <= tol * (1.0 + unorm);
}

inline bool should_log(std::size_t k, std::size_t every, bool last) {
  return last || every <= 1 || k % every == 0;
}

// Shared driver for one-step fixed-point schemes u <- step(u).
template <class Step>
SolveResult iterate(Vector u0, std::size_t max_iter, const RunOptions& opts,
                    Step&& step) {
  SolveResult res;
  res.u = std::move(u0);
  if (max_iter == 0) return res;
  for (std::size_t k = 1; k <= max_iter; ++k) {
    Vector next = step(static_cast<ConstSpan>(res.u));
    if (!all_finite(next)) {
      res.reason = StopReason::non_finite;
      return res;
    }
    const double sn = distance(next, res.u);
    const double un = norm2(res.u);
    res.u = std::move(next);
    res.iterations = k;
    const bool done = detail::stalled(sn, un, opts.tol);
    const bool last = done || k == max_iter;
    if (should_log(k, opts.log_every, last)) {
      IterationRecord rec{k, std::nullopt, std::nullopt, sn};
      if (opts.objective) rec.objective = opts.objective(res.u);
      res.log.push(rec);
    }
    if (done) {
      res.reason = StopReason::tolerance;
      return res;
    }
  }
  res.reason = StopReason::max_iter;
  return res;
}

}  // namespace detail

//==============================================================================
// Smooth methods
//==============================================================================

/// u^{k+1} = u^k - tau grad J(u^k). A non-finite gradient aborts the run and
/// keeps the last finite iterate.
inline SolveResult gradient_descent(const Gradient& grad, Vector u0, double tau,
                                    std::size_t max_iter, const RunOptions& opts = {}) {
  if (!(tau > 0.0)) throw std::invalid_argument("gradient_descent: tau must be > 0");
  return detail::iterate(std::move(u0), max_iter, opts, [&](ConstSpan u) {
    Vector g = grad(u);
    require_length("gradient_descent gradient", u.size(), g.size());
    Vector next(u.begin(), u.end());
    for (std::size_t i = 0; i < next.size(); ++i) next[i] -= tau * g[i];
    return next;
  });
}

struct CgOptions {
  /// Called after each update with (k, u^{k+1}, r^{k+1}).
  std::function<void(std::size_t, ConstSpan, ConstSpan)> observer;
  std::size_t log_every = 1;
};

/// Conjugate gradients for a symmetric positive definite C. Stops once the
/// recursive residual satisfies ||r|| <= tol. On hitting max_iter the iterate
/// with the smallest residual is returned and flagged non-converged.
inline SolveResult conjugate_gradient(const LinearMap& c, ConstSpan b, Vector u0,
                                      std::size_t max_iter, double tol,
                                      const CgOptions& opts = {}) {
  require_length("conjugate_gradient operator", c.rows(), c.cols());
  require_length("conjugate_gradient rhs", c.rows(), b.size());
  require_length("conjugate_gradient start", c.cols(), u0.size());
  if (tol < 0.0) throw std::invalid_argument("conjugate_gradient: tol must be >= 0");

  SolveResult res;
  Vector u = std::move(u0);
  Vector r = subtract(b, c.apply(u));
  Vector p = r;
  double rr = dot(r, r);
  Vector best = u;
  double best_rn = std::sqrt(rr);
  res.u = u;
  if (best_rn <= tol) {
    res.reason = StopReason::tolerance;
    return res;
  }
  for (std::size_t k = 0; k < max_iter; ++k) {
    const Vector cp = c.apply(p);
    const double pcp = dot(p, cp);
    if (!(pcp > 0.0))
      throw std::domain_error("conjugate_gradient: operator not PD (<p, Cp> = " +
                              format_double(pcp) + ")");
    const double alpha = rr / pcp;
    axpy(alpha, p, u);
    axpy(-alpha, cp, r);
    const double rr_next = dot(r, r);
    const double rn = std::sqrt(rr_next);
    res.iterations = k + 1;
    if (opts.observer) opts.observer(k + 1, u, r);
    const bool done = rn <= tol;
    const bool last = done || k + 1 == max_iter;
    if (detail::should_log(k + 1, opts.log_every, last))
      res.log.push({k + 1, std::nullopt, rn, std::abs(alpha) * norm2(p)});
    if (rn < best_rn) {
      best_rn = rn;
      best = u;
    }
    if (done) {
      res.u = std::move(u);
      res.reason = StopReason::tolerance;
      return res;
    }
    const double beta = rr_next / rr;
    for (std::size_t i = 0; i < p.size(); ++i) p[i] = r[i] + beta * p[i];
    rr = rr_next;
  }
  res.u = std::move(best);
  res.reason = StopReason::max_iter;
  return res;
}

//==============================================================================
// Proximal methods
//==============================================================================

/// u^{k+1} = prox_{tau J}(u^k).
inline SolveResult proximal_point(const prox::ProxOp& p, Vector u0, double tau,
                                  std::size_t max_iter, const RunOptions& opts = {}) {
  if (!(tau > 0.0)) throw std::invalid_argument("proximal_point: tau must be > 0");
  return detail::iterate(std::move(u0), max_iter, opts,
                         [&](ConstSpan u) { return p.evaluate(u, tau); });
}

/// u^{k+1} = prox_{tau G}(u^k - tau grad H(u^k)).
inline SolveResult proximal_gradient(const Gradient& grad_h, const prox::ProxOp& prox_g,
                                     Vector u0, double tau, std::size_t max_iter,
                                     const RunOptions& opts = {}) {
  if (!(tau > 0.0)) throw std::invalid_argument("proximal_gradient: tau must be > 0");
  return detail::iterate(std::move(u0), max_iter, opts, [&](ConstSpan u) {
    Vector g = grad_h(u);
    require_length("proximal_gradient gradient", u.size(), g.size());
    Vector v(u.begin(), u.end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= tau * g[i];
    return prox_g.evaluate(v, tau);
  });
}

/// Gradient of 1/2 ||A u - f||^2.
inline Gradient least_squares_gradient(const LinearMap& a, Vector f) {
  require_length("least_squares_gradient data", a.rows(), f.size());
  return [a, f = std::move(f)](ConstSpan u) {
    return a.adjoint_apply(subtract(a.apply(u), f));
  };
}

/// 1/2 ||A u - f||^2 + alpha ||u||_1
inline Objective lasso_objective(const LinearMap& a, Vector f, double alpha) {
  return [a, f = std::move(f), alpha](ConstSpan u) {
    const Vector r = subtract(a.apply(u), f);
    return 0.5 * dot(r, r) + alpha * norm1(u);
  };
}

/// Iterated soft thresholding: proximal_gradient with H = 1/2 ||A . - f||^2
/// and G = alpha ||.||_1. The lasso objective is logged unless the caller
/// supplies another one.
inline SolveResult ista(const LinearMap& a, ConstSpan f, double alpha, double tau,
                        Vector u0, std::size_t max_iter, RunOptions opts = {}) {
  if (alpha < 0.0) throw std::invalid_argument("ista: alpha must be >= 0");
  Vector fv(f.begin(), f.end());
  if (!opts.objective) opts.objective = lasso_objective(a, fv, alpha);
  return proximal_gradient(least_squares_gradient(a, std::move(fv)), prox::l1_prox(alpha),
                           std::move(u0), tau, max_iter, opts);
}

/// Plug-and-play proximal gradient: the prox step is replaced by a denoiser.
/// step_norm in the log is the fixed-point residual ||u^{k+1} - u^k||.
inline SolveResult pnp_pgd(const Gradient& grad_h, const Denoiser& denoiser, Vector u0,
                           double tau, std::size_t max_iter, const RunOptions& opts = {}) {
  if (!(tau > 0.0)) throw std::invalid_argument("pnp_pgd: tau must be > 0");
  return detail::iterate(std::move(u0), max_iter, opts, [&](ConstSpan u) {
    Vector g = grad_h(u);
    require_length("pnp_pgd gradient", u.size(), g.size());
    Vector v(u.begin(), u.end());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] -= tau * g[i];
    return denoiser(v);
  });
}

//==============================================================================
// Primal-dual
//==============================================================================

/// Chambolle-Pock iteration
///   u+ = prox_{tau G}(u - tau A^T p)
///   v  = u+ + theta (u+ - u)
///   p+ = prox_{sigma H*}(p + sigma A v)
/// The step condition is checked against max(cfg.op_norm, power estimate).
/// The log's residual is the dual step ||p+ - p||. The stopping rule must
/// hold for the primal and the dual step.
inline SolveResult chambolle_pock(const prox::ProxOp& prox_g,
                                  const prox::ProxOp& prox_hstar, const LinearMap& a,
                                  const SolverConfig& cfg, Vector u0, Vector p0,
                                  const RunOptions& opts = {}) {
  cfg.validate();
  require_length("chambolle_pock primal start", a.cols(), u0.size());
  require_length("chambolle_pock dual start", a.rows(), p0.size());
  const double norm = std::max(cfg.op_norm, operator_norm(a, 100, 7));
  if (!(cfg.tau * cfg.sigma * norm * norm < 1.0))
    throw std::invalid_argument("chambolle_pock: step condition tau*sigma*||A||^2 = " +
                                format_double(cfg.tau * cfg.sigma * norm * norm) +
                                " is not < 1");
  SolveResult res;
  Vector u = std::move(u0);
  Vector p = std::move(p0);
  for (std::size_t k = 1; k <= cfg.max_iter; ++k) {
    Vector w = a.adjoint_apply(p);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] = u[i] - cfg.tau * w[i];
    Vector un = prox_g.evaluate(w, cfg.tau);
    Vector v(un.size());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = un[i] + cfg.theta * (un[i] - u[i]);
    Vector q = a.apply(v);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] = p[i] + cfg.sigma * q[i];
    Vector pn = prox_hstar.evaluate(q, cfg.sigma);
    if (!all_finite(un) || !all_finite(pn)) {
      res.reason = StopReason::non_finite;
      break;
    }
    const double sn = distance(un, u);
    const double dn = distance(pn, p);
    const double unorm = norm2(u);
    const double pnorm = norm2(p);
    u = std::move(un);
    p = std::move(pn);
    res.iterations = k;
    const bool done =
        detail::stalled(sn, unorm, cfg.tol) && detail::stalled(dn, pnorm, cfg.tol);
    const bool last = done || k == cfg.max_iter;
    if (detail::should_log(k, opts.log_every, last)) {
      IterationRecord rec{k, std::nullopt, dn, sn};
      if (opts.objective) rec.objective = opts.objective(u);
      res.log.push(rec);
    }
    if (done) {
      res.reason = StopReason::tolerance;
      break;
    }
  }
  res.u = std::move(u);
  res.dual = std::move(p);
  return res;
}

/// 1/2 ||A u - f||^2 + alpha TV(u) with anisotropic TV.
inline Objective rof_objective(const LinearMap& a, Vector f, std::size_t rows,
                               std::size_t cols, double alpha) {
  return [a, f = std::move(f), rows, cols, alpha](ConstSpan u) {
    const Vector r = subtract(a.apply(u), f);
    return 0.5 * dot(r, r) + alpha * forward::total_variation(u, rows, cols);
  };
}

/// Stacked operator [A; grad] used by the TV splitting.
inline LinearMap tv_stacked_operator(const LinearMap& a_tilde, std::size_t rows,
                                     std::size_t cols) {
  require_length("tv operator image size", rows * cols, a_tilde.cols());
  return stack(a_tilde, forward::gradient_operator(rows, cols));
}

/// tau = sigma = 0.99 / ||[A; grad]||.
inline SolverConfig tv_default_config(const LinearMap& a_tilde, std::size_t rows,
                                      std::size_t cols, std::size_t max_iter) {
  const double n = operator_norm(tv_stacked_operator(a_tilde, rows, cols), 300, 11);
  // Power iteration underestimates; a small margin keeps the step admissible.
  return SolverConfig::chambolle_pock(n * 1.01, max_iter);
}

/// Total-variation regularised reconstruction by Chambolle-Pock with G = 0,
/// K = [A; grad] and H(z1, z2) = 1/2 ||z1 - f||^2 + alpha ||z2||_1. The dual
/// prox is blockwise: (z1 - sigma f)/(sigma + 1) and the clamp onto
/// [-alpha, alpha]. Starts from u = 0, p = 0 unless u0 is given.
inline SolveResult tv_reconstruct(const LinearMap& a_tilde, ConstSpan f, std::size_t rows,
                                  std::size_t cols, double alpha, const SolverConfig& cfg,
                                  std::optional<Vector> u0 = std::nullopt,
                                  RunOptions opts = {}) {
  if (alpha < 0.0) throw std::invalid_argument("tv_reconstruct: alpha must be >= 0");
  require_length("tv_reconstruct data", a_tilde.rows(), f.size());
  const LinearMap k = tv_stacked_operator(a_tilde, rows, cols);
  Vector fv(f.begin(), f.end());
  const prox::ProxOp hstar = prox::block_prox(
      {{a_tilde.rows(), prox::datafit_conjugate_prox(fv)},
       {2 * rows * cols, prox::inf_ball_projection(alpha)}});
  if (!opts.objective) opts.objective = rof_objective(a_tilde, fv, rows, cols, alpha);
  Vector start = u0 ? std::move(*u0) : Vector(rows * cols, 0.0);
  return chambolle_pock(prox::zero_prox(), hstar, k, cfg, std::move(start),
                        Vector(k.rows(), 0.0), opts);
}

//==============================================================================
// ADMM
//==============================================================================

struct AdmmOptions {
  double inner_tol = 1e-10;  // relative to ||rhs||
  std::size_t inner_max_iter = 500;
  std::size_t log_every = 1;
  bool log_objective = true;
};

/// ADMM for 1/2 ||A u - f||^2 + alpha ||grad u||_1 with the split grad u = v:
///   u+ = argmin 1/2 ||A u - f||^2 + mu/2 ||grad u - v + q||^2   (CG, warm start)
///   v+ = shrink_{alpha/mu}(grad u+ + q)
///   q+ = q + grad u+ - v+
/// The log's residual is the primal feasibility ||grad u - v||. Starts from
/// u = A^T f, v = grad u, q = 0.
inline SolveResult admm(const LinearMap& a_tilde, ConstSpan f, std::size_t rows,
                        std::size_t cols, double alpha, double mu, std::size_t max_iter,
                        const AdmmOptions& opts = {}) {
  if (!(mu > 0.0)) throw std::invalid_argument("admm: mu must be > 0");
  if (alpha < 0.0) throw std::invalid_argument("admm: alpha must be >= 0");
  require_length("admm data", a_tilde.rows(), f.size());
  require_length("admm image size", rows * cols, a_tilde.cols());
  const LinearMap grad = forward::gradient_operator(rows, cols);
  const LinearMap lhs(rows * cols, rows * cols, [&](ConstSpan x) {
    Vector y = a_tilde.adjoint_apply(a_tilde.apply(x));
    const Vector g = grad.adjoint_apply(grad.apply(x));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += mu * g[i];
    return y;
  }, [&](ConstSpan x) {
    Vector y = a_tilde.adjoint_apply(a_tilde.apply(x));
    const Vector g = grad.adjoint_apply(grad.apply(x));
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += mu * g[i];
    return y;
  });
  const Vector atf = a_tilde.adjoint_apply(f);
  const Objective objective =
      rof_objective(a_tilde, Vector(f.begin(), f.end()), rows, cols, alpha);

  SolveResult res;
  Vector u = atf;
  Vector v = grad.apply(u);
  Vector q(v.size(), 0.0);
  for (std::size_t k = 1; k <= max_iter; ++k) {
    Vector diff = subtract(v, q);
    Vector rhs = grad.adjoint_apply(diff);
    for (std::size_t i = 0; i < rhs.size(); ++i) rhs[i] = atf[i] + mu * rhs[i];
    const double tol = opts.inner_tol * std::max(norm2(rhs), 1e-300);
    SolveResult inner = conjugate_gradient(lhs, rhs, u, opts.inner_max_iter, tol);
    if (!inner.converged())
      throw convergence_error("admm: inner CG did not reach tolerance in " +
                              std::to_string(opts.inner_max_iter) + " iterations");
    const double sn = distance(inner.u, u);
    u = std::move(inner.u);
    const Vector gu = grad.apply(u);
    Vector z = add(gu, q);
    v = prox::shrink(z, alpha / mu);
    for (std::size_t i = 0; i < q.size(); ++i) q[i] += gu[i] - v[i];
    const double primal = distance(gu, v);
    res.iterations = k;
    const bool last = k == max_iter;
    if (detail::should_log(k, opts.log_every, last)) {
      IterationRecord rec{k, std::nullopt, primal, sn};
      if (opts.log_objective) rec.objective = objective(u);
      res.log.push(rec);
    }
    if (!all_finite(u)) {
      res.reason = StopReason::non_finite;
      break;
    }
  }
  if (res.reason != StopReason::non_finite) res.reason = StopReason::max_iter;
  res.u = std::move(u);
  res.dual = std::move(q);
  return res;
}

}  // namespace invprob::solve
