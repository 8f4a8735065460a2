#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "forward.hpp"
#include "harness.hpp"
#include "learn.hpp"
#include "linop.hpp"
#include "solve.hpp"
#include "spectral.hpp"

/// Desk-scale experiment drivers shared by the CLI and the self-test. Each
/// returns its numbers and, when `out` is non-empty, writes CSV/PGM files there.
namespace invprob::experiments {

namespace fs = std::filesystem;

inline fs::path out_file(const fs::path& out, const std::string& name) { return out / name; }

//==============================================================================
// numdiff
//==============================================================================

struct NumdiffParams {
  std::size_t n = 200;
  double delta = 0.01;
  std::size_t k_max = 64;
};

struct NumdiffRow {
  std::size_t k;
  double data_l2, data_linf, recon_l2, recon_linf;
};

struct NumdiffResult {
  std::vector<NumdiffRow> rows;
  double linf_ratio = 0.0;  // recon_linf(k_max) / recon_linf(1)
};

/// u(t) = sin(2 pi t) + (t - 1/2)^2 - 1/4 on t_i = i/(N-1); f = A u with A the
/// integration operator; the data are perturbed by delta sin(2 pi k t) and
/// inverted with the backward difference, for k = 1, 2, 4, ..., k_max.
inline NumdiffResult run_numdiff(const NumdiffParams& p, const fs::path& out = {}) {
  if (p.n < 2) throw std::invalid_argument("numdiff: n must be >= 2");
  if (p.k_max < 1) throw std::invalid_argument("numdiff: k_max must be >= 1");
  const auto a = forward::integration_operator(p.n);
  const auto d = forward::backward_difference_operator(p.n);
  const double h = 1.0 / static_cast<double>(p.n - 1);
  Vector u(p.n);
  for (std::size_t i = 0; i < p.n; ++i) {
    const double t = static_cast<double>(i) * h;
    u[i] = std::sin(2.0 * std::numbers::pi * t) + (t - 0.5) * (t - 0.5) - 0.25;
  }
  const Vector f = a.apply(u);
  NumdiffResult res;
  harness::CsvTable csv({"k", "data_l2", "data_linf", "recon_l2", "recon_linf"});
  for (std::size_t k = 1; k <= p.k_max; k *= 2) {
    Vector fd = f;
    for (std::size_t i = 0; i < p.n; ++i)
      fd[i] += p.delta * std::sin(2.0 * std::numbers::pi * static_cast<double>(k) *
                                  static_cast<double>(i) * h);
    const auto md = harness::metrics(fd, f);
    const auto mr = harness::metrics(d.apply(fd), u);
    res.rows.push_back({k, md.l2, md.linf, mr.l2, mr.linf});
    csv.row(Vector{static_cast<double>(k), md.l2, md.linf, mr.l2, mr.linf});
  }
  res.linf_ratio = res.rows.back().recon_linf / res.rows.front().recon_linf;
  if (!out.empty()) csv.write(out_file(out, "numdiff.csv"));
  return res;
}

//==============================================================================
// ct
//==============================================================================

struct CtParams {
  std::size_t n = 16;
  std::size_t angles = 24;
  std::size_t offsets = 23;
  double delta = 0.25;  // ||eps||_2
  double alpha = 1e-2;  // single Tikhonov run
  double mu = 1.1;      // Morozov safety factor
  std::string mode = "all";  // pinv | tikhonov | morozov | all
  std::uint64_t seed = 1;
};

struct CtRow {
  std::string method;
  double alpha, residual;
  harness::Metrics m;
};

struct CtResult {
  std::vector<CtRow> rows;
  std::size_t rank = 0;
  double morozov_alpha = 0.0;
};

/// Phantom on an n x n grid over [-1, 1]^2, parallel-beam Radon data from the
/// explicit ray matrix, noise with ||eps|| = delta, and spectral reconstructions.
inline CtResult run_ct(const CtParams& p, const fs::path& out = {}) {
  const std::string& mode = p.mode;
  if (mode != "pinv" && mode != "tikhonov" && mode != "morozov" && mode != "all")
    throw std::invalid_argument("ct: unknown mode '" + mode + "'");
  const auto phantom = harness::phantom_ellipses(p.n);
  const double h = 2.0 / static_cast<double>(p.n);
  const auto grid = forward::Grid2D::centered(p.n, p.n, h);
  const auto op = forward::radon_operator(grid, forward::uniform_angles(p.angles),
                                          forward::symmetric_offsets(p.offsets, 2.0 * 1.42 /
                                              static_cast<double>(p.offsets)));
  const Matrix a = op.to_dense();
  const LinearMap amap = LinearMap::from_matrix(a);
  const auto svd = invprob::svd(a);
  const Vector clean = a.multiply(phantom.values);
  const Vector f = harness::add_noise(clean, p.delta, p.seed, harness::NoiseMode::scaled_to_norm);

  CtResult res;
  res.rank = svd.rank;
  harness::CsvTable csv({"method", "alpha", "residual", "l2", "linf", "psnr"});
  auto record = [&](const std::string& method, double alpha, const Vector& u,
                    const std::string& pgm) {
    const double r = distance(a.multiply(u), f);
    const auto m = harness::metrics(u, phantom.values);
    res.rows.push_back({method, alpha, r, m});
    csv.row({method, format_double(alpha), format_double(r), format_double(m.l2),
             format_double(m.linf), format_double(m.psnr)});
    if (!out.empty() && !pgm.empty())
      harness::write_pgm(harness::make_image(p.n, p.n, u), out_file(out, pgm));
  };

  if (!out.empty()) {
    harness::write_pgm(phantom, out_file(out, "ct_truth.pgm"));
    const double lo = *std::min_element(f.begin(), f.end());
    const double hi = *std::max_element(f.begin(), f.end());
    harness::write_pgm(harness::make_image(p.angles, p.offsets, f, lo, hi > lo ? hi : lo + 1),
                       out_file(out, "ct_sinogram.pgm"));
  }
  if (mode == "pinv" || mode == "all")
    record("pinv", 0.0, spectral::pseudo_inverse_apply(svd, f), "ct_pinv.pgm");
  if (mode == "tikhonov" || mode == "all") {
    for (int e = -4; e <= 1; ++e) {
      const double al = std::pow(10.0, e);
      record("tikhonov", al, spectral::filter_apply(svd, spectral::SpectralFilter::tikhonov(al), f),
             "");
    }
    record("tikhonov", p.alpha,
           spectral::filter_apply(svd, spectral::SpectralFilter::tikhonov(p.alpha), f),
           "ct_tikhonov.pgm");
  }
  if (mode == "morozov" || mode == "all") {
    auto solve = [&](double al) {
      return spectral::filter_apply(svd, spectral::SpectralFilter::tikhonov(al), f);
    };
    const auto mz = spectral::morozov_select_alpha(solve, amap, f, p.delta, p.mu);
    res.morozov_alpha = mz.alpha;
    record("morozov", mz.alpha, mz.u, "ct_morozov.pgm");
  }
  if (!out.empty()) csv.write(out_file(out, "ct.csv"));
  return res;
}

//==============================================================================
// deconv
//==============================================================================

struct DeconvParams {
  std::size_t n = 32;       // image is n x n
  std::size_t spikes = 12;
  double blur = 0.6;        // Gaussian kernel sigma in pixels
  std::size_t radius = 2;
  double delta = 0.01;      // per-entry noise standard deviation
  double alpha = 0.1;
  std::size_t iters = 2000;
  bool ista = true;
  double threshold = 1e-3;  // l2 support threshold
  std::uint64_t seed = 1;
};

struct DeconvResult {
  std::size_t true_support = 0;
  std::size_t l2_support = 0;
  std::size_t ista_support = 0;  // exact nonzeros
  harness::Metrics l2_metrics;
  harness::Metrics ista_metrics;
  double ista_objective = 0.0;
};

/// Spike image blurred by a Gaussian (zero boundary) plus Gaussian noise.
/// The Tikhonov reference (A^T A + alpha I)^{-1} A^T f is always computed; ISTA
/// with step 1/||A||^2 runs when enabled.
inline DeconvResult run_deconv(const DeconvParams& p, const fs::path& out = {}) {
  const std::size_t N = p.n * p.n;
  const Vector truth = harness::sparse_spikes(N, p.spikes, p.seed);
  const auto a = forward::convolution_operator(p.n, p.n, forward::gaussian_kernel(p.blur, p.radius),
                                               forward::BoundaryRule::zero);
  const Vector f = harness::add_noise(a.apply(truth), p.delta, p.seed + 1);

  DeconvResult res;
  for (double x : truth) res.true_support += x != 0.0;

  const Vector b = a.adjoint_apply(f);
  const auto tk = solve::conjugate_gradient(normal_operator(a, p.alpha), b, Vector(N, 0.0),
                                            2000, 1e-12 * std::max(norm2(b), 1e-300));
  for (double x : tk.u) res.l2_support += std::abs(x) > p.threshold;
  res.l2_metrics = harness::metrics(tk.u, truth);

  harness::CsvTable summary({"method", "alpha", "support", "l2", "linf"});
  summary.row({"truth", "0", std::to_string(res.true_support), "0", "0"});
  summary.row({"tikhonov", format_double(p.alpha), std::to_string(res.l2_support),
               format_double(res.l2_metrics.l2), format_double(res.l2_metrics.linf)});
  Vector ista_u(N, 0.0);
  if (p.ista) {
    const double L = operator_norm(a, 200, 3) * 1.01;
    const auto r = solve::ista(a, f, p.alpha, 1.0 / (L * L), Vector(N, 0.0), p.iters,
                               {0.0, {}, p.iters});
    ista_u = r.u;
    for (double x : ista_u) res.ista_support += x != 0.0;
    res.ista_metrics = harness::metrics(ista_u, truth);
    res.ista_objective = solve::lasso_objective(a, f, p.alpha)(ista_u);
    summary.row({"ista", format_double(p.alpha), std::to_string(res.ista_support),
                 format_double(res.ista_metrics.l2), format_double(res.ista_metrics.linf)});
  }
  if (!out.empty()) {
    summary.write(out_file(out, "deconv_summary.csv"));
    harness::CsvTable sig({"index", "truth", "data", "tikhonov", "ista"});
    for (std::size_t i = 0; i < N; ++i)
      sig.row(Vector{static_cast<double>(i), truth[i], f[i], tk.u[i], ista_u[i]});
    sig.write(out_file(out, "deconv_signal.csv"));
  }
  return res;
}

//==============================================================================
// tv
//==============================================================================

struct TvParams {
  std::size_t n = 32;
  double delta = 0.1;  // per-pixel noise standard deviation
  double alpha = 0.1;
  double mu = 2.0;     // ADMM penalty
  std::size_t iters = 2000;
  std::uint64_t seed = 1;
};

struct TvResult {
  double cp_objective = 0.0;
  double admm_objective = 0.0;
  harness::Metrics cp_metrics;
  harness::Metrics admm_metrics;
  Vector cp_u, admm_u, noisy, truth;
};

/// ROF denoising of the phantom (A = I) by Chambolle-Pock and by ADMM.
inline TvResult run_tv(const TvParams& p, const fs::path& out = {}) {
  const auto phantom = harness::phantom_ellipses(p.n);
  const std::size_t N = p.n * p.n;
  TvResult res;
  res.truth = phantom.values;
  res.noisy = harness::add_noise(phantom.values, p.delta, p.seed);
  const auto id = LinearMap::identity(N);
  const auto obj = solve::rof_objective(id, res.noisy, p.n, p.n, p.alpha);
  const std::size_t every = std::max<std::size_t>(1, p.iters / 100);

  const auto cfg = solve::tv_default_config(id, p.n, p.n, p.iters);
  solve::RunOptions ro;
  ro.log_every = every;
  const auto cp = solve::tv_reconstruct(id, res.noisy, p.n, p.n, p.alpha, cfg, std::nullopt, ro);
  solve::AdmmOptions ao;
  ao.log_every = every;
  const auto ad = solve::admm(id, res.noisy, p.n, p.n, p.alpha, p.mu, p.iters, ao);

  res.cp_u = cp.u;
  res.admm_u = ad.u;
  res.cp_objective = obj(cp.u);
  res.admm_objective = obj(ad.u);
  res.cp_metrics = harness::metrics(cp.u, res.truth);
  res.admm_metrics = harness::metrics(ad.u, res.truth);

  if (!out.empty()) {
    harness::write_pgm(phantom, out_file(out, "tv_truth.pgm"));
    harness::write_pgm(harness::make_image(p.n, p.n, res.noisy), out_file(out, "tv_noisy.pgm"));
    harness::write_pgm(harness::make_image(p.n, p.n, res.cp_u), out_file(out, "tv_cp.pgm"));
    harness::write_pgm(harness::make_image(p.n, p.n, res.admm_u), out_file(out, "tv_admm.pgm"));
    harness::CsvTable trace({"iteration", "cp_objective", "admm_objective"});
    const auto& lc = cp.log.records();
    const auto& la = ad.log.records();
    for (std::size_t i = 0; i < std::min(lc.size(), la.size()); ++i)
      trace.row(Vector{static_cast<double>(lc[i].k), lc[i].objective.value_or(NAN),
                       la[i].objective.value_or(NAN)});
    trace.write(out_file(out, "tv_trace.csv"));
    harness::CsvTable summary({"method", "objective", "l2", "linf", "psnr"});
    summary.row({"cp", format_double(res.cp_objective), format_double(res.cp_metrics.l2),
                 format_double(res.cp_metrics.linf), format_double(res.cp_metrics.psnr)});
    summary.row({"admm", format_double(res.admm_objective), format_double(res.admm_metrics.l2),
                 format_double(res.admm_metrics.linf), format_double(res.admm_metrics.psnr)});
    summary.write(out_file(out, "tv_summary.csv"));
  }
  return res;
}

//==============================================================================
// learn-spectral
//==============================================================================

/// A = sum_i sigma_i q_i w_i^T with random orthonormal q, w and sigma_i
/// equispaced from 1 down to sigma_min.
inline Matrix synthetic_operator(std::size_t modes, double sigma_min, std::uint64_t seed) {
  SplitMix64 rng(seed);
  const auto s1 = invprob::svd(random_gaussian_matrix(modes, modes, rng));
  const auto s2 = invprob::svd(random_gaussian_matrix(modes, modes, rng));
  if (s1.rank != modes || s2.rank != modes)
    throw std::runtime_error("synthetic_operator: rank-deficient draw");
  Matrix a(modes, modes);
  for (std::size_t k = 0; k < modes; ++k) {
    const double sig = modes == 1 ? 1.0
                                  : 1.0 - (1.0 - sigma_min) * static_cast<double>(k) /
                                              static_cast<double>(modes - 1);
    for (std::size_t i = 0; i < modes; ++i)
      for (std::size_t j = 0; j < modes; ++j)
        a(i, j) += sig * s1.left_vectors[k][i] * s2.left_vectors[k][j];
  }
  return a;
}

struct LearnSpectralParams {
  std::size_t modes = 10;
  std::size_t samples = 10000;
  double sigma_min = 0.5;
  double delta = 0.2;  // noise standard deviation per entry; prior is N(0, I)
  double tau = 0.5;
  std::size_t epochs = 60;
  std::size_t batch = 1000;
  std::uint64_t seed = 1;
};

struct LearnSpectralResult {
  Vector sigma;
  Vector trained;
  Vector closed_form;  // sigma / (sigma^2 + delta^2), population statistics
  Vector empirical;    // same formula with sample Delta_i, Pi_i
  double max_abs_diff = 0.0;  // trained vs closed_form
  double delta_mu = 0.0;
};

inline LearnSpectralResult run_learn_spectral(const LearnSpectralParams& p,
                                              const fs::path& out = {}) {
  if (p.samples == 0) throw std::invalid_argument("learn-spectral: samples must be > 0");
  const Matrix a = synthetic_operator(p.modes, p.sigma_min, p.seed);
  auto svd = std::make_shared<const SvdFactorization>(invprob::svd(a));
  SplitMix64 rng(p.seed ^ 0xA5A5A5A5ULL);
  std::vector<learn::SpectralSample> samples;
  std::vector<Vector> noise, signal;
  samples.reserve(p.samples);
  for (std::size_t j = 0; j < p.samples; ++j) {
    Vector u = rng.normal_vector(p.modes);
    Vector e = rng.normal_vector(p.modes, p.delta);
    Vector f = add(a.multiply(u), e);
    signal.push_back(u);
    noise.push_back(std::move(e));
    samples.push_back({std::move(u), std::move(f)});
  }
  const auto model = learn::train_spectral(svd, samples, p.tau, p.epochs, p.seed, p.batch);
  const auto st = learn::spectral_statistics(noise, signal, *svd);

  LearnSpectralResult res;
  res.sigma = svd->singular_values;
  res.trained = model.theta;
  res.empirical = spectral::mse_optimal_filter(*svd, st.stats).theta();
  res.delta_mu = st.delta_mu;
  spectral::SpectralStatistics pop{Vector(svd->rank, p.delta * p.delta), Vector(svd->rank, 1.0)};
  res.closed_form = spectral::mse_optimal_filter(*svd, pop).theta();
  harness::CsvTable csv({"index", "sigma", "theta_trained", "theta_closed_form",
                         "theta_empirical", "abs_diff"});
  for (std::size_t i = 0; i < svd->rank; ++i) {
    const double d = std::abs(res.trained[i] - res.closed_form[i]);
    res.max_abs_diff = std::max(res.max_abs_diff, d);
    csv.row(Vector{static_cast<double>(i), res.sigma[i], res.trained[i], res.closed_form[i],
                   res.empirical[i], d});
  }
  if (!out.empty()) csv.write(out_file(out, "learn_spectral.csv"));
  return res;
}

}  // namespace invprob::experiments
