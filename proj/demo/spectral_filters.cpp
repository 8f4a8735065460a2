// Compares spectral filters on the discretised integration operator.
#include <cmath>
#include <cstdio>
#include <numbers>

#include "invprob/forward.hpp"
#include "invprob/harness.hpp"
#include "invprob/spectral.hpp"

using namespace invprob;

int main() {
  const std::size_t n = 64;
  const auto a = forward::integration_operator(n);
  Vector u(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double t = static_cast<double>(i) / static_cast<double>(n - 1);
    u[i] = std::sin(2 * std::numbers::pi * t);
  }
  const Vector f = harness::add_noise(a.apply(u), 0.01, 1);
  const auto s = svd(a.to_dense());

  const double sigma_max = s.singular_values.front();
  std::printf("rank %zu, sigma_max %.3g, sigma_min %.3g\n", s.rank, sigma_max,
              s.singular_values.back());

  auto report = [&](const char* name, const spectral::SpectralFilter& filt) {
    const auto m = harness::metrics(spectral::filter_apply(s, filt, f), u);
    std::printf("%-14s l2 %.4g  linf %.4g\n", name, m.l2, m.linf);
  };
  report("pseudo-inverse", spectral::SpectralFilter::pseudo_inverse());
  for (double alpha : {1e-4, 1e-3, 1e-2})
    report(("tikhonov " + format_double(alpha).substr(0, 6)).c_str(),
           spectral::SpectralFilter::tikhonov(alpha));
  report("tsvd 0.05", spectral::SpectralFilter::tsvd(0.05));
  return 0;
}
