#pragma once

#include <charconv>
#include <functional>
#include <iostream>
#include <map>
#include <ostream>
#include <string>
#include <system_error>
#include <type_traits>
#include <vector>

#include <CLI11.hpp>

#include "experiments.hpp"
#include "harness.hpp"
#include "selftest.hpp"

namespace invprob::cli {

class usage_error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

namespace detail {

template <class T>
T parse_value(const std::string& key, const std::string& s) {
  if constexpr (std::is_same_v<T, std::string>) {
    return s;
  } else if constexpr (std::is_same_v<T, bool>) {
    if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
    if (s == "false" || s == "0" || s == "no" || s == "off") return false;
    throw usage_error("config key '" + key + "': expected a boolean, got '" + s + "'");
  } else {
    T v{};
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
      throw usage_error("config key '" + key + "': cannot parse '" + s + "'");
    return v;
  }
}

/// Binds options to variables on one subcommand and remembers how to set each
/// from a config-file string, so config values act as defaults that explicit
/// flags override.
class Options {
 public:
  explicit Options(CLI::App* app) : app_(app) {}

  template <class T>
  Options& add(const std::string& name, T& var, const std::string& desc) {
    app_->add_option("--" + name, var, desc)->capture_default_str();
    setters_[name] = [&var, name](const std::string& v) { var = parse_value<T>(name, v); };
    return *this;
  }

  Options& flag(const std::string& name, bool& var, const std::string& desc) {
    app_->add_flag("--" + name, var, desc);
    setters_[name] = [&var, name](const std::string& v) { var = parse_value<bool>(name, v); };
    return *this;
  }

  void apply(const std::map<std::string, std::string>& cfg) const {
    for (const auto& [k, v] : cfg) {
      if (k == "config") continue;
      const auto it = setters_.find(k);
      if (it == setters_.end())
        throw usage_error("config key '" + k + "' is not an option of '" + app_->get_name() + "'");
      it->second(v);
    }
  }

  CLI::App* app() const { return app_; }

 private:
  CLI::App* app_;
  std::map<std::string, std::function<void(const std::string&)>> setters_;
};

struct Common {
  std::uint64_t seed = 1;
  std::string out = "out";
  std::string config;
};

inline void add_common(Options& o, Common& c) {
  o.add("seed", c.seed, "random seed");
  o.add("out", c.out, "output directory");
  o.add("config", c.config, "flat key = value config file; flags override it");
}

inline std::string find_config(const std::vector<std::string>& args) {
  for (std::size_t i = 0; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) return args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) return args[i].substr(9);
  }
  return {};
}

inline std::string fmt(double v) { return format_double(v); }

}  // namespace detail

/// Runs one command line (without the program name). Exit codes: 0 success,
/// 1 runtime failure, 2 usage error.
inline int cli_main(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  using detail::Options;
  CLI::App app{"Inverse-problems toolbox: experiments and self-test", "invprob"};
  app.require_subcommand(1);

  detail::Common common;
  std::map<std::string, Options> opts;
  auto sub = [&](const std::string& name, const std::string& desc) -> Options& {
    auto it = opts.emplace(name, Options(app.add_subcommand(name, desc))).first;
    detail::add_common(it->second, common);
    return it->second;
  };

  double unused_alpha = 0.0;
  experiments::NumdiffParams nd;
  sub("numdiff", "numerical differentiation error sweep over noise frequency k")
      .add("n", nd.n, "grid points")
      .add("delta", nd.delta, "noise amplitude")
      .add("alpha", unused_alpha, "ignored")
      .add("kmax", nd.k_max, "largest frequency (powers of two from 1)");

  experiments::CtParams ct;
  sub("ct", "toy tomography: pseudo-inverse, Tikhonov sweep and Morozov choice")
      .add("n", ct.n, "image side")
      .add("angles", ct.angles, "number of projection angles")
      .add("offsets", ct.offsets, "detector offsets per angle")
      .add("delta", ct.delta, "noise norm ||eps||_2")
      .add("alpha", ct.alpha, "Tikhonov weight for the single run")
      .add("mu", ct.mu, "Morozov factor (>= 1)")
      .add("mode", ct.mode, "pinv | tikhonov | morozov | all");

  experiments::DeconvParams dc;
  bool dc_ista_flag = false, dc_no_ista = false;
  sub("deconv", "sparse spike deconvolution: Tikhonov reference and ISTA")
      .add("n", dc.n, "image side")
      .add("spikes", dc.spikes, "number of spikes")
      .add("blur", dc.blur, "Gaussian kernel width in pixels")
      .add("radius", dc.radius, "kernel radius")
      .add("delta", dc.delta, "noise standard deviation")
      .add("alpha", dc.alpha, "regularisation weight")
      .add("iters", dc.iters, "ISTA iterations")
      .add("threshold", dc.threshold, "support threshold for the l2 solution")
      .flag("ista", dc_ista_flag, "run ISTA (default; kept for explicitness)")
      .flag("no-ista", dc_no_ista, "skip ISTA (the l2 reference still runs)");

  experiments::TvParams tv;
  sub("tv", "total-variation denoising of the phantom by Chambolle-Pock and ADMM")
      .add("n", tv.n, "image side")
      .add("delta", tv.delta, "noise standard deviation")
      .add("alpha", tv.alpha, "TV weight")
      .add("mu", tv.mu, "ADMM penalty")
      .add("iters", tv.iters, "iterations per solver");

  experiments::LearnSpectralParams ls;
  sub("learn-spectral", "train spectral coefficients and compare with the closed form")
      .add("modes", ls.modes, "problem size")
      .add("samples", ls.samples, "training pairs")
      .add("sigma-min", ls.sigma_min, "smallest singular value")
      .add("delta", ls.delta, "noise standard deviation")
      .add("alpha", unused_alpha, "ignored")
      .add("tau", ls.tau, "SGD step size")
      .add("epochs", ls.epochs, "epochs")
      .add("batch", ls.batch, "minibatch size");

  double unused_delta = 0.0;
  sub("selftest", "run the acceptance suite")
      .add("delta", unused_delta, "ignored")
      .add("alpha", unused_alpha, "ignored");

  std::vector<std::string> full{"invprob"};
  full.insert(full.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& s : full) argv.push_back(s.c_str());

  if (!args.empty() && !args[0].empty() && args[0][0] != '-' && !opts.count(args[0])) {
    err << "error: unknown subcommand '" << args[0] << "'\n" << app.help();
    return 2;
  }

  try {
    const std::string cfg_path = detail::find_config(args);
    if (!cfg_path.empty()) {
      std::string subname;
      for (const auto& a : args)
        if (!a.empty() && a[0] != '-') {
          subname = a;
          break;
        }
      const auto it = opts.find(subname);
      if (it != opts.end()) it->second.apply(harness::load_config(cfg_path));
    }
  } catch (const usage_error& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << (app.get_subcommands().empty() ? app.help() : app.get_subcommands().front()->help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n" << app.help();
    return 2;
  }

  CLI::App* chosen = app.get_subcommands().front();
  const std::string name = chosen->get_name();
  const std::filesystem::path outdir = common.out;
  try {
    if (name == "numdiff") {
      const auto r = experiments::run_numdiff(nd, outdir);
      for (const auto& row : r.rows)
        out << "k=" << row.k << " recon_l2=" << detail::fmt(row.recon_l2)
            << " recon_linf=" << detail::fmt(row.recon_linf) << "\n";
      out << "linf_ratio=" << detail::fmt(r.linf_ratio) << "\n";
    } else if (name == "ct") {
      ct.seed = common.seed;
      const auto r = experiments::run_ct(ct, outdir);
      out << "rank=" << r.rank << "\n";
      for (const auto& row : r.rows)
        out << row.method << " alpha=" << detail::fmt(row.alpha)
            << " residual=" << detail::fmt(row.residual) << " l2=" << detail::fmt(row.m.l2)
            << " psnr=" << detail::fmt(row.m.psnr) << "\n";
    } else if (name == "deconv") {
      dc.seed = common.seed;
      if (dc_ista_flag && dc_no_ista) throw usage_error("--ista and --no-ista are exclusive");
      dc.ista = !dc_no_ista;
      const auto r = experiments::run_deconv(dc, outdir);
      out << "true_support=" << r.true_support << "\n";
      out << "l2_support=" << r.l2_support << " l2_err=" << detail::fmt(r.l2_metrics.l2) << "\n";
      if (dc.ista)
        out << "ista_support=" << r.ista_support << " ista_err=" << detail::fmt(r.ista_metrics.l2)
            << " objective=" << detail::fmt(r.ista_objective) << "\n";
    } else if (name == "tv") {
      tv.seed = common.seed;
      const auto r = experiments::run_tv(tv, outdir);
      out << "cp_objective=" << detail::fmt(r.cp_objective)
          << " admm_objective=" << detail::fmt(r.admm_objective) << "\n";
      out << "cp_psnr=" << detail::fmt(r.cp_metrics.psnr)
          << " admm_psnr=" << detail::fmt(r.admm_metrics.psnr) << "\n";
    } else if (name == "learn-spectral") {
      ls.seed = common.seed;
      const auto r = experiments::run_learn_spectral(ls, outdir);
      for (std::size_t i = 0; i < r.sigma.size(); ++i)
        out << "i=" << i << " sigma=" << detail::fmt(r.sigma[i])
            << " trained=" << detail::fmt(r.trained[i])
            << " closed_form=" << detail::fmt(r.closed_form[i]) << "\n";
      out << "max_abs_diff=" << detail::fmt(r.max_abs_diff)
          << " delta_mu=" << detail::fmt(r.delta_mu) << "\n";
    } else if (name == "selftest") {
      const selftest::CliRunner runner = [](const std::vector<std::string>& a, std::ostream& o,
                                            std::ostream& e) { return cli_main(a, o, e); };
      const auto report = selftest::run_all(runner, &out);
      if (chosen->get_option("--out")->count() > 0)
        harness::write_file_atomic(outdir / "selftest.txt", report.text());
      return report.all_passed() ? 0 : 1;
    }
  } catch (const usage_error& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << name << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}

inline int cli_main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return cli_main(args, std::cout, std::cerr);
}

}  // namespace invprob::cli
