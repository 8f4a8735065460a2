#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <memory>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "core.hpp"
#include "linop.hpp"
#include "spectral.hpp"

namespace invprob::learn {

//==============================================================================
// Activations
//==============================================================================

struct Activation {
  enum class Kind { relu, prelu, sigmoid, identity, softmax };

  Kind kind = Kind::identity;
  double slope = 0.0;  // prelu only

  static Activation relu() { return {Kind::relu, 0.0}; }
  static Activation prelu(double a) {
    if (!(a >= 0.0)) throw std::invalid_argument("prelu: slope must be >= 0");
    return {Kind::prelu, a};
  }
  static Activation sigmoid() { return {Kind::sigmoid, 0.0}; }
  static Activation identity() { return {Kind::identity, 0.0}; }
  static Activation softmax() { return {Kind::softmax, 0.0}; }

  Vector value(ConstSpan w) const {
    Vector a(w.size());
    switch (kind) {
      case Kind::relu:
        for (std::size_t i = 0; i < w.size(); ++i) a[i] = w[i] > 0.0 ? w[i] : 0.0;
        break;
      case Kind::prelu:
        for (std::size_t i = 0; i < w.size(); ++i) a[i] = w[i] > 0.0 ? w[i] : slope * w[i];
        break;
      case Kind::sigmoid:
        for (std::size_t i = 0; i < w.size(); ++i) a[i] = 1.0 / (1.0 + std::exp(-w[i]));
        break;
      case Kind::identity:
        a.assign(w.begin(), w.end());
        break;
      case Kind::softmax: {
        if (w.empty()) break;
        const double m = *std::max_element(w.begin(), w.end());
        double s = 0.0;
        for (std::size_t i = 0; i < w.size(); ++i) s += (a[i] = std::exp(w[i] - m));
        for (double& x : a) x /= s;
        break;
      }
    }
    return a;
  }

  /// Pulls an upstream gradient g = d loss / d a back through the activation:
  /// sigma'(w) * g elementwise, or J^T g for softmax.
  Vector backward(ConstSpan w, ConstSpan a, ConstSpan g) const {
    Vector out(w.size());
    switch (kind) {
      case Kind::relu:
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] > 0.0 ? g[i] : 0.0;
        break;
      case Kind::prelu:
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = w[i] > 0.0 ? g[i] : slope * g[i];
        break;
      case Kind::sigmoid:
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = a[i] * (1.0 - a[i]) * g[i];
        break;
      case Kind::identity:
        out.assign(g.begin(), g.end());
        break;
      case Kind::softmax: {
        const double ag = dot(a, g);
        for (std::size_t i = 0; i < w.size(); ++i) out[i] = a[i] * (g[i] - ag);
        break;
      }
    }
    return out;
  }

  std::string name() const {
    switch (kind) {
      case Kind::relu: return "relu";
      case Kind::prelu: return "prelu(" + format_double(slope) + ")";
      case Kind::sigmoid: return "sigmoid";
      case Kind::identity: return "identity";
      case Kind::softmax: return "softmax";
    }
    return "?";
  }

  static Activation parse(const std::string& s) {
    if (s == "relu") return relu();
    if (s == "sigmoid") return sigmoid();
    if (s == "identity") return identity();
    if (s == "softmax") return softmax();
    if (s.rfind("prelu(", 0) == 0 && s.size() > 7 && s.back() == ')')
      return prelu(std::stod(s.substr(6, s.size() - 7)));
    throw std::invalid_argument("unknown activation '" + s + "'");
  }
};

//==============================================================================
// Network
//==============================================================================

/// a = act(W x + b)
struct DenseLayer {
  Matrix W;
  Vector b;
  Activation act;

  std::size_t inputs() const { return W.cols(); }
  std::size_t outputs() const { return W.rows(); }
};

class Network {
 public:
  Network() = default;
  explicit Network(std::vector<DenseLayer> layers) : layers_(std::move(layers)) { validate(); }

  const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
  std::size_t depth() const noexcept { return layers_.size(); }
  std::size_t input_size() const { return layers_.empty() ? 0 : layers_.front().inputs(); }
  std::size_t output_size() const { return layers_.empty() ? 0 : layers_.back().outputs(); }

  /// Bumped by every mutation; forward caches remember the value they saw.
  std::uint64_t version() const noexcept { return version_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.W.rows() * l.W.cols() + l.b.size();
    return n;
  }

  /// Per layer: W row-major, then b.
  Vector parameters() const {
    Vector p;
    p.reserve(parameter_count());
    for (const auto& l : layers_) {
      p.insert(p.end(), l.W.data().begin(), l.W.data().end());
      p.insert(p.end(), l.b.begin(), l.b.end());
    }
    return p;
  }

  void set_parameters(ConstSpan p) {
    require_length("Network::set_parameters", parameter_count(), p.size());
    std::size_t off = 0;
    for (auto& l : layers_) {
      auto& d = l.W.data();
      std::copy(p.begin() + off, p.begin() + off + d.size(), d.begin());
      off += d.size();
      std::copy(p.begin() + off, p.begin() + off + l.b.size(), l.b.begin());
      off += l.b.size();
    }
    ++version_;
  }

  DenseLayer& mutable_layer(std::size_t i) {
    ++version_;
    return layers_.at(i);
  }

 private:
  void validate() const {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const auto& L = layers_[l];
      require_length("layer bias", L.W.rows(), L.b.size());
      if (l > 0) require_length("layer input", layers_[l - 1].outputs(), L.inputs());
      if (L.act.kind == Activation::Kind::softmax && l + 1 != layers_.size())
        throw std::invalid_argument("softmax is only allowed on the output layer");
      if (!all_finite(L.W.data()) || !all_finite(L.b))
        throw std::invalid_argument("non-finite parameters in layer " + std::to_string(l));
    }
  }

  std::vector<DenseLayer> layers_;
  std::uint64_t version_ = 0;
};

/// a[0] = x; w[l] = W_l a[l] + b_l; a[l+1] = act_l(w[l]).
struct ForwardCache {
  std::uint64_t version = 0;
  std::vector<Vector> a;
  std::vector<Vector> w;
};

struct ForwardResult {
  Vector output;
  ForwardCache cache;
};

inline ForwardResult forward(const Network& net, ConstSpan x) {
  require_length("forward input", net.input_size(), x.size());
  ForwardResult r;
  r.cache.version = net.version();
  r.cache.a.emplace_back(x.begin(), x.end());
  for (const auto& L : net.layers()) {
    Vector w = L.W.multiply(r.cache.a.back());
    for (std::size_t i = 0; i < w.size(); ++i) w[i] += L.b[i];
    r.cache.a.push_back(L.act.value(w));
    r.cache.w.push_back(std::move(w));
  }
  r.output = r.cache.a.back();
  return r;
}

inline Vector predict(const Network& net, ConstSpan x) { return forward(net, x).output; }

struct Gradients {
  std::vector<Matrix> dW;
  std::vector<Vector> db;

  /// Same layout as Network::parameters().
  Vector flatten() const {
    Vector p;
    for (std::size_t l = 0; l < dW.size(); ++l) {
      p.insert(p.end(), dW[l].data().begin(), dW[l].data().end());
      p.insert(p.end(), db[l].begin(), db[l].end());
    }
    return p;
  }
};

/// Loss 1/2 ||a^L - y||^2.
inline double squared_error(ConstSpan output, ConstSpan target) {
  require_length("loss target", output.size(), target.size());
  const double d = distance(output, target);
  return 0.5 * d * d;
}

/// Gradients of 1/2 ||net(x) - y||^2 from a cache of the matching forward pass.
inline Gradients backprop(const Network& net, const ForwardCache& cache, ConstSpan target) {
  const std::size_t L = net.depth();
  if (cache.version != net.version() || cache.w.size() != L || cache.a.size() != L + 1)
    throw std::logic_error("backprop: stale forward cache");
  require_length("backprop target", net.output_size(), target.size());

  Gradients g;
  g.dW.resize(L);
  g.db.resize(L);
  Vector upstream = subtract(cache.a[L], target);
  for (std::size_t l = L; l-- > 0;) {
    const auto& layer = net.layers()[l];
    Vector delta = layer.act.backward(cache.w[l], cache.a[l + 1], upstream);
    const Vector& prev = cache.a[l];
    Matrix dw(layer.outputs(), layer.inputs());
    for (std::size_t i = 0; i < dw.rows(); ++i)
      for (std::size_t j = 0; j < dw.cols(); ++j) dw(i, j) = delta[i] * prev[j];
    if (l > 0) upstream = layer.W.multiply_transpose(delta);
    g.dW[l] = std::move(dw);
    g.db[l] = std::move(delta);
  }
  return g;
}

inline Gradients backprop(const Network& net, ConstSpan x, ConstSpan target) {
  return backprop(net, forward(net, x).cache, target);
}

//==============================================================================
// Initialisation and persistence
//==============================================================================

/// Weights and biases uniform in [-1/sqrt(d), 1/sqrt(d)], d the layer input size.
inline Network initialize_network(const std::vector<std::size_t>& sizes,
                                  const std::vector<Activation>& acts, std::uint64_t seed) {
  if (sizes.size() < 2) throw std::invalid_argument("initialize_network: need >= 2 sizes");
  require_length("initialize_network activations", sizes.size() - 1, acts.size());
  SplitMix64 rng(seed);
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const std::size_t d = sizes[l], e = sizes[l + 1];
    if (d == 0 || e == 0) throw std::invalid_argument("initialize_network: zero layer size");
    const double s = 1.0 / std::sqrt(static_cast<double>(d));
    Matrix w(e, d, rng.uniform_vector(d * e, -s, s));
    layers.push_back({std::move(w), rng.uniform_vector(e, -s, s), acts[l]});
  }
  return Network(std::move(layers));
}

/// "dense-net v1" text format: a header line with sizes and activations,
/// then per layer the rows of W followed by b, 17 significant digits.
inline void save_network(const Network& net, std::ostream& os) {
  os << "dense-net v1 sizes";
  if (net.depth() > 0) os << ' ' << net.input_size();
  for (const auto& l : net.layers()) os << ' ' << l.outputs();
  os << " activations";
  for (const auto& l : net.layers()) os << ' ' << l.act.name();
  os << '\n';
  for (const auto& l : net.layers()) {
    for (std::size_t i = 0; i < l.W.rows(); ++i) {
      for (std::size_t j = 0; j < l.W.cols(); ++j)
        os << (j ? " " : "") << format_double(l.W(i, j));
      os << '\n';
    }
    for (std::size_t i = 0; i < l.b.size(); ++i) os << (i ? " " : "") << format_double(l.b[i]);
    os << '\n';
  }
}

inline Network load_network(std::istream& is) {
  std::string line;
  if (!std::getline(is, line)) throw std::runtime_error("load_network: empty input");
  std::istringstream hs(line);
  std::string magic, ver, tok;
  hs >> magic >> ver >> tok;
  if (magic != "dense-net" || ver != "v1" || tok != "sizes")
    throw std::runtime_error("load_network: bad header '" + line + "'");
  std::vector<std::size_t> sizes;
  while (hs >> tok && tok != "activations") sizes.push_back(std::stoull(tok));
  if (tok != "activations") throw std::runtime_error("load_network: missing activations");
  std::vector<Activation> acts;
  while (hs >> tok) acts.push_back(Activation::parse(tok));
  if (sizes.size() < 2 || acts.size() + 1 != sizes.size())
    throw std::runtime_error("load_network: inconsistent header '" + line + "'");

  auto read_value = [&is]() {
    std::string t;
    if (!(is >> t)) throw std::runtime_error("load_network: truncated parameters");
    return std::stod(t);
  };
  std::vector<DenseLayer> layers;
  for (std::size_t l = 0; l < acts.size(); ++l) {
    Matrix w(sizes[l + 1], sizes[l]);
    for (double& x : w.data()) x = read_value();
    Vector b(sizes[l + 1]);
    for (double& x : b) x = read_value();
    layers.push_back({std::move(w), std::move(b), acts[l]});
  }
  return Network(std::move(layers));
}

inline std::string to_text(const Network& net) {
  std::ostringstream os;
  save_network(net, os);
  return os.str();
}

inline Network from_text(const std::string& s) {
  std::istringstream is(s);
  return load_network(is);
}

/// Rescales each W so that its spectral norm is at most `bound`.
inline void normalize_layers(Network& net, double bound = 1.0) {
  for (std::size_t l = 0; l < net.depth(); ++l) {
    DenseLayer& layer = net.mutable_layer(l);
    const auto sv = svd(layer.W).singular_values;
    const double s = sv.empty() ? 0.0 : sv.front();
    if (s > bound)
      for (double& x : layer.W.data()) x *= bound / s;
  }
}

//==============================================================================
// Minibatch SGD
//==============================================================================

struct Sample {
  Vector x;
  Vector y;
};
using Dataset = std::vector<Sample>;

/// Mean loss gradient over the given sample indices, accumulated in
/// ascending index order.
inline Vector batch_gradient(const Network& net, const Dataset& data,
                             std::vector<std::size_t> indices) {
  if (indices.empty()) throw std::invalid_argument("batch_gradient: empty batch");
  std::sort(indices.begin(), indices.end());
  Vector g(net.parameter_count(), 0.0);
  for (std::size_t j : indices) {
    const Vector gj = backprop(net, data.at(j).x, data.at(j).y).flatten();
    for (std::size_t i = 0; i < g.size(); ++i) g[i] += gj[i];
  }
  const double inv = 1.0 / static_cast<double>(indices.size());
  for (double& x : g) x *= inv;
  return g;
}

inline Vector full_gradient(const Network& net, const Dataset& data) {
  std::vector<std::size_t> all(data.size());
  std::iota(all.begin(), all.end(), std::size_t{0});
  return batch_gradient(net, data, std::move(all));
}

inline double mean_loss(const Network& net, const Dataset& data) {
  if (data.empty()) throw std::invalid_argument("mean_loss: empty dataset");
  CompensatedSum s;
  for (const auto& smp : data) s.add(squared_error(predict(net, smp.x), smp.y));
  return s.value() / static_cast<double>(data.size());
}

/// Uniform minibatch of `batch` distinct indices (partial Fisher-Yates).
inline std::vector<std::size_t> sample_batch(std::size_t n, std::size_t batch,
                                             SplitMix64& rng) {
  if (batch == 0 || batch > n) throw std::invalid_argument("sample_batch: need 0 < batch <= n");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = 0; i < batch; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  idx.resize(batch);
  return idx;
}

struct TrainResult {
  Network net;
  Vector loss_trace;  // mean loss after each epoch
};

/// Each epoch shuffles the dataset and walks it in consecutive batches; the
/// last batch may be shorter.
inline TrainResult sgd_train(Network net, const Dataset& data, std::size_t batch_size,
                             double tau, std::size_t epochs, std::uint64_t seed) {
  if (data.empty()) throw std::invalid_argument("sgd_train: empty dataset");
  if (batch_size == 0 || batch_size > data.size())
    throw std::invalid_argument("sgd_train: batch size must be in [1, dataset size]");
  if (!(tau > 0.0)) throw std::invalid_argument("sgd_train: tau must be > 0");
  SplitMix64 rng(seed);
  const std::size_t n = data.size();
  std::vector<std::size_t> order(n);
  TrainResult r{std::move(net), {}};
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      std::vector<std::size_t> b(order.begin() + start, order.begin() + stop);
      const Vector g = batch_gradient(r.net, data, std::move(b));
      Vector p = r.net.parameters();
      axpy(-tau, g, p);
      r.net.set_parameters(p);
    }
    r.loss_trace.push_back(mean_loss(r.net, data));
  }
  return r;
}

//==============================================================================
// Spectral architecture
//==============================================================================

struct SpectralModel {
  Vector theta;
  std::shared_ptr<const SvdFactorization> svd;
};

/// sum_i theta_i <f, v_i> u_i
inline Vector spectral_forward(const SpectralModel& model, ConstSpan f) {
  if (!model.svd) throw std::logic_error("spectral_forward: model is not bound to an SVD");
  return spectral::filter_apply(*model.svd, spectral::SpectralFilter::learned(model.theta), f);
}

struct SpectralSample {
  Vector u;
  Vector f;
};

/// Minibatch SGD from theta = 0 on the empirical risk
///   1/2 mean_j || H(f_j; theta) - A^+ A u_j ||^2
/// which in coefficient space is 1/2 mean_j sum_i (theta_i c_ij - d_ij)^2 with
/// c_ij = <f_j, v_i>, d_ij = <u_j, u_i>.
inline SpectralModel train_spectral(std::shared_ptr<const SvdFactorization> svd,
                                    const std::vector<SpectralSample>& samples, double tau,
                                    std::size_t epochs, std::uint64_t seed,
                                    std::size_t batch_size = 100) {
  if (!svd) throw std::invalid_argument("train_spectral: null SVD");
  if (samples.empty()) throw std::invalid_argument("train_spectral: empty samples");
  if (!(tau > 0.0)) throw std::invalid_argument("train_spectral: tau must be > 0");
  const std::size_t n = samples.size(), r = svd->rank;
  batch_size = std::clamp<std::size_t>(batch_size, 1, n);

  std::vector<Vector> c(n), d(n);
  for (std::size_t j = 0; j < n; ++j) {
    c[j] = spectral::range_coefficients(*svd, samples[j].f);
    d[j] = spectral::domain_coefficients(*svd, samples[j].u);
  }
  SpectralModel model{Vector(r, 0.0), std::move(svd)};
  SplitMix64 rng(seed);
  std::vector<std::size_t> order(n);
  Vector g(r);
  for (std::size_t e = 0; e < epochs; ++e) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    for (std::size_t start = 0; start < n; start += batch_size) {
      const std::size_t stop = std::min(n, start + batch_size);
      std::vector<std::size_t> b(order.begin() + start, order.begin() + stop);
      std::sort(b.begin(), b.end());
      std::fill(g.begin(), g.end(), 0.0);
      for (std::size_t j : b)
        for (std::size_t i = 0; i < r; ++i)
          g[i] += (model.theta[i] * c[j][i] - d[j][i]) * c[j][i];
      const double step = tau / static_cast<double>(b.size());
      for (std::size_t i = 0; i < r; ++i) model.theta[i] -= step * g[i];
    }
  }
  return model;
}

struct SpectralStatisticsResult {
  spectral::SpectralStatistics stats;
  double delta_mu = 0.0;  // sqrt(max_i Delta_i)
};

inline SpectralStatisticsResult spectral_statistics(const std::vector<Vector>& noise_samples,
                                                    const std::vector<Vector>& signal_samples,
                                                    const SvdFactorization& svd) {
  if (noise_samples.empty() || signal_samples.empty())
    throw std::invalid_argument("spectral_statistics: empty sample set");
  auto energies = [&](const std::vector<Vector>& s, bool range) {
    std::vector<CompensatedSum> acc(svd.rank);
    for (const auto& x : s) {
      const Vector c = range ? spectral::range_coefficients(svd, x)
                             : spectral::domain_coefficients(svd, x);
      for (std::size_t i = 0; i < svd.rank; ++i) acc[i].add(c[i] * c[i]);
    }
    Vector out(svd.rank);
    for (std::size_t i = 0; i < svd.rank; ++i)
      out[i] = acc[i].value() / static_cast<double>(s.size());
    return out;
  };
  SpectralStatisticsResult r;
  r.stats.delta = energies(noise_samples, true);
  r.stats.pi = energies(signal_samples, false);
  const double m =
      r.stats.delta.empty() ? 0.0 : *std::max_element(r.stats.delta.begin(), r.stats.delta.end());
  r.delta_mu = std::sqrt(m);
  return r;
}

//==============================================================================
// Averaged denoisers
//==============================================================================

using VectorMap = std::function<Vector(ConstSpan)>;

/// max ||Q x - Q y|| / ||x - y|| over the pairs (pairs with x == y skipped).
inline double lipschitz_probe(const VectorMap& q,
                              const std::vector<std::pair<Vector, Vector>>& pairs) {
  double best = 0.0;
  for (const auto& [x, y] : pairs) {
    const double den = distance(x, y);
    if (den == 0.0) continue;
    best = std::max(best, distance(q(x), q(y)) / den);
  }
  return best;
}

/// D = 1/2 (I + Q)
class AveragedDenoiser {
 public:
  explicit AveragedDenoiser(VectorMap q) : q_(std::move(q)) {}

  Vector operator()(ConstSpan v) const {
    Vector out = q_(v);
    require_length("averaged denoiser output", v.size(), out.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * (v[i] + out[i]);
    return out;
  }

  double probe(const std::vector<std::pair<Vector, Vector>>& pairs) const {
    return lipschitz_probe(q_, pairs);
  }

  const VectorMap& inner() const noexcept { return q_; }

 private:
  VectorMap q_;
};

inline AveragedDenoiser averaged_denoiser(VectorMap q) { return AveragedDenoiser(std::move(q)); }

}  // namespace invprob::learn
