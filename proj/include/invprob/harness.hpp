#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "core.hpp"

namespace invprob::harness {

//==============================================================================
// Images
//==============================================================================

/// Row-major image; height rows of width values. [lo, hi] is the display range.
struct ImageBuffer {
  std::size_t width = 0;
  std::size_t height = 0;
  Vector values;
  double lo = 0.0;
  double hi = 1.0;

  double at(std::size_t row, std::size_t col) const { return values[row * width + col]; }

  void validate() const {
    require_length("ImageBuffer values", width * height, values.size());
    if (!(lo < hi)) throw std::invalid_argument("ImageBuffer: need lo < hi");
    if (!all_finite(values)) throw std::invalid_argument("ImageBuffer: non-finite values");
  }
};

inline ImageBuffer make_image(std::size_t rows, std::size_t cols, Vector values,
                              double lo = 0.0, double hi = 1.0) {
  ImageBuffer img{cols, rows, std::move(values), lo, hi};
  img.validate();
  return img;
}

//==============================================================================
// Phantom
//==============================================================================

struct Ellipse {
  double value;
  double a;  // horizontal semi-axis before rotation
  double b;  // vertical semi-axis before rotation
  double x0;
  double y0;
  double angle_deg;

  bool inside(double x, double y) const {
    const double t = angle_deg * std::numbers::pi / 180.0;
    const double c = std::cos(t), s = std::sin(t);
    const double dx = x - x0, dy = y - y0;
    const double p = dx * c + dy * s;
    const double q = -dx * s + dy * c;
    return (p / a) * (p / a) + (q / b) * (q / b) <= 1.0;
  }
};

/// Ten additive ellipses on [-1, 1]^2, y pointing up. Off-axis ellipses come
/// in mirrored pairs with equal values so the image is left-right symmetric.
inline const std::array<Ellipse, 10>& ellipse_table() {
  static const std::array<Ellipse, 10> table{{
      {1.00, 0.72, 0.95, 0.00, 0.00, 0.0},
      {-0.80, 0.66, 0.88, 0.00, -0.02, 0.0},
      {-0.20, 0.12, 0.32, 0.24, 0.00, -18.0},
      {-0.20, 0.12, 0.32, -0.24, 0.00, 18.0},
      {0.30, 0.22, 0.26, 0.00, 0.40, 0.0},
      {0.15, 0.05, 0.05, 0.00, 0.10, 0.0},
      {0.15, 0.05, 0.05, 0.00, -0.12, 0.0},
      {0.25, 0.07, 0.04, -0.12, -0.60, 0.0},
      {0.25, 0.07, 0.04, 0.12, -0.60, 0.0},
      {0.40, 0.04, 0.06, 0.00, -0.42, 0.0},
  }};
  return table;
}

/// Pixel-centre coordinate of column j in an n-wide image. Mirrored columns
/// get exactly negated coordinates.
inline double phantom_x(std::size_t j, std::size_t n) {
  return (static_cast<double>(2 * j + 1) - static_cast<double>(n)) / static_cast<double>(n);
}

inline double phantom_y(std::size_t i, std::size_t n) {
  return (static_cast<double>(n) - static_cast<double>(2 * i + 1)) / static_cast<double>(n);
}

/// n x n additive-ellipse phantom clipped to [0, 1].
inline ImageBuffer phantom_ellipses(std::size_t n) {
  if (n < 8) throw std::invalid_argument("phantom_ellipses: n must be >= 8");
  Vector v(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const double y = phantom_y(i, n);
    for (std::size_t j = 0; j < n; ++j) {
      const double x = phantom_x(j, n);
      double s = 0.0;
      for (const auto& e : ellipse_table())
        if (e.inside(x, y)) s += e.value;
      v[i * n + j] = std::clamp(s, 0.0, 1.0);
    }
  }
  return make_image(n, n, std::move(v));
}

//==============================================================================
// Signals and noise
//==============================================================================

/// Exactly k nonzeros at seeded positions, magnitudes in [0.5, 1.5], random signs.
inline Vector sparse_spikes(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k > n) throw std::invalid_argument("sparse_spikes: k > n");
  SplitMix64 rng(seed);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) idx[i] = i;
  for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
  Vector v(n, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    const double mag = rng.uniform(0.5, 1.5);
    v[idx[i]] = (rng.next() & 1U) ? mag : -mag;
  }
  return v;
}

enum class NoiseMode { gaussian_sigma, scaled_to_norm };

/// gaussian_sigma: f + N(0, delta^2 I). scaled_to_norm: f + eps, ||eps||_2 = delta.
inline Vector add_noise(ConstSpan f, double delta, std::uint64_t seed,
                        NoiseMode mode = NoiseMode::gaussian_sigma) {
  if (!(delta >= 0.0)) throw std::invalid_argument("add_noise: delta must be >= 0");
  Vector out(f.begin(), f.end());
  if (delta == 0.0 || f.empty()) return out;
  SplitMix64 rng(seed);
  Vector eps = rng.normal_vector(f.size());
  double scale = delta;
  if (mode == NoiseMode::scaled_to_norm) {
    const double n = norm2(eps);
    scale = delta / n;
  }
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += scale * eps[i];
  return out;
}

//==============================================================================
// Metrics
//==============================================================================

struct Metrics {
  double l2 = 0.0;
  double linf = 0.0;
  double psnr = std::numeric_limits<double>::infinity();  // +inf when identical
};

/// psnr = 10 log10(peak^2 / mse); peak is the display range width.
inline Metrics metrics(ConstSpan u_hat, ConstSpan u_true, double peak = 1.0) {
  require_length("metrics", u_true.size(), u_hat.size());
  if (u_true.empty()) throw std::invalid_argument("metrics: empty input");
  Metrics m;
  CompensatedSum s;
  for (std::size_t i = 0; i < u_true.size(); ++i) {
    const double d = u_hat[i] - u_true[i];
    s.add(d * d);
    m.linf = std::max(m.linf, std::abs(d));
  }
  const double sq = s.value();
  m.l2 = std::sqrt(sq);
  const double mse = sq / static_cast<double>(u_true.size());
  if (mse > 0.0) m.psnr = 10.0 * std::log10(peak * peak / mse);
  return m;
}

//==============================================================================
// Files
//==============================================================================

/// Writes to a sibling temporary and renames over the target.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open '" + tmp.string() + "' for writing");
    os.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!os) throw std::runtime_error("write failed for '" + tmp.string() + "'");
  }
  std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

//==============================================================================
// PGM
//==============================================================================

class pgm_parse_error : public std::runtime_error {
 public:
  pgm_parse_error(const std::string& msg, std::size_t offset)
      : std::runtime_error("pgm: " + msg + " at byte " + std::to_string(offset)),
        offset_(offset) {}
  std::size_t offset() const noexcept { return offset_; }

 private:
  std::size_t offset_;
};

/// Linear map of [lo, hi] onto 0..65535, rounded and clamped.
inline std::uint16_t quantize(double v, double lo, double hi) {
  const double t = (v - lo) / (hi - lo) * 65535.0;
  return static_cast<std::uint16_t>(std::clamp(std::round(t), 0.0, 65535.0));
}

/// Binary P5, maxval 65535, big-endian samples.
inline std::string encode_pgm(const ImageBuffer& img) {
  img.validate();
  std::string out = "P5\n" + std::to_string(img.width) + " " + std::to_string(img.height) +
                    "\n65535\n";
  out.reserve(out.size() + 2 * img.values.size());
  for (double v : img.values) {
    const std::uint16_t q = quantize(v, img.lo, img.hi);
    out.push_back(static_cast<char>(q >> 8));
    out.push_back(static_cast<char>(q & 0xFF));
  }
  return out;
}

inline void write_pgm(const ImageBuffer& img, const std::filesystem::path& path) {
  write_file_atomic(path, encode_pgm(img));
}

/// Parses P5 with any maxval (1- or 2-byte samples) and '#' comments in the
/// header; samples map linearly back onto [lo, hi].
inline ImageBuffer decode_pgm(const std::string& bytes, double lo = 0.0, double hi = 1.0) {
  std::size_t pos = 0;
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
  auto skip = [&]() {
    while (pos < bytes.size()) {
      if (is_space(bytes[pos])) {
        ++pos;
      } else if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else {
        break;
      }
    }
  };
  auto number = [&](const char* what) {
    skip();
    const std::size_t start = pos;
    std::uint64_t v = 0;
    while (pos < bytes.size() && bytes[pos] >= '0' && bytes[pos] <= '9') {
      v = v * 10 + static_cast<std::uint64_t>(bytes[pos] - '0');
      if (v > 1000000000ULL) throw pgm_parse_error(std::string(what) + " too large", start);
      ++pos;
    }
    if (pos == start) throw pgm_parse_error(std::string("expected ") + what, start);
    return static_cast<std::size_t>(v);
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5')
    throw pgm_parse_error("bad magic (expected P5)", 0);
  pos = 2;
  const std::size_t w = number("width");
  const std::size_t h = number("height");
  const std::size_t maxval_at = pos;
  const std::size_t maxval = number("maxval");
  if (maxval == 0 || maxval > 65535) throw pgm_parse_error("maxval out of range", maxval_at);
  if (pos >= bytes.size() || !is_space(bytes[pos]))
    throw pgm_parse_error("expected whitespace after header", pos);
  ++pos;
  const std::size_t bps = maxval > 255 ? 2 : 1;
  const std::size_t need = w * h * bps;
  if (bytes.size() - pos < need)
    throw pgm_parse_error("truncated pixel data (need " + std::to_string(need) + " bytes)",
                          bytes.size());
  ImageBuffer img{w, h, Vector(w * h), lo, hi};
  for (std::size_t i = 0; i < w * h; ++i) {
    std::size_t q;
    if (bps == 2)
      q = (static_cast<unsigned char>(bytes[pos + 2 * i]) << 8) |
          static_cast<unsigned char>(bytes[pos + 2 * i + 1]);
    else
      q = static_cast<unsigned char>(bytes[pos + i]);
    if (q > maxval) throw pgm_parse_error("sample exceeds maxval", pos + bps * i);
    img.values[i] = lo + (hi - lo) * static_cast<double>(q) / static_cast<double>(maxval);
  }
  return img;
}

inline ImageBuffer read_pgm(const std::filesystem::path& path, double lo = 0.0,
                            double hi = 1.0) {
  return decode_pgm(read_file(path), lo, hi);
}

//==============================================================================
// CSV
//==============================================================================

/// Comma-separated rows with LF endings. Numbers use 17 significant digits;
/// text fields containing ',', '"' or a newline are quoted.
class CsvTable {
 public:
  explicit CsvTable(std::vector<std::string> header) : header_(std::move(header)) {}

  CsvTable& row(const std::vector<std::string>& fields) {
    require_length("csv row", header_.size(), fields.size());
    rows_.push_back(fields);
    return *this;
  }

  CsvTable& row(const Vector& numbers) {
    std::vector<std::string> f;
    for (double x : numbers) f.push_back(format_double(x));
    return row(f);
  }

  const std::vector<std::string>& header() const noexcept { return header_; }
  std::size_t size() const noexcept { return rows_.size(); }

  std::string str() const {
    std::string out;
    append(out, header_);
    for (const auto& r : rows_) append(out, r);
    return out;
  }

  void write(const std::filesystem::path& path) const { write_file_atomic(path, str()); }

 private:
  static void append(std::string& out, const std::vector<std::string>& fields) {
    for (std::size_t i = 0; i < fields.size(); ++i) {
      if (i) out += ',';
      const std::string& f = fields[i];
      if (f.find_first_of(",\"\n") == std::string::npos) {
        out += f;
      } else {
        out += '"';
        for (char c : f) {
          if (c == '"') out += '"';
          out += c;
        }
        out += '"';
      }
    }
    out += '\n';
  }

  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

//==============================================================================
// Config
//==============================================================================

/// Flat "key = value" lines; '#' starts a comment; blank lines ignored.
inline std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  auto trim = [](std::string s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return std::string();
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (const auto h = line.find('#'); h != std::string::npos) line.erase(h);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("config line " + std::to_string(lineno) + ": expected key = value");
    std::string key = trim(line.substr(0, eq));
    if (key.empty())
      throw std::runtime_error("config line " + std::to_string(lineno) + ": empty key");
    out[key] = trim(line.substr(eq + 1));
  }
  return out;
}

inline std::map<std::string, std::string> load_config(const std::filesystem::path& path) {
  return parse_config(read_file(path));
}

}  // namespace invprob::harness
