#ifndef ROTS_CORE_HPP
#define ROTS_CORE_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace rots {

using Vec = std::vector<double>;
using Rng = std::mt19937_64;

enum class ErrorKind {
  validation,
  parse,
  shape,
  size,
  alignment,
  infeasible,
  unsupported,
  numeric,
  state,
  arch,
  divergence,
  io,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::validation: return "validation";
    case ErrorKind::parse: return "parse";
    case ErrorKind::shape: return "shape";
    case ErrorKind::size: return "size";
    case ErrorKind::alignment: return "alignment";
    case ErrorKind::infeasible: return "infeasible";
    case ErrorKind::unsupported: return "unsupported";
    case ErrorKind::numeric: return "numeric";
    case ErrorKind::state: return "state";
    case ErrorKind::arch: return "arch";
    case ErrorKind::divergence: return "divergence";
    case ErrorKind::io: return "io";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + " error: " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

// Process exit status for an error category: 1 validation, 2 numeric/divergence, 3 I/O.
inline int exit_code(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::numeric:
    case ErrorKind::divergence:
      return 2;
    case ErrorKind::io:
    case ErrorKind::parse:
      return 3;
    default:
      return 1;
  }
}

/// Dense channel-major C x T real matrix: one multichannel signal.
class Signal {
 public:
  Signal() = default;
  Signal(std::size_t channels, std::size_t length, double fill = 0.0)
      : channels_(channels), length_(length), data_(channels * length, fill) {}
  Signal(std::size_t channels, std::size_t length, Vec values)
      : channels_(channels), length_(length), data_(std::move(values)) {
    if (data_.size() != channels_ * length_)
      throw Error(ErrorKind::shape, "signal value count " + std::to_string(data_.size()) +
                                        " != " + std::to_string(channels_) + "x" +
                                        std::to_string(length_));
  }

  /// Univariate convenience constructor.
  static Signal univariate(Vec values) {
    const auto n = values.size();
    return Signal(1, n, std::move(values));
  }

  std::size_t channels() const noexcept { return channels_; }
  std::size_t length() const noexcept { return length_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t c, std::size_t t) { return data_[c * length_ + t]; }
  double operator()(std::size_t c, std::size_t t) const { return data_[c * length_ + t]; }

  std::span<double> values() noexcept { return data_; }
  std::span<const double> values() const noexcept { return data_; }
  const Vec& vec() const noexcept { return data_; }
  Vec& vec() noexcept { return data_; }

  bool same_shape(const Signal& o) const noexcept {
    return channels_ == o.channels_ && length_ == o.length_;
  }

  Signal& operator+=(const Signal& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
  }
  Signal& operator-=(const Signal& o) {
    require_same_shape(o);
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
  }
  Signal& operator*=(double s) {
    for (auto& v : data_) v *= s;
    return *this;
  }
  friend Signal operator+(Signal a, const Signal& b) { return a += b; }
  friend Signal operator-(Signal a, const Signal& b) { return a -= b; }
  friend Signal operator*(Signal a, double s) { return a *= s; }
  friend Signal operator*(double s, Signal a) { return a *= s; }
  friend bool operator==(const Signal&, const Signal&) = default;

  void require_same_shape(const Signal& o) const {
    if (!same_shape(o))
      throw Error(ErrorKind::shape, "signal shapes differ: " + std::to_string(channels_) + "x" +
                                        std::to_string(length_) + " vs " +
                                        std::to_string(o.channels_) + "x" +
                                        std::to_string(o.length_));
  }

 private:
  std::size_t channels_ = 0;
  std::size_t length_ = 0;
  Vec data_;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) s += a[k] * b[k];
  return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline double max_abs(std::span<const double> a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  return m;
}

inline bool all_finite(std::span<const double> a) {
  return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

/// Median of a copy of the values; mean of the two middle elements for even counts.
inline double median(Vec values) {
  if (values.empty()) throw Error(ErrorKind::validation, "median of empty set");
  const auto mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double hi = values[mid];
  if (values.size() % 2 == 1) return hi;
  const double lo = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return 0.5 * (lo + hi);
}

// splitmix64 finalizer
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Named-stream splitter: every consumer of randomness derives its own engine
/// from the root seed and a stable name, so draws in one stream never shift another.
class SeedTree {
 public:
  explicit SeedTree(std::uint64_t root) : root_(root) {}

  std::uint64_t root() const noexcept { return root_; }

  std::uint64_t seed(std::string_view name) const { return mix64(root_ ^ mix64(fnv1a(name))); }
  std::uint64_t seed(std::string_view name, std::uint64_t index) const {
    return mix64(seed(name) ^ mix64(index + 0x51ed270b27ULL));
  }

  Rng stream(std::string_view name) const { return Rng(seed(name)); }
  Rng stream(std::string_view name, std::uint64_t index) const { return Rng(seed(name, index)); }

  SeedTree child(std::string_view name) const { return SeedTree(seed(name)); }

 private:
  std::uint64_t root_;
};

/// Uniform index in [0, n).
inline std::size_t uniform_index(Rng& rng, std::size_t n) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

/// s distinct indices out of [0, n) via partial Fisher-Yates, in draw order.
inline std::vector<std::size_t> sample_without_replacement(Rng& rng, std::size_t n, std::size_t s) {
  if (s > n) throw Error(ErrorKind::validation, "minibatch size exceeds dataset size");
  std::vector<std::size_t> idx(n);
  for (std::size_t k = 0; k < n; ++k) idx[k] = k;
  for (std::size_t k = 0; k < s; ++k) std::swap(idx[k], idx[k + uniform_index(rng, n - k)]);
  idx.resize(s);
  return idx;
}

}  // namespace rots

#endif
