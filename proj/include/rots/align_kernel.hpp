#ifndef ROTS_ALIGN_KERNEL_HPP
#define ROTS_ALIGN_KERNEL_HPP

#include <cstdint>
#include <functional>
#include <iostream>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "core.hpp"
#include "ts_data.hpp"

namespace rots {

/// Monotone alignment path between two series, stored with 0-based indices.
/// Each step advances the first index, the second, or both by exactly one.
struct Alignment {
  std::vector<std::uint32_t> first;
  std::vector<std::uint32_t> second;

  std::size_t size() const noexcept { return first.size(); }
  friend bool operator==(const Alignment&, const Alignment&) = default;

  static Alignment diagonal(std::size_t length) {
    Alignment a;
    for (std::uint32_t t = 0; t < length; ++t) {
      a.first.push_back(t);
      a.second.push_back(t);
    }
    return a;
  }
};

/// Sakoe-Chiba style constraint |i - j| < width; an empty width admits every cell.
struct Band {
  std::optional<double> width;

  bool admits(std::size_t i, std::size_t j) const noexcept {
    if (!width) return true;
    const double d = i > j ? static_cast<double>(i - j) : static_cast<double>(j - i);
    return d < *width;
  }

  void validate() const {
    if (width && !(*width >= 1.0)) throw Error(ErrorKind::validation, "band width must be >= 1");
  }

  /// Default band used for training: |i - j| < T/2.
  static Band half_length(std::size_t length) { return Band{static_cast<double>(length) / 2.0}; }
};

enum class Norm { l1, l2, linf };

inline const char* to_string(Norm p) {
  switch (p) {
    case Norm::l1: return "1";
    case Norm::l2: return "2";
    case Norm::linf: return "inf";
  }
  return "2";
}

inline Norm parse_norm(std::string_view s) {
  if (s == "1") return Norm::l1;
  if (s == "2") return Norm::l2;
  if (s == "inf" || s == "linf" || s == "infinity") return Norm::linf;
  throw Error(ErrorKind::validation, "Minkowski order must be 1, 2, or inf; got '" + std::string(s) + "'");
}

struct GakParams {
  double nu = 1.0;
  Norm p = Norm::l2;
  Band band{};

  void validate() const {
    if (!(nu > 0.0) || !std::isfinite(nu)) throw Error(ErrorKind::validation, "nu must be positive");
    band.validate();
  }
};

struct AlignmentSet {
  enum class Source { exhaustive, sampled };

  std::vector<Alignment> alignments;
  Source source = Source::sampled;
  Band band{};
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return alignments.size(); }
  bool empty() const noexcept { return alignments.empty(); }
};

/// Largest length accepted by enumeration-based routines.
inline constexpr std::size_t kEnumerationLimit = 12;

inline void validate_alignment(const Alignment& a, std::size_t len1, std::size_t len2, const Band& band = {}) {
  const auto r = a.size();
  if (r == 0 || a.second.size() != r) throw Error(ErrorKind::alignment, "alignment is empty or ragged");
  if (a.first.front() != 0 || a.second.front() != 0)
    throw Error(ErrorKind::alignment, "alignment must start at (1,1)");
  if (a.first.back() + 1 != len1 || a.second.back() + 1 != len2)
    throw Error(ErrorKind::alignment, "alignment must end at (T1,T2)");
  if (r > len1 + len2 - 1) throw Error(ErrorKind::alignment, "alignment longer than T1+T2-1");
  for (std::size_t k = 0; k < r; ++k) {
    if (!band.admits(a.first[k], a.second[k]))
      throw Error(ErrorKind::alignment, "alignment leaves the band at step " + std::to_string(k));
    if (k == 0) continue;
    const auto d1 = static_cast<std::int64_t>(a.first[k]) - a.first[k - 1];
    const auto d2 = static_cast<std::int64_t>(a.second[k]) - a.second[k - 1];
    if (d1 < 0 || d1 > 1 || d2 < 0 || d2 > 1 || d1 + d2 == 0)
      throw Error(ErrorKind::alignment, "invalid step at position " + std::to_string(k));
  }
}

/// Number of alignments admitted by the band, |A|.
inline double count_alignments(std::size_t len1, std::size_t len2, const Band& band = {}) {
  std::vector<double> n(len1 * len2, 0.0);
  for (std::size_t i = 0; i < len1; ++i) {
    for (std::size_t j = 0; j < len2; ++j) {
      if (!band.admits(i, j)) continue;
      double& c = n[i * len2 + j];
      if (i == 0 && j == 0) {
        c = 1.0;
        continue;
      }
      if (i > 0) c += n[(i - 1) * len2 + j];
      if (j > 0) c += n[i * len2 + j - 1];
      if (i > 0 && j > 0) c += n[(i - 1) * len2 + j - 1];
    }
  }
  return n.back();
}

/// Visits every admissible alignment once, in lexicographic order of the
/// index-pair sequence.
inline void for_each_alignment(std::size_t len1, std::size_t len2, const Band& band,
                               const std::function<void(const Alignment&)>& visit) {
  if (len1 == 0 || len2 == 0) throw Error(ErrorKind::validation, "series length must be >= 1");
  if (len1 > kEnumerationLimit || len2 > kEnumerationLimit)
    throw Error(ErrorKind::size, "enumeration limited to T <= " + std::to_string(kEnumerationLimit));
  if (!band.admits(0, 0)) return;
  Alignment path;
  path.first.push_back(0);
  path.second.push_back(0);
  const std::uint32_t e1 = static_cast<std::uint32_t>(len1 - 1);
  const std::uint32_t e2 = static_cast<std::uint32_t>(len2 - 1);
  std::function<void()> extend = [&]() {
    const auto i = path.first.back();
    const auto j = path.second.back();
    if (i == e1 && j == e2) {
      visit(path);
      return;
    }
    const std::uint32_t moves[3][2] = {{i, j + 1}, {i + 1, j}, {i + 1, j + 1}};
    for (const auto& m : moves) {
      if (m[0] > e1 || m[1] > e2 || !band.admits(m[0], m[1])) continue;
      path.first.push_back(m[0]);
      path.second.push_back(m[1]);
      extend();
      path.first.pop_back();
      path.second.pop_back();
    }
  };
  extend();
}

inline AlignmentSet enumerate_alignments(std::size_t len1, std::size_t len2, const Band& band = {}) {
  band.validate();
  AlignmentSet set;
  set.source = AlignmentSet::Source::exhaustive;
  set.band = band;
  for_each_alignment(len1, len2, band, [&](const Alignment& a) { set.alignments.push_back(a); });
  return set;
}

/// Draws monotone paths from (0,0) to (T1-1,T2-1) by choosing uniformly among
/// the feasible next steps. A step is feasible when it stays inside the band
/// and the end cell remains reachable from it.
class PathSampler {
 public:
  PathSampler(std::size_t len1, std::size_t len2, Band band = {})
      : len1_(len1), len2_(len2), band_(band), reach_(len1 * len2, 0) {
    if (len1 == 0 || len2 == 0) throw Error(ErrorKind::validation, "series length must be >= 1");
    band_.validate();
    for (std::size_t i = len1; i-- > 0;) {
      for (std::size_t j = len2; j-- > 0;) {
        if (!band_.admits(i, j)) continue;
        bool ok = (i == len1 - 1 && j == len2 - 1);
        if (!ok && i + 1 < len1) ok = reach_[(i + 1) * len2 + j];
        if (!ok && j + 1 < len2) ok = reach_[i * len2 + j + 1];
        if (!ok && i + 1 < len1 && j + 1 < len2) ok = reach_[(i + 1) * len2 + j + 1];
        reach_[i * len2 + j] = ok;
      }
    }
    if (!reach_[0])
      throw Error(ErrorKind::infeasible, "no alignment of " + std::to_string(len1) + "x" + std::to_string(len2) +
                                             " fits the band");
  }

  std::size_t first_length() const noexcept { return len1_; }
  std::size_t second_length() const noexcept { return len2_; }
  const Band& band() const noexcept { return band_; }

  bool reachable(std::size_t i, std::size_t j) const noexcept {
    return i < len1_ && j < len2_ && reach_[i * len2_ + j];
  }

  /// Feasible successors of (i, j), ordered advance-first, advance-second, advance-both.
  int successors(std::uint32_t i, std::uint32_t j, std::uint32_t out[3][2]) const noexcept {
    int n = 0;
    if (reachable(i + 1, j)) { out[n][0] = i + 1; out[n][1] = j; ++n; }
    if (reachable(i, j + 1)) { out[n][0] = i; out[n][1] = j + 1; ++n; }
    if (reachable(i + 1, j + 1)) { out[n][0] = i + 1; out[n][1] = j + 1; ++n; }
    return n;
  }

  Alignment sample(Rng& rng) const {
    Alignment a;
    a.first.reserve(len1_ + len2_ - 1);
    a.second.reserve(len1_ + len2_ - 1);
    std::uint32_t i = 0, j = 0;
    a.first.push_back(0);
    a.second.push_back(0);
    std::uint32_t next[3][2];
    while (i + 1 < len1_ || j + 1 < len2_) {
      const int n = successors(i, j, next);
      const int pick = n == 1 ? 0 : static_cast<int>(uniform_index(rng, static_cast<std::size_t>(n)));
      i = next[pick][0];
      j = next[pick][1];
      a.first.push_back(i);
      a.second.push_back(j);
    }
    return a;
  }

  AlignmentSet sample_set(std::size_t count, Rng& rng, std::uint64_t seed_tag = 0) const {
    if (count == 0) throw Error(ErrorKind::validation, "alignment sample count must be >= 1");
    AlignmentSet set;
    set.source = AlignmentSet::Source::sampled;
    set.band = band_;
    set.seed = seed_tag;
    set.alignments.reserve(count);
    for (std::size_t k = 0; k < count; ++k) set.alignments.push_back(sample(rng));
    return set;
  }

 private:
  std::size_t len1_, len2_;
  Band band_;
  std::vector<char> reach_;
};

inline AlignmentSet sample_alignments(std::size_t len1, std::size_t len2, std::size_t count, const Band& band,
                                      std::uint64_t seed) {
  Rng rng(seed);
  return PathSampler(len1, len2, band).sample_set(count, rng, seed);
}

/// Minkowski distance between column i of x and column j of y.
inline double step_distance(const Signal& x, std::size_t i, const Signal& y, std::size_t j, Norm p) {
  const auto C = x.channels();
  if (C == 1) return std::abs(x(0, i) - y(0, j));
  double acc = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const double r = std::abs(x(c, i) - y(c, j));
    switch (p) {
      case Norm::l1: acc += r; break;
      case Norm::l2: acc += r * r; break;
      case Norm::linf: acc = std::max(acc, r); break;
    }
  }
  return p == Norm::l2 ? std::sqrt(acc) : acc;
}

namespace detail {

inline void require_pair(const Signal& x, const Signal& y) {
  if (x.channels() != y.channels())
    throw Error(ErrorKind::shape, "channel counts differ: " + std::to_string(x.channels()) + " vs " +
                                      std::to_string(y.channels()));
  if (x.length() == 0 || y.length() == 0 || x.channels() == 0)
    throw Error(ErrorKind::shape, "empty series");
}

inline Vec distance_matrix(const Signal& x, const Signal& y, Norm p) {
  const auto n1 = x.length(), n2 = y.length();
  Vec d(n1 * n2);
  for (std::size_t i = 0; i < n1; ++i)
    for (std::size_t j = 0; j < n2; ++j) d[i * n2 + j] = step_distance(x, i, y, j, p);
  return d;
}

inline double log_add(double a, double b) {
  if (a == -std::numeric_limits<double>::infinity()) return b;
  if (b == -std::numeric_limits<double>::infinity()) return a;
  return a > b ? a + std::log1p(std::exp(b - a)) : b + std::log1p(std::exp(a - b));
}

inline double log_add3(double a, double b, double c) {
  const double m = std::max({a, b, c});
  if (m == -std::numeric_limits<double>::infinity()) return m;
  return m + std::log(std::exp(a - m) + std::exp(b - m) + std::exp(c - m));
}

// Forward log-space GAK table: L(i,j) = log of the sum over prefix paths ending
// at (i,j) of prod exp(-D/nu), including cell (i,j). Out-of-band cells are -inf.
inline Vec log_forward(const Vec& dist, std::size_t n1, std::size_t n2, double nu, const Band& band) {
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  Vec L(n1 * n2, ninf);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      if (!band.admits(i, j)) continue;
      const double lk = -dist[i * n2 + j] / nu;
      if (i == 0 && j == 0) {
        L[0] = lk;
        continue;
      }
      const double up = i > 0 ? L[(i - 1) * n2 + j] : ninf;
      const double left = j > 0 ? L[i * n2 + j - 1] : ninf;
      const double diag = i > 0 && j > 0 ? L[(i - 1) * n2 + j - 1] : ninf;
      L[i * n2 + j] = lk + log_add3(up, left, diag);
    }
  }
  return L;
}

inline double linear_gak(const Vec& dist, std::size_t n1, std::size_t n2, double nu, const Band& band) {
  Vec M(n1 * n2, 0.0);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      if (!band.admits(i, j)) continue;
      const double k = std::exp(-dist[i * n2 + j] / nu);
      if (i == 0 && j == 0) {
        M[0] = k;
        continue;
      }
      double s = 0.0;
      if (i > 0) s += M[(i - 1) * n2 + j];
      if (i > 0 && j > 0) s += M[(i - 1) * n2 + j - 1];
      if (j > 0) s += M[i * n2 + j - 1];
      M[i * n2 + j] = k * s;
    }
  }
  return M.back();
}

}  // namespace detail

/// d_pi(x, y): sum of per-step Minkowski distances along the alignment.
inline double path_cost(const Signal& x, const Signal& y, const Alignment& a, Norm p) {
  detail::require_pair(x, y);
  double s = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) {
    const auto i = a.first[k], j = a.second[k];
    if (i >= x.length() || j >= y.length())
      throw Error(ErrorKind::alignment, "alignment index out of range at step " + std::to_string(k));
    s += step_distance(x, i, y, j, p);
  }
  return s;
}

struct DtwResult {
  double cost = 0.0;
  Alignment path;
};

/// Minimum path cost over admissible alignments with the argmin path.
/// Ties prefer the diagonal predecessor, then advance-first, then advance-second.
inline DtwResult dtw_distance(const Signal& x, const Signal& y, Norm p, const Band& band = {}) {
  detail::require_pair(x, y);
  band.validate();
  const auto n1 = x.length(), n2 = y.length();
  constexpr double inf = std::numeric_limits<double>::infinity();
  Vec cum(n1 * n2, inf);
  for (std::size_t i = 0; i < n1; ++i) {
    for (std::size_t j = 0; j < n2; ++j) {
      if (!band.admits(i, j)) continue;
      const double d = step_distance(x, i, y, j, p);
      if (i == 0 && j == 0) {
        cum[0] = d;
        continue;
      }
      double best = inf;
      if (i > 0 && j > 0) best = cum[(i - 1) * n2 + j - 1];
      if (i > 0) best = std::min(best, cum[(i - 1) * n2 + j]);
      if (j > 0) best = std::min(best, cum[i * n2 + j - 1]);
      if (best < inf) cum[i * n2 + j] = best + d;
    }
  }
  if (!(cum.back() < inf)) throw Error(ErrorKind::infeasible, "no alignment fits the band");
  DtwResult out;
  out.cost = cum.back();
  std::size_t i = n1 - 1, j = n2 - 1;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> rev{{static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j)}};
  while (i > 0 || j > 0) {
    double best = inf;
    std::size_t bi = i, bj = j;
    auto consider = [&](std::size_t pi, std::size_t pj) {
      const double c = cum[pi * n2 + pj];
      if (c < best) {
        best = c;
        bi = pi;
        bj = pj;
      }
    };
    if (i > 0 && j > 0) consider(i - 1, j - 1);
    if (i > 0) consider(i - 1, j);
    if (j > 0) consider(i, j - 1);
    i = bi;
    j = bj;
    rev.emplace_back(static_cast<std::uint32_t>(i), static_cast<std::uint32_t>(j));
  }
  for (auto it = rev.rbegin(); it != rev.rend(); ++it) {
    out.path.first.push_back(it->first);
    out.path.second.push_back(it->second);
  }
  return out;
}

/// log k_GAK(x, y). Runs the three-way recursion in linear space when nu is
/// large relative to the median step distance, in log space otherwise, and
/// falls back to log space whenever the linear value leaves the finite positive range.
inline double log_gak(const Signal& x, const Signal& y, const GakParams& params) {
  detail::require_pair(x, y);
  params.validate();
  const auto n1 = x.length(), n2 = y.length();
  const Vec dist = detail::distance_matrix(x, y, params.p);
  const double med = median(dist);
  if (params.nu >= 0.05 * med) {
    const double k = detail::linear_gak(dist, n1, n2, params.nu, params.band);
    if (std::isfinite(k) && k > 0.0) return std::log(k);
  }
  const Vec L = detail::log_forward(dist, n1, n2, params.nu, params.band);
  const double lk = L.back();
  if (!std::isfinite(lk)) throw Error(ErrorKind::numeric, "k_GAK is zero or non-finite (band infeasible?)");
  return lk;
}

/// k_GAK(x, y) = sum over admissible alignments of exp(-d_pi / nu).
inline double gak_exact(const Signal& x, const Signal& y, const GakParams& params) {
  const double k = std::exp(log_gak(x, y, params));
  if (!std::isfinite(k) || k <= 0.0)
    throw Error(ErrorKind::numeric, "k_GAK not representable in linear space; use log_gak");
  return k;
}

/// D_GAK = -nu log k_GAK. Negative whenever k_GAK > 1.
inline double d_gak(const Signal& x, const Signal& y, const GakParams& params) {
  return -params.nu * log_gak(x, y, params);
}

/// Unscaled subset sum over the sampled alignments of exp(-d_pi / nu).
inline double gak_sampled(const Signal& x, const Signal& y, const AlignmentSet& set, const GakParams& params) {
  if (set.empty()) throw Error(ErrorKind::validation, "alignment set is empty");
  params.validate();
  double s = 0.0;
  for (const auto& a : set.alignments) s += std::exp(-path_cost(x, y, a, params.p) / params.nu);
  if (!std::isfinite(s)) throw Error(ErrorKind::numeric, "sampled k_GAK is non-finite");
  return s;
}

/// Subset sum rescaled by |A| / |A_hat|; an unbiased estimate of k_GAK when the
/// set is drawn uniformly from A.
inline double gak_sampled_rescaled(const Signal& x, const Signal& y, const AlignmentSet& set, const GakParams& params,
                                   double total_alignments) {
  return gak_sampled(x, y, set, params) * total_alignments / static_cast<double>(set.size());
}

namespace detail {

inline void require_differentiable(Norm p) {
  if (p == Norm::linf) throw Error(ErrorKind::unsupported, "gradients are not available for p = inf");
}

// Adds scale * d||y_j - x_i||_p / d y_j into grad column j. Zero residual gives 0.
inline void add_step_grad(const Signal& x, std::size_t i, const Signal& y, std::size_t j, Norm p, double scale,
                          Signal& grad) {
  const auto C = x.channels();
  if (p == Norm::l1 || C == 1) {
    for (std::size_t c = 0; c < C; ++c) grad(c, j) += scale * sign(y(c, j) - x(c, i));
    return;
  }
  double nrm = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const double r = y(c, j) - x(c, i);
    nrm += r * r;
  }
  nrm = std::sqrt(nrm);
  if (nrm == 0.0) return;
  for (std::size_t c = 0; c < C; ++c) grad(c, j) += scale * (y(c, j) - x(c, i)) / nrm;
}

}  // namespace detail

/// Gradient of d_pi(x, y) with respect to y, accumulated into grad scaled by scale.
inline void accumulate_path_cost_grad(const Signal& x, const Signal& y, const Alignment& a, Norm p, double scale,
                                      Signal& grad) {
  detail::require_differentiable(p);
  for (std::size_t k = 0; k < a.size(); ++k) detail::add_step_grad(x, a.first[k], y, a.second[k], p, scale, grad);
}

inline Signal path_cost_grad(const Signal& x, const Signal& y, const Alignment& a, Norm p) {
  detail::require_pair(x, y);
  validate_alignment(a, x.length(), y.length());
  Signal g(y.channels(), y.length());
  accumulate_path_cost_grad(x, y, a, p, 1.0, g);
  return g;
}

/// Gradient of d_pi(x, x + a) with respect to the perturbation a.
inline Signal grad_path_cost(const Signal& x, const Signal& pert, const Alignment& a, Norm p) {
  return path_cost_grad(x, x + pert, a, p);
}

/// grad_a log k_GAK(x, x + a) by summing over every alignment. Reference
/// implementation for short series.
inline Signal grad_log_gak_exact(const Signal& x, const Signal& pert, const GakParams& params) {
  constexpr std::size_t limit = 8;
  if (x.length() > limit) throw Error(ErrorKind::size, "exact GAK gradient limited to T <= " + std::to_string(limit));
  detail::require_differentiable(params.p);
  params.validate();
  const Signal y = x + pert;
  const auto set = enumerate_alignments(x.length(), y.length(), params.band);
  Vec costs;
  costs.reserve(set.size());
  for (const auto& a : set.alignments) costs.push_back(path_cost(x, y, a, params.p));
  const double dmin = *std::min_element(costs.begin(), costs.end());
  double total = 0.0;
  Signal num(y.channels(), y.length());
  for (std::size_t k = 0; k < set.size(); ++k) {
    const double w = std::exp(-(costs[k] - dmin) / params.nu);
    total += w;
    accumulate_path_cost_grad(x, y, set.alignments[k], params.p, w, num);
  }
  num *= -1.0 / (params.nu * total);
  return num;
}

/// grad_y log k_GAK(x, y) in O(T1 T2) via forward/backward log-space recursions:
/// each cell contributes its posterior occupancy times -grad dist / nu.
inline Signal log_gak_grad(const Signal& x, const Signal& y, const GakParams& params) {
  detail::require_pair(x, y);
  detail::require_differentiable(params.p);
  params.validate();
  constexpr double ninf = -std::numeric_limits<double>::infinity();
  const auto n1 = x.length(), n2 = y.length();
  const Vec dist = detail::distance_matrix(x, y, params.p);
  const Vec L = detail::log_forward(dist, n1, n2, params.nu, params.band);
  const double lk = L.back();
  if (!std::isfinite(lk)) throw Error(ErrorKind::numeric, "k_GAK is zero or non-finite");
  Vec B(n1 * n2, ninf);
  B.back() = 0.0;
  auto term = [&](std::size_t i, std::size_t j) {
    if (i >= n1 || j >= n2 || B[i * n2 + j] == ninf) return ninf;
    return B[i * n2 + j] - dist[i * n2 + j] / params.nu;
  };
  Signal g(y.channels(), n2);
  for (std::size_t i = n1; i-- > 0;) {
    for (std::size_t j = n2; j-- > 0;) {
      if (!params.band.admits(i, j)) continue;
      if (!(i == n1 - 1 && j == n2 - 1)) B[i * n2 + j] = detail::log_add3(term(i + 1, j), term(i, j + 1), term(i + 1, j + 1));
      const double lo = L[i * n2 + j] + B[i * n2 + j] - lk;
      if (lo == ninf) continue;
      detail::add_step_grad(x, i, y, j, params.p, -std::exp(lo) / params.nu, g);
    }
  }
  return g;
}

/// GAK bandwidth heuristic: median pointwise distance between time steps of
/// different series, scaled by sqrt(median length). Uses every cross pair when
/// there are at most max_pairs of them, a seeded uniform subsample otherwise.
inline double estimate_nu(const Dataset& ds, Norm p = Norm::l2, std::uint64_t seed = 0, std::size_t max_pairs = 20000) {
  if (ds.size() < 2) throw Error(ErrorKind::validation, "estimate_nu needs at least 2 samples");
  const auto n = ds.size();
  Vec lengths;
  for (const auto& s : ds.samples) lengths.push_back(static_cast<double>(s.values.length()));
  const double med_len = median(lengths);
  Vec dists;
  double total = 0.0;
  for (std::size_t a = 0; a < n; ++a)
    for (std::size_t b = a + 1; b < n; ++b) total += lengths[a] * lengths[b];
  if (total <= static_cast<double>(max_pairs)) {
    for (std::size_t a = 0; a < n; ++a)
      for (std::size_t b = a + 1; b < n; ++b) {
        const auto& x = ds.samples[a].values;
        const auto& y = ds.samples[b].values;
        for (std::size_t t = 0; t < x.length(); ++t)
          for (std::size_t s = 0; s < y.length(); ++s) dists.push_back(step_distance(x, t, y, s, p));
      }
  } else {
    Rng rng(seed);
    dists.reserve(max_pairs);
    while (dists.size() < max_pairs) {
      const auto a = uniform_index(rng, n);
      auto b = uniform_index(rng, n - 1);
      if (b >= a) ++b;
      const auto& x = ds.samples[a].values;
      const auto& y = ds.samples[b].values;
      const auto t = uniform_index(rng, x.length());
      const auto s = uniform_index(rng, y.length());
      dists.push_back(step_distance(x, t, y, s, p));
    }
  }
  const double nu = median(std::move(dists)) * std::sqrt(med_len);
  constexpr double floor = 1e-6;
  if (!(nu > floor)) {
    std::cerr << "warning: estimate_nu found zero median distance; using " << floor << "\n";
    return floor;
  }
  return nu;
}

struct Prop1Result {
  double gap = 0.0;    // D_DTW - D_GAK
  double bound = 0.0;  // nu log |A|
  double dtw = 0.0;
  double dgak = 0.0;
  double alignments = 0.0;
};

/// Soft-min/hard-min sandwich: 0 <= D_DTW - D_GAK <= nu log |A|.
inline Prop1Result prop1_gap(const Signal& x, const Signal& y, const GakParams& params) {
  if (x.length() > kEnumerationLimit || y.length() > kEnumerationLimit)
    throw Error(ErrorKind::size, "prop1 check limited to T <= " + std::to_string(kEnumerationLimit));
  Prop1Result r;
  r.dtw = dtw_distance(x, y, params.p, params.band).cost;
  r.dgak = d_gak(x, y, params);
  r.alignments = count_alignments(x.length(), y.length(), params.band);
  r.gap = r.dtw - r.dgak;
  r.bound = params.nu * std::log(r.alignments);
  return r;
}

}  // namespace rots

#endif
