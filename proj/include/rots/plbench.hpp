#ifndef ROTS_PLBENCH_HPP
#define ROTS_PLBENCH_HPP

#include <iostream>
#include <limits>
#include <vector>

#include "core.hpp"
#include "scagda.hpp"

namespace rots {

/// Synthetic compositional min-max instance:
///   f_i(w, a) = mu_w/2 |w|^2 + w^T A a
///   g(u)      = -lambda_syn log u
///   h_ij(a)   = exp(-|a - c_ij|^2 / nu_syn)
/// so phi_i = f_i + lambda_syn log mean_j h_ij, the same log-of-sum-of-exponentials
/// shape as the GAK regularizer.
struct PlProblemSpec {
  std::size_t dual_dim = 2;
  std::size_t primal_dim = 2;
  std::size_t n = 4;
  std::size_t m = 8;
  Vec coupling;               // primal_dim x dual_dim, row-major
  std::vector<Vec> centers;   // n*m entries of dual_dim; block i component j at i*m + j
  double nu_syn = 1.0;
  double lambda_syn = 1.0;
  double mu_w = 1.0;

  void validate() const {
    auto bad = [](const std::string& field, const std::string& why) {
      throw Error(ErrorKind::validation, "plbench." + field + ": " + why);
    };
    if (dual_dim < 1 || dual_dim > 2) bad("dual_dim", "must be 1 or 2");
    if (primal_dim < 1) bad("primal_dim", "must be >= 1");
    if (n < 1) bad("n", "must be >= 1");
    if (m < 1) bad("m", "must be >= 1");
    if (coupling.size() != primal_dim * dual_dim) bad("coupling", "expected primal_dim*dual_dim entries");
    if (centers.size() != n * m) bad("centers", "expected n*m centers");
    for (const auto& c : centers)
      if (c.size() != dual_dim || !all_finite(c)) bad("centers", "each center needs dual_dim finite entries");
    if (!all_finite(coupling)) bad("coupling", "entries must be finite");
    if (!(nu_syn > 0.0)) bad("nu_syn", "must be positive");
    if (!(lambda_syn > 0.0)) bad("lambda_syn", "must be positive");
    if (!(mu_w > 0.0)) bad("mu_w", "must be positive");
  }

  const Vec& center(std::size_t i, std::size_t j) const { return centers[i * m + j]; }

  /// Default instance: block anchors ~ N(0, 1), components jittered by 0.3 N(0, 1)
  /// around their anchor, which keeps each block's inner problem unimodal.
  static PlProblemSpec make_default(std::uint64_t seed, std::size_t dual_dim = 2, std::size_t n = 4,
                                    std::size_t m = 8) {
    PlProblemSpec s;
    s.dual_dim = dual_dim;
    s.primal_dim = 2;
    s.n = n;
    s.m = m;
    s.coupling = dual_dim == 2 ? Vec{1.0, 0.5, -0.3, 0.8} : Vec{1.0, -0.4};
    Rng rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    for (std::size_t i = 0; i < n; ++i) {
      Vec anchor(dual_dim);
      for (auto& v : anchor) v = z(rng);
      for (std::size_t j = 0; j < m; ++j) {
        Vec c = anchor;
        for (auto& v : c) v += 0.3 * z(rng);
        s.centers.push_back(std::move(c));
      }
    }
    return s;
  }
};

class PlProblem {
 public:
  explicit PlProblem(PlProblemSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

  const PlProblemSpec& spec() const noexcept { return spec_; }
  std::size_t blocks() const noexcept { return spec_.n; }
  std::size_t components() const noexcept { return spec_.m; }

  // A a
  Vec couple(const Vec& a) const {
    Vec out(spec_.primal_dim, 0.0);
    for (std::size_t r = 0; r < spec_.primal_dim; ++r)
      for (std::size_t c = 0; c < spec_.dual_dim; ++c) out[r] += spec_.coupling[r * spec_.dual_dim + c] * a[c];
    return out;
  }
  // A^T w
  Vec couple_t(const Vec& w) const {
    Vec out(spec_.dual_dim, 0.0);
    for (std::size_t r = 0; r < spec_.primal_dim; ++r)
      for (std::size_t c = 0; c < spec_.dual_dim; ++c) out[c] += spec_.coupling[r * spec_.dual_dim + c] * w[r];
    return out;
  }

  double f_value(const Vec& w, const Vec& a, std::size_t) const {
    return 0.5 * spec_.mu_w * dot(w, w) + dot(w, couple(a));
  }
  Vec primal_grad(const Vec& w, const Vec& a, std::size_t) const {
    Vec g = couple(a);
    for (std::size_t k = 0; k < g.size(); ++k) g[k] += spec_.mu_w * w[k];
    return g;
  }
  Vec dual_f_grad(const Vec& w, const Vec&, std::size_t) const { return couple_t(w); }

  double h_scalar(const Vec& a, std::size_t i, std::size_t j) const {
    const Vec& c = spec_.center(i, j);
    double s = 0.0;
    for (std::size_t k = 0; k < a.size(); ++k) s += (a[k] - c[k]) * (a[k] - c[k]);
    return std::exp(-s / spec_.nu_syn);
  }
  Vec h_value(const Vec& a, std::size_t i, std::size_t j) const { return {h_scalar(a, i, j)}; }
  Vec h_grad(const Vec& a, std::size_t i, std::size_t j) const {
    const Vec& c = spec_.center(i, j);
    const double h = h_scalar(a, i, j);
    Vec g(a.size());
    for (std::size_t k = 0; k < a.size(); ++k) g[k] = -2.0 * (a[k] - c[k]) / spec_.nu_syn * h;
    return g;
  }
  Vec h_jvp(const Vec& a, std::size_t i, std::size_t j, const Vec& u) const {
    Vec g = h_grad(a, i, j);
    for (auto& v : g) v *= u[0];
    return g;
  }
  double g_value(const Vec& u) const { return -spec_.lambda_syn * std::log(u[0]); }
  Vec g_grad(const Vec& u) const { return {-spec_.lambda_syn / u[0]}; }

  /// h_i(a) = (1/m) sum_j h_ij(a)
  Vec exact_h(const Vec& a, std::size_t i) const {
    double s = 0.0;
    for (std::size_t j = 0; j < spec_.m; ++j) s += h_scalar(a, i, j);
    return {s / static_cast<double>(spec_.m)};
  }

  double phi(const Vec& w, const Vec& a, std::size_t i) const {
    return f_value(w, a, i) - g_value(exact_h(a, i));
  }

 private:
  PlProblemSpec spec_;
};

static_assert(CompositionalProblem<PlProblem>);

inline PlProblem build_pl_problem(const PlProblemSpec& spec) { return PlProblem(spec); }

struct PrimalOracleResult {
  double value = 0.0;
  std::vector<Vec> maximizers;
  bool boundary = false;  // some block's best grid point touched the box edge
};

/// P(w) = (1/n) sum_i max_a phi_i(w, a), by dense grid search on a box spanning
/// all centers +- 5 sqrt(nu_syn), optionally polished by a compass search that
/// uses function values only.
inline PrimalOracleResult primal_oracle(const PlProblem& prob, const Vec& w, std::size_t resolution = 201,
                                        bool refine = true) {
  const auto& s = prob.spec();
  if (s.dual_dim > 2) throw Error(ErrorKind::validation, "primal_oracle supports dual_dim <= 2");
  if (resolution < 3) throw Error(ErrorKind::validation, "grid resolution must be >= 3");
  const std::size_t d = s.dual_dim;
  Vec lo(d, std::numeric_limits<double>::infinity()), hi(d, -std::numeric_limits<double>::infinity());
  for (const auto& c : s.centers)
    for (std::size_t k = 0; k < d; ++k) {
      lo[k] = std::min(lo[k], c[k]);
      hi[k] = std::max(hi[k], c[k]);
    }
  const double pad = 5.0 * std::sqrt(s.nu_syn);
  for (std::size_t k = 0; k < d; ++k) {
    lo[k] -= pad;
    hi[k] += pad;
  }
  Vec step(d);
  for (std::size_t k = 0; k < d; ++k) step[k] = (hi[k] - lo[k]) / static_cast<double>(resolution - 1);

  PrimalOracleResult out;
  const std::size_t npts = d == 1 ? resolution : resolution * resolution;
  for (std::size_t i = 0; i < s.n; ++i) {
    auto value = [&](const Vec& a) { return prob.phi(w, a, i); };
    Vec best_a(d);
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_idx[2] = {0, 0};
    Vec a(d);
    for (std::size_t p = 0; p < npts; ++p) {
      const std::size_t ix = p % resolution, iy = p / resolution;
      a[0] = lo[0] + static_cast<double>(ix) * step[0];
      if (d == 2) a[1] = lo[1] + static_cast<double>(iy) * step[1];
      const double v = value(a);
      if (v > best) {
        best = v;
        best_a = a;
        best_idx[0] = ix;
        best_idx[1] = iy;
      }
    }
    const bool edge = best_idx[0] == 0 || best_idx[0] + 1 == resolution ||
                      (d == 2 && (best_idx[1] == 0 || best_idx[1] + 1 == resolution));
    if (edge) out.boundary = true;
    if (refine) {
      Vec h = step;
      double hmax = *std::max_element(h.begin(), h.end());
      while (hmax > 1e-11) {
        bool moved = false;
        for (std::size_t k = 0; k < d && !moved; ++k)
          for (double dir : {1.0, -1.0}) {
            Vec trial = best_a;
            trial[k] += dir * h[k];
            const double v = value(trial);
            if (v > best) {
              best = v;
              best_a = std::move(trial);
              moved = true;
              break;
            }
          }
        if (!moved) {
          for (auto& v : h) v *= 0.5;
          hmax *= 0.5;
        }
      }
    }
    out.value += best;
    out.maximizers.push_back(best_a);
  }
  out.value /= static_cast<double>(s.n);
  if (out.boundary) std::cerr << "warning: primal oracle maximizer on box boundary; box may be too small\n";
  return out;
}

/// min_w P(w) by compass search over w using the polished oracle.
inline double primal_minimum(const PlProblem& prob, Vec* argmin = nullptr, std::size_t resolution = 61) {
  const std::size_t dw = prob.spec().primal_dim;
  Vec w(dw, 0.0);
  auto P = [&](const Vec& x) { return primal_oracle(prob, x, resolution, true).value; };
  double best = P(w);
  double h = 0.5;
  while (h > 1e-9) {
    bool moved = false;
    for (std::size_t k = 0; k < dw && !moved; ++k)
      for (double dir : {1.0, -1.0}) {
        Vec trial = w;
        trial[k] += dir * h;
        const double v = P(trial);
        if (v < best) {
          best = v;
          w = std::move(trial);
          moved = true;
          break;
        }
      }
    if (!moved) h *= 0.5;
  }
  if (argmin) *argmin = w;
  return best;
}

struct BenchReport {
  SolveTrace trace;
  double p_star = 0.0;
  Vec w_star;
  double initial_gap = 0.0;
  double initial_ma_error = 0.0;
  double final_gap = 0.0;
  double final_ma_error = 0.0;
  double tail_gap = 0.0;  // mean gap over the last quarter of logged rows
  double tail_correlation = 0.0;
  Vec w_final;

  std::string summary_csv() const {
    std::ostringstream os;
    os << std::setprecision(17) << "P_star,final_gap,final_ma_error,tail_correlation,tail_gap\n"
       << p_star << ',' << final_gap << ',' << final_ma_error << ',' << tail_correlation << ',' << tail_gap << '\n';
    return os.str();
  }
};

inline double pearson(const Vec& x, const Vec& y) {
  const auto n = static_cast<double>(x.size());
  if (x.size() < 2) return 0.0;
  double mx = 0.0, my = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    mx += x[k];
    my += y[k];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) {
    sxy += (x[k] - mx) * (y[k] - my);
    sxx += (x[k] - mx) * (x[k] - mx);
    syy += (y[k] - my) * (y[k] - my);
  }
  if (sxx == 0.0 || syy == 0.0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

struct BenchOptions {
  std::size_t trace_rows = 200;      // diagnostics are evaluated on about this many rows
  std::size_t oracle_resolution = 61;
  Vec w0;                            // defaults to (1, -1, 1, ...)
};

/// Runs SCAGDA on the synthetic instance with exact diagnostics attached.
inline BenchReport run_bench(const PlProblemSpec& spec, ScagdaParams params, const BenchOptions& opts = {}) {
  const PlProblem prob(spec);
  BenchReport rep;
  rep.p_star = primal_minimum(prob, &rep.w_star, opts.oracle_resolution);
  const double p_star = rep.p_star;
  const auto res = opts.oracle_resolution;
  params.log_every = std::max<std::size_t>(1, params.K / std::max<std::size_t>(1, opts.trace_rows));
  auto dp = attach_diagnostics(
      prob, [&prob, p_star, res](const Vec& w) { return primal_oracle(prob, w, res, true).value - p_star; },
      [&prob](const Vec& a, std::size_t i) { return prob.exact_h(a, i); });
  Vec w0 = opts.w0;
  if (w0.empty())
    for (std::size_t k = 0; k < spec.primal_dim; ++k) w0.push_back(k % 2 == 0 ? 1.0 : -1.0);
  std::vector<Vec> a0(spec.n, Vec(spec.dual_dim, 0.0));
  auto out = scagda_run(dp, params, std::move(w0), std::move(a0));
  rep.trace = std::move(out.trace);
  rep.w_final = out.w;
  const auto& rows = rep.trace.rows;
  rep.initial_gap = rows.front().primal_gap.value_or(0.0);
  rep.initial_ma_error = rows.front().ma_error.value_or(0.0);
  rep.final_gap = rows.back().primal_gap.value_or(0.0);
  rep.final_ma_error = rows.back().ma_error.value_or(0.0);
  Vec gaps, mas;
  for (std::size_t r = rows.size() / 2; r < rows.size(); ++r) {
    gaps.push_back(*rows[r].primal_gap);
    mas.push_back(*rows[r].ma_error);
  }
  rep.tail_correlation = pearson(gaps, mas);
  const std::size_t q = rows.size() - rows.size() * 3 / 4;
  for (std::size_t r = rows.size() - q; r < rows.size(); ++r) rep.tail_gap += *rows[r].primal_gap / static_cast<double>(q);
  return rep;
}

}  // namespace rots

#endif
