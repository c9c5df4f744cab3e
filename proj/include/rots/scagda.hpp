#ifndef ROTS_SCAGDA_HPP
#define ROTS_SCAGDA_HPP

#include <concepts>
#include <functional>
#include <iomanip>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace rots {

/// Min-max problem  min_w max_{a_i} (1/n) sum_i f_i(w, a_i) - g((1/m) sum_j h_{i,j}(a_i)).
/// Sampling is done by the solver; the problem evaluates the named component.
template <class P>
concept CompositionalProblem = requires(const P& p, const Vec& w, const Vec& a, const Vec& u, std::size_t i,
                                        std::size_t j) {
  { p.blocks() } -> std::convertible_to<std::size_t>;
  { p.components() } -> std::convertible_to<std::size_t>;
  { p.primal_grad(w, a, i) } -> std::convertible_to<Vec>;
  { p.dual_f_grad(w, a, i) } -> std::convertible_to<Vec>;
  { p.h_value(a, i, j) } -> std::convertible_to<Vec>;
  { p.h_jvp(a, i, j, u) } -> std::convertible_to<Vec>;
  { p.g_grad(u) } -> std::convertible_to<Vec>;
  { p.f_value(w, a, i) } -> std::convertible_to<double>;
  { p.g_value(u) } -> std::convertible_to<double>;
};

/// omega <- (1 - beta) omega + beta value, in place.
inline void ma_update(Vec& omega, const Vec& value, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorKind::validation, "beta must lie in (0, 1]");
  if (omega.size() != value.size()) throw Error(ErrorKind::shape, "moving-average dimension mismatch");
  for (std::size_t k = 0; k < omega.size(); ++k) omega[k] = (1.0 - beta) * omega[k] + beta * value[k];
}

inline double ma_update(double omega, double value, double beta) {
  if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorKind::validation, "beta must lie in (0, 1]");
  return (1.0 - beta) * omega + beta * value;
}

struct TraceRow {
  std::size_t k = 0;
  double obj = 0.0;
  double primal_grad_norm = 0.0;
  std::optional<double> primal_gap;
  std::optional<double> ma_error;
  std::optional<double> loss_term;
  std::optional<double> reg_term;
};

struct SolveTrace {
  std::vector<TraceRow> rows;
  bool objective_terms = false;  // emit obj_loss_term,obj_reg_term columns

  std::size_t size() const noexcept { return rows.size(); }

  void write_csv(std::ostream& os) const {
    auto opt = [&](const std::optional<double>& v) {
      if (v) os << *v;
    };
    os << "k,obj,primal_grad_norm,primal_gap,ma_error";
    if (objective_terms) os << ",obj_loss_term,obj_reg_term";
    os << '\n' << std::setprecision(17);
    for (const auto& r : rows) {
      os << r.k << ',' << r.obj << ',' << r.primal_grad_norm << ',';
      opt(r.primal_gap);
      os << ',';
      opt(r.ma_error);
      if (objective_terms) {
        os << ',';
        opt(r.loss_term);
        os << ',';
        opt(r.reg_term);
      }
      os << '\n';
    }
  }

  std::string to_csv() const {
    std::ostringstream os;
    write_csv(os);
    return os.str();
  }
};

/// Raised when an iterate becomes non-finite; carries the trace up to that point.
class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, SolveTrace trace)
      : Error(ErrorKind::divergence, what), trace_(std::move(trace)) {}
  const SolveTrace& trace() const noexcept { return trace_; }

 private:
  SolveTrace trace_;
};

struct ScagdaParams {
  double eta = 1e-2;    // primal step
  double gamma = 1e-2;  // dual step
  double beta = 0.1;    // moving-average weight
  std::size_t K = 1000;
  std::uint64_t seed = 0;
  bool first_touch = false;  // beta = 1 on a block's first update instead of the cold omega = 0 blend
  std::size_t log_every = 1;
  std::function<double(std::size_t)> eta_schedule;    // overrides eta when set
  std::function<double(std::size_t)> gamma_schedule;  // overrides gamma when set

  void validate() const {
    if (!(eta > 0.0) || !(gamma > 0.0)) throw Error(ErrorKind::validation, "step sizes must be positive");
    if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorKind::validation, "beta must lie in (0, 1]");
    if (K < 1) throw Error(ErrorKind::validation, "K must be >= 1");
    if (log_every < 1) throw Error(ErrorKind::validation, "log_every must be >= 1");
  }
};

/// Optional exact oracles used only for trace diagnostics.
struct Diagnostics {
  std::function<double(const Vec& w)> primal_gap;                  // P(w) - P*
  std::function<Vec(const Vec& a_i, std::size_t i)> exact_h;       // h_i(a_i)
};

template <CompositionalProblem P>
struct DiagnosedProblem {
  const P& problem;
  Diagnostics diagnostics;
};

template <CompositionalProblem P>
DiagnosedProblem<P> attach_diagnostics(const P& problem, std::function<double(const Vec&)> primal_gap = {},
                                       std::function<Vec(const Vec&, std::size_t)> exact_h = {}) {
  return DiagnosedProblem<P>{problem, Diagnostics{std::move(primal_gap), std::move(exact_h)}};
}

struct ScagdaResult {
  Vec w;
  std::vector<Vec> a;
  std::vector<Vec> omega;
  SolveTrace trace;
};

namespace detail {

inline double sq_dist(const Vec& x, const Vec& y) {
  double s = 0.0;
  for (std::size_t k = 0; k < x.size(); ++k) s += (x[k] - y[k]) * (x[k] - y[k]);
  return s;
}

}  // namespace detail

/// Stochastic compositional alternating gradient descent ascent. Per iteration:
/// sample i1 and descend w; sample i2 and independent j1, j2; refresh omega_{i2}
/// from h_{i2,j1}; ascend a_{i2} using grad_a f_{i2} at the new w and the
/// jacobian-vector product of h_{i2,j2} with grad g(omega_{i2}).
template <CompositionalProblem P>
ScagdaResult scagda_run(const DiagnosedProblem<P>& dp, const ScagdaParams& params, Vec w0, std::vector<Vec> a0) {
  params.validate();
  const P& prob = dp.problem;
  const Diagnostics& diag = dp.diagnostics;
  const std::size_t n = prob.blocks();
  const std::size_t m = prob.components();
  if (n == 0 || m == 0) throw Error(ErrorKind::validation, "problem needs at least one block and component");
  if (a0.size() != n) throw Error(ErrorKind::shape, "expected one dual block per problem block");

  ScagdaResult res;
  res.w = std::move(w0);
  res.a = std::move(a0);
  res.omega.assign(n, Vec{});
  std::vector<char> touched(n, 0);
  Rng rng(params.seed);

  for (std::size_t k = 0; k < params.K; ++k) {
    const double eta = params.eta_schedule ? params.eta_schedule(k) : params.eta;
    const double gamma = params.gamma_schedule ? params.gamma_schedule(k) : params.gamma;

    const std::size_t i1 = uniform_index(rng, n);
    const Vec gw = prob.primal_grad(res.w, res.a[i1], i1);
    for (std::size_t d = 0; d < res.w.size(); ++d) res.w[d] -= eta * gw[d];

    const std::size_t i2 = uniform_index(rng, n);
    const std::size_t j1 = uniform_index(rng, m);
    const std::size_t j2 = uniform_index(rng, m);

    const Vec& a_old = res.a[i2];
    const Vec hval = prob.h_value(a_old, i2, j1);
    Vec& om = res.omega[i2];
    if (om.empty()) om.assign(hval.size(), 0.0);
    ma_update(om, hval, params.first_touch && !touched[i2] ? 1.0 : params.beta);
    touched[i2] = 1;

    const Vec df = prob.dual_f_grad(res.w, a_old, i2);
    const Vec jvp = prob.h_jvp(a_old, i2, j2, prob.g_grad(om));
    Vec a_new(a_old.size());
    for (std::size_t d = 0; d < a_new.size(); ++d) a_new[d] = a_old[d] + gamma * (df[d] - jvp[d]);

    if (!all_finite(res.w) || !all_finite(a_new) || !all_finite(om))
      throw DivergenceError("non-finite iterate at k=" + std::to_string(k), res.trace);

    const bool log_row = (k % params.log_every == 0) || k + 1 == params.K;
    std::optional<double> ma_error;
    if (log_row && diag.exact_h) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const Vec& ai = i == i2 ? a_old : res.a[i];
        const Vec h = diag.exact_h(ai, i);
        const Vec& oi = res.omega[i].empty() ? Vec(h.size(), 0.0) : res.omega[i];
        s += detail::sq_dist(oi, h);
      }
      ma_error = s / static_cast<double>(n);
    }
    res.a[i2] = std::move(a_new);

    if (log_row) {
      TraceRow row;
      row.k = k;
      row.obj = prob.f_value(res.w, res.a[i2], i2) - prob.g_value(om);
      row.primal_grad_norm = norm2(gw);
      if (diag.primal_gap) row.primal_gap = diag.primal_gap(res.w);
      row.ma_error = ma_error;
      res.trace.rows.push_back(row);
    }
  }
  return res;
}

template <CompositionalProblem P>
ScagdaResult scagda_run(const P& problem, const ScagdaParams& params, Vec w0, std::vector<Vec> a0) {
  return scagda_run(attach_diagnostics(problem), params, std::move(w0), std::move(a0));
}

}  // namespace rots

#endif
