#include <gtest/gtest.h>

#include <cmath>

#include "rots/plbench.hpp"
#include "test_util.hpp"

using namespace rots;
using rots::testing::central_diff;
using rots::testing::rel_err;

namespace {

// One block, one center: phi(w, a) = mu/2 |w|^2 + w.Aa - lambda |a - c|^2 / nu is
// quadratic, so the inner maximizer is a* = c + nu/(2 lambda) A^T w and
// P(w) = mu/2 |w|^2 + w.Ac + nu/(4 lambda) |A^T w|^2.
PlProblemSpec quadratic_spec() {
  PlProblemSpec s;
  s.n = 1;
  s.m = 1;
  s.dual_dim = 2;
  s.primal_dim = 2;
  s.coupling = {0.7, -0.2, 0.4, 1.1};
  s.centers = {Vec{0.3, -0.5}};
  s.nu_syn = 0.8;
  s.lambda_syn = 2.0;
  s.mu_w = 1.5;
  return s;
}

double quadratic_P(const PlProblemSpec& s, const Vec& w) {
  const PlProblem prob(s);
  const Vec Ac = prob.couple(s.centers[0]);
  const Vec ATw = prob.couple_t(w);
  return 0.5 * s.mu_w * dot(w, w) + dot(w, Ac) + s.nu_syn / (4.0 * s.lambda_syn) * dot(ATw, ATw);
}

}  // namespace

TEST(PlProblem, HAtCenterIsOne) {
  const PlProblem prob(PlProblemSpec::make_default(1));
  EXPECT_EQ(prob.h_scalar(prob.spec().center(2, 5), 2, 5), 1.0);
}

TEST(PlProblem, SingleComponentSampledEqualsExact) {
  const PlProblem prob(PlProblemSpec::make_default(2, 2, 3, 1));
  const Vec a{0.4, -0.9};
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(prob.h_value(a, i, 0), prob.exact_h(a, i));
}

TEST(PlProblem, HGradientFiniteDifferences) {
  Rng rng(3);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 1 + trial % 2;
    const PlProblem prob(PlProblemSpec::make_default(100 + trial, d, 2, 3));
    Vec a(d);
    for (auto& v : a) v = z(rng);
    const std::size_t i = trial % 2, j = trial % 3;
    const auto fd = central_diff([&](const Vec& x) { return prob.h_scalar(x, i, j); }, a);
    EXPECT_LE(rel_err(prob.h_grad(a, i, j), fd), 1e-6) << "trial " << trial;
  }
}

TEST(PlProblem, SpecValidationNamesField) {
  auto s = PlProblemSpec::make_default(1);
  s.nu_syn = -1.0;
  try {
    PlProblem p(s);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::validation);
    EXPECT_NE(std::string(e.what()).find("plbench.nu_syn"), std::string::npos);
  }
  s = PlProblemSpec::make_default(1);
  s.centers.pop_back();
  EXPECT_THROW(PlProblem{s}, Error);
}

TEST(PrimalOracle, DecouplesWhenCouplingIsZero) {
  auto s = PlProblemSpec::make_default(4);
  s.coupling.assign(4, 0.0);
  const PlProblem prob(s);
  auto reduced = [&](const Vec& w) { return primal_oracle(prob, w, 61).value - 0.5 * s.mu_w * dot(w, w); };
  const double base = reduced({0.0, 0.0});
  EXPECT_NEAR(reduced({1.3, -0.4}), base, 1e-9);
  EXPECT_NEAR(reduced({-2.0, 0.7}), base, 1e-9);
}

TEST(PrimalOracle, MatchesQuadraticClosedForm) {
  const auto s = quadratic_spec();
  const PlProblem prob(s);
  for (const Vec& w : {Vec{0.0, 0.0}, Vec{0.5, -0.3}, Vec{-0.8, 0.9}}) {
    const auto r = primal_oracle(prob, w, 101);
    EXPECT_NEAR(r.value, quadratic_P(s, w), 1e-9);
    const Vec ATw = prob.couple_t(w);
    for (std::size_t k = 0; k < 2; ++k)
      EXPECT_NEAR(r.maximizers[0][k], s.centers[0][k] + s.nu_syn / (2.0 * s.lambda_syn) * ATw[k], 1e-5);
    EXPECT_FALSE(r.boundary);
  }
}

TEST(PrimalOracle, ResolutionSelfRefinement) {
  const PlProblem prob(PlProblemSpec::make_default(5));
  for (const Vec& w : {Vec{0.0, 0.0}, Vec{0.6, -0.2}}) {
    const double coarse = primal_oracle(prob, w, 61).value;
    const double fine = primal_oracle(prob, w, 121).value;
    EXPECT_NEAR(coarse, fine, 1e-4);
  }
}

TEST(PrimalOracle, OneDimensionalDual) {
  const PlProblem prob(PlProblemSpec::make_default(6, 1));
  const auto r = primal_oracle(prob, {0.2, 0.1}, 201);
  EXPECT_TRUE(std::isfinite(r.value));
  EXPECT_EQ(r.maximizers.size(), 4u);
}

TEST(PrimalMinimum, QuadraticClosedForm) {
  // grad P = mu w + Ac + nu/(2 lambda) A A^T w = 0.
  const auto s = quadratic_spec();
  const PlProblem prob(s);
  Vec w_star;
  const double p_star = primal_minimum(prob, &w_star, 41);
  const double* A = s.coupling.data();
  const double k = s.nu_syn / (2.0 * s.lambda_syn);
  const double AAT[4] = {A[0] * A[0] + A[1] * A[1], A[0] * A[2] + A[1] * A[3], A[0] * A[2] + A[1] * A[3],
                         A[2] * A[2] + A[3] * A[3]};
  const double M[4] = {s.mu_w + k * AAT[0], k * AAT[1], k * AAT[2], s.mu_w + k * AAT[3]};
  const Vec Ac = prob.couple(s.centers[0]);
  const double det = M[0] * M[3] - M[1] * M[2];
  const Vec w{-(M[3] * Ac[0] - M[1] * Ac[1]) / det, -(-M[2] * Ac[0] + M[0] * Ac[1]) / det};
  EXPECT_NEAR(w_star[0], w[0], 1e-6);
  EXPECT_NEAR(w_star[1], w[1], 1e-6);
  EXPECT_NEAR(p_star, quadratic_P(s, w), 1e-10);
}

TEST(Bench, GapColumnMatchesRecomputedOracle) {
  const auto spec = PlProblemSpec::make_default(7);
  ScagdaParams p;
  p.eta = 5e-3;
  p.gamma = 1e-2;
  p.beta = 0.1;
  p.K = 2000;
  p.seed = 1;
  BenchOptions opts;
  opts.trace_rows = 20;
  const auto rep = run_bench(spec, p, opts);
  const PlProblem prob(spec);
  EXPECT_NEAR(rep.final_gap, primal_oracle(prob, rep.w_final, 61).value - rep.p_star, 1e-9);
  EXPECT_EQ(rep.trace.rows.back().k, 1999u);
  for (const auto& row : rep.trace.rows) EXPECT_GE(*row.primal_gap, -1e-9);
}

TEST(Bench, ShortRunReducesGapAndMaError) {
  const auto spec = PlProblemSpec::make_default(8);
  ScagdaParams p;
  p.eta = 5e-3;
  p.gamma = 1e-2;
  p.beta = 0.1;
  p.K = 20000;
  p.seed = 2;
  BenchOptions opts;
  opts.trace_rows = 40;
  const auto rep = run_bench(spec, p, opts);
  EXPECT_LT(rep.final_gap, rep.initial_gap);
  EXPECT_LT(rep.final_ma_error, rep.initial_ma_error);
  EXPECT_LT(rep.tail_gap, 0.05 * rep.initial_gap);
  const auto csv = rep.summary_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "P_star,final_gap,final_ma_error,tail_correlation,tail_gap");
}

// With beta = 1 a touched block's omega is a single sample h_ij(a), so its
// share of the MA error is exactly the single-sample deviation; untouched
// blocks still hold omega = 0.
TEST(Bench, BetaOneMaErrorIsSingleSampleDeviation) {
  const auto spec = PlProblemSpec::make_default(9, 2, 3, 4);
  const PlProblem prob(spec);
  ScagdaParams p;
  p.beta = 1.0;
  p.K = 1;
  p.seed = 5;
  const std::vector<Vec> a0(3, Vec{0.2, -0.1});
  const auto r = scagda_run(attach_diagnostics(prob, {}, [&](const Vec& a, std::size_t i) { return prob.exact_h(a, i); }),
                            p, Vec{1.0, -1.0}, a0);
  double untouched = 0.0, touched_dev = -1.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double hi = prob.exact_h(a0[i], i)[0];
    if (r.omega[i].empty()) {
      untouched += hi * hi;
      continue;
    }
    for (std::size_t j = 0; j < 4; ++j)
      if (prob.h_scalar(a0[i], i, j) == r.omega[i][0]) touched_dev = std::pow(r.omega[i][0] - hi, 2);
  }
  ASSERT_GE(touched_dev, 0.0);
  EXPECT_NEAR(*r.trace.rows[0].ma_error * 3.0 - untouched, touched_dev, 1e-12);
}

TEST(Pearson, KnownValues) {
  EXPECT_NEAR(pearson({1, 2, 3}, {2, 4, 6}), 1.0, 1e-15);
  EXPECT_NEAR(pearson({1, 2, 3}, {3, 2, 1}), -1.0, 1e-15);
}
