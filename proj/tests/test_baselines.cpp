#include <gtest/gtest.h>

#include <cmath>

#include "rots/baselines.hpp"
#include "test_util.hpp"

using namespace rots;
using rots::testing::central_diff;
using rots::testing::random_signal;
using rots::testing::rel_err;

namespace {

// Two-class dense model on a 1x3 input: logits z0 = 0, z1 = v.x. For label 0
// the input gradient of CE is p1 * v.
Model linear_model(const Vec& v) {
  Model m(ArchSpec::parse("D:2"), 1, v.size());
  auto& w = m.weights();
  std::fill(w.begin(), w.end(), 0.0);
  for (std::size_t k = 0; k < v.size(); ++k) w[v.size() + k] = v[k];
  return m;
}

double ce(const Model& m, const Signal& x, std::size_t label) {
  Vec dz;
  return cross_entropy(m.forward(x), label, dz);
}

Model jittered(const ArchSpec& arch, std::size_t c, std::size_t t, std::uint64_t seed) {
  Model m = init_model(arch, c, t, seed);
  Rng rng(seed + 1000);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto& w : m.weights()) w += n(rng);
  return m;
}

}  // namespace

TEST(Fgs, SignExample) {
  const Model m = linear_model({-0.3, 0.0, 2.1});
  const Signal x(1, 3, Vec{0.5, -1.0, 0.25});
  const Signal g = input_gradient(m, x, 0);
  EXPECT_LT(g.vec()[0], 0.0);
  EXPECT_EQ(g.vec()[1], 0.0);
  EXPECT_GT(g.vec()[2], 0.0);
  const Signal xa = fgs_attack(m, x, 0, 0.1);
  EXPECT_EQ(xa.vec()[0], 0.5 - 0.1);
  EXPECT_EQ(xa.vec()[1], -1.0);
  EXPECT_EQ(xa.vec()[2], 0.25 + 0.1);
}

TEST(Fgs, ZeroEpsilonLeavesInput) {
  const Model m = linear_model({1.0, -2.0, 0.5});
  const Signal x(1, 3, Vec{0.1, 0.2, 0.3});
  EXPECT_EQ(fgs_attack(m, x, 1, 0.0), x);
}

TEST(Fgs, LossIncreasesOnLinearModel) {
  Rng rng(4);
  for (int trial = 0; trial < 20; ++trial) {
    const Signal v = random_signal(rng, 1, 3);
    const Model m = linear_model(v.vec());
    const Signal x = random_signal(rng, 1, 3);
    const std::size_t y = trial % 2;
    EXPECT_GE(ce(m, fgs_attack(m, x, y, 0.2), y), ce(m, x, y));
  }
}

TEST(Pgd, OneStepZeroStartEqualsFgs) {
  const Model m = jittered(ArchSpec::parse("C:3,K:2;R:4").with_output(3), 2, 6, 11);
  Rng rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const Signal x = random_signal(rng, 2, 6);
    const std::size_t y = trial % 3;
    Rng unused(0);
    EXPECT_EQ(pgd_attack(m, x, y, 0.07, 1, 0.07, unused, false), fgs_attack(m, x, y, 0.07));
  }
}

TEST(Pgd, StaysInBudget) {
  const Model m = jittered(ArchSpec::parse("C:3,K:2;R:4").with_output(2), 1, 8, 12);
  Rng rng(6);
  for (int trial = 0; trial < 20; ++trial) {
    const Signal x = random_signal(rng, 1, 8, 3.0);
    const double eps = 0.01 + 0.05 * trial;
    const Signal xa = pgd_attack(m, x, trial % 2, eps, 7, 0.3 * eps + 0.01 * trial, rng, trial % 3 != 0);
    for (std::size_t k = 0; k < x.size(); ++k) EXPECT_LE(std::abs(xa.vec()[k] - x.vec()[k]), eps + 1e-12);
  }
}

TEST(Pgd, NotWorseThanFgsOnLinearModel) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Model m = linear_model(random_signal(rng, 1, 3).vec());
    const Signal x = random_signal(rng, 1, 3);
    const std::size_t y = trial % 2;
    AttackSpec spec;
    spec.kind = AttackKind::pgd;
    spec.epsilon = 0.15;
    const Signal xp = pgd_attack(m, x, y, spec.epsilon, spec.steps, spec.pgd_alpha(), rng, true);
    EXPECT_GE(ce(m, xp, y), ce(m, fgs_attack(m, x, y, spec.epsilon), y) - 1e-12);
  }
}

TEST(Gaussian, ZeroSigmaIsIdentity) {
  Rng rng(1);
  const Signal x = random_signal(rng, 2, 5);
  EXPECT_EQ(gaussian_perturb(x, 0.0, rng), x);
  EXPECT_THROW(gaussian_perturb(x, -0.1, rng), Error);
}

TEST(Gaussian, EmpiricalVariance) {
  const double sigma = 0.3;
  const std::size_t n = 100000;
  Rng rng(2);
  const Signal x(1, n, 1.5);
  const Signal xa = gaussian_perturb(x, sigma, rng);
  double mean = 0.0, var = 0.0;
  for (std::size_t k = 0; k < n; ++k) mean += (xa.vec()[k] - 1.5) / n;
  for (std::size_t k = 0; k < n; ++k) var += std::pow(xa.vec()[k] - 1.5 - mean, 2) / (n - 1);
  const double s2 = sigma * sigma;
  EXPECT_LE(std::abs(var - s2), 3.0 * s2 * std::sqrt(2.0 / (n - 1)));
  EXPECT_LE(std::abs(mean), 3.0 * sigma / std::sqrt(double(n)));
}

TEST(Gaussian, SameSeedSameDraw) {
  const Signal x(2, 7, 0.0);
  Rng a(9), b(9);
  EXPECT_EQ(gaussian_perturb(x, 0.2, a), gaussian_perturb(x, 0.2, b));
}

TEST(AttackSpec, Validation) {
  AttackSpec s;
  s.epsilon = -1.0;
  EXPECT_THROW(s.validate(), Error);
  s = AttackSpec{};
  s.steps = 0;
  EXPECT_THROW(s.validate(), Error);
  s = AttackSpec{};
  s.alpha = 0.0;
  EXPECT_THROW(s.validate(), Error);
  EXPECT_EQ(parse_attack_kind("pgd"), AttackKind::pgd);
  EXPECT_THROW(parse_attack_kind("cw"), Error);
  EXPECT_NEAR(AttackSpec{}.pgd_alpha(), 2.5 * 0.1 / 20.0, 1e-15);
}

TEST(AdvTrain, ZeroEpsilonEqualsCleanTraining) {
  const auto ds = synth_two_class(16, 12, 0.1, 3);
  const auto arch = ArchSpec::parse("C:3,K:3;P:2").with_output(2);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.iterations = 15;
  cfg.seed = 21;
  Model a = init_model(arch, 1, 12, 1), b = a;
  AttackSpec atk;
  atk.epsilon = 0.0;
  const auto ta = adv_train(ds, a, atk, cfg);
  const auto tb = train_clean(ds, b, cfg);
  EXPECT_EQ(a.weights(), b.weights());
  ASSERT_EQ(ta.rows.size(), tb.rows.size());
  for (std::size_t k = 0; k < ta.rows.size(); ++k) EXPECT_EQ(ta.rows[k].obj, tb.rows[k].obj);
}

TEST(AdvTrain, DeterministicAndChangesWeights) {
  const auto ds = synth_two_class(16, 12, 0.1, 4);
  const auto arch = ArchSpec::parse("C:3,K:3;P:2").with_output(2);
  TrainConfig cfg;
  cfg.batch = 4;
  cfg.iterations = 10;
  cfg.seed = 2;
  AttackSpec atk;
  atk.kind = AttackKind::pgd;
  atk.epsilon = 0.1;
  atk.steps = 3;
  const Model init = init_model(arch, 1, 12, 5);
  Model a = init, b = init, c = init;
  adv_train(ds, a, atk, cfg);
  adv_train(ds, b, atk, cfg);
  EXPECT_EQ(a.weights(), b.weights());
  train_clean(ds, c, cfg);
  EXPECT_NE(a.weights(), c.weights());
  atk.kind = AttackKind::gaussian;
  EXPECT_THROW(adv_train(ds, c, atk, cfg), Error);
}

TEST(Stn, IdenticalLogitsZeroStability) {
  const Model m = jittered(ArchSpec::parse("R:4").with_output(3), 1, 5, 3);
  Rng rng(1);
  const Signal x = random_signal(rng, 1, 5);
  const auto l = stn_loss(m, x, x, 1, 0.5);
  EXPECT_EQ(l.stability, 0.0);
  EXPECT_EQ(kl_softmax({0.3, -0.2, 1.0}, {0.3, -0.2, 1.0}), 0.0);
}

TEST(Stn, KlNonNegative) {
  Rng rng(8);
  std::normal_distribution<double> n(0.0, 2.0);
  for (int trial = 0; trial < 200; ++trial) {
    Vec z(4), zp(4);
    for (auto& v : z) v = n(rng);
    for (auto& v : zp) v = n(rng);
    EXPECT_GE(kl_softmax(z, zp), 0.0);
  }
}

TEST(Stn, CombinedLossGradientFiniteDifferences) {
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    Model m = jittered(ArchSpec::parse("C:2,K:2;R:3").with_output(2 + trial % 2), 1, 6, 40 + trial);
    const Signal x = random_signal(rng, 1, 6);
    const Signal xp = gaussian_perturb(x, 0.3, rng);
    const std::size_t y = trial % 2;
    const double weight = 0.05 + 0.3 * (trial % 4);
    const auto l = stn_loss(m, x, xp, y, weight);
    Vec dz;
    EXPECT_NEAR(l.loss, cross_entropy(m.forward(x), y, dz) + weight * kl_softmax(m.forward(x), m.forward(xp)), 1e-12);
    const auto fd = central_diff(
        [&](const Vec& w) {
          Model mm = m;
          mm.weights() = w;
          return stn_loss(mm, x, xp, y, weight).loss;
        },
        m.weights());
    EXPECT_LE(rel_err(l.weight_grad, fd), 1e-4) << "trial " << trial;
  }
}

TEST(StnTrain, Deterministic) {
  const auto ds = synth_two_class(12, 10, 0.1, 6);
  const auto arch = ArchSpec::parse("C:2,K:3").with_output(2);
  TrainConfig cfg;
  cfg.batch = 3;
  cfg.iterations = 8;
  cfg.seed = 3;
  Model a = init_model(arch, 1, 10, 2), b = a;
  stn_train(ds, a, StnParams{}, cfg);
  stn_train(ds, b, StnParams{}, cfg);
  EXPECT_EQ(a.weights(), b.weights());
}

TEST(Eval, LevelZeroIsCleanAccuracy) {
  const auto ds = synth_two_class(20, 12, 0.3, 7);
  const Model m = jittered(ArchSpec::parse("C:2,K:3").with_output(2), 1, 12, 8);
  std::size_t correct = 0;
  for (const auto& s : ds.samples) correct += argmax(m.forward(s.values)) == s.label;
  AttackSpec atk;
  atk.kind = AttackKind::gaussian;
  const auto rows = eval_robust_accuracy(m, ds, atk, {0.0, 0.2}, 5, 1);
  ASSERT_EQ(rows.size(), 2u);
  const double clean = double(correct) / ds.size();
  EXPECT_EQ(rows[0].mean_acc, clean);
  EXPECT_EQ(rows[0].min_acc, clean);
  EXPECT_EQ(rows[0].max_acc, clean);
  EXPECT_LE(rows[1].min_acc, rows[1].mean_acc);
  EXPECT_LE(rows[1].mean_acc, rows[1].max_acc);
}

TEST(Eval, ConstantModelOnSingleClassIsPerfect) {
  Model m(ArchSpec::parse("D:2"), 1, 4);
  std::fill(m.weights().begin(), m.weights().end(), 0.0);
  m.weights()[8] = 1.0;  // bias of class 0
  Dataset ds;
  ds.num_classes = 2;
  Rng rng(3);
  for (int k = 0; k < 10; ++k) ds.samples.push_back({random_signal(rng, 1, 4), 0});
  for (auto kind : {AttackKind::fgs, AttackKind::pgd, AttackKind::gaussian}) {
    AttackSpec atk;
    atk.kind = kind;
    for (const auto& r : eval_robust_accuracy(m, ds, atk, {0.0, 0.1, 0.5, 2.0}, 3, 4)) {
      EXPECT_EQ(r.mean_acc, 1.0);
      EXPECT_EQ(r.min_acc, 1.0);
    }
  }
}

TEST(Eval, DoesNotMutateAndIgnoresThreadCount) {
  const auto ds = synth_two_class(14, 10, 0.3, 9);
  const Model m = jittered(ArchSpec::parse("C:2,K:3").with_output(2), 1, 10, 10);
  const auto ds_copy = ds;
  const Vec w_copy = m.weights();
  AttackSpec atk;
  atk.kind = AttackKind::pgd;
  atk.steps = 3;
  const auto r1 = eval_robust_accuracy(m, ds, atk, {0.0, 0.3, 1.0}, 3, 5, 1);
  const auto r3 = eval_robust_accuracy(m, ds, atk, {0.0, 0.3, 1.0}, 3, 5, 3);
  EXPECT_EQ(accuracy_csv(r1), accuracy_csv(r3));
  EXPECT_EQ(m.weights(), w_copy);
  ASSERT_EQ(ds.size(), ds_copy.size());
  for (std::size_t k = 0; k < ds.size(); ++k) {
    EXPECT_EQ(ds.samples[k].values, ds_copy.samples[k].values);
    EXPECT_EQ(ds.samples[k].label, ds_copy.samples[k].label);
  }
}

TEST(Eval, CsvHeaderAndErrors) {
  const auto csv = accuracy_csv({AccuracyRow{0.1, 0.5, 0.25, 0.75}});
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "level,mean_acc,min_acc,max_acc");
  EXPECT_NE(csv.find("0.10000000000000001,0.5,0.25,0.75"), std::string::npos);
  const Model m(ArchSpec::parse("D:2"), 1, 4);
  Dataset empty;
  EXPECT_THROW(eval_robust_accuracy(m, empty, AttackSpec{}, {0.0}, 1, 0), Error);
}

TEST(TrainClean, OverflowSurfacesAsDivergenceWithTrace) {
  const auto ds = synth_two_class(12, 10, 0.1, 6);
  Model m = init_model(ArchSpec::parse("C:2,K:3").with_output(2), 1, 10, 2);
  TrainConfig cfg;
  cfg.optimizer = OptimizerKind::sgd;
  cfg.eta = 1e308;
  cfg.batch = 4;
  cfg.iterations = 20;
  try {
    train_clean(ds, m, cfg);
    FAIL();
  } catch (const DivergenceError& e) {
    EXPECT_EQ(e.kind(), ErrorKind::divergence);
    EXPECT_LT(e.trace().size(), cfg.iterations);
  }
}
