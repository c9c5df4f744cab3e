#ifndef ROTS_BASELINES_HPP
#define ROTS_BASELINES_HPP

#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "diffnet.hpp"
#include "scagda.hpp"
#include "ts_data.hpp"

namespace rots {

enum class AttackKind { fgs, pgd, gaussian };

inline const char* to_string(AttackKind k) {
  switch (k) {
    case AttackKind::fgs: return "fgs";
    case AttackKind::pgd: return "pgd";
    case AttackKind::gaussian: return "gaussian";
  }
  return "?";
}

inline AttackKind parse_attack_kind(std::string_view s) {
  if (s == "fgs") return AttackKind::fgs;
  if (s == "pgd") return AttackKind::pgd;
  if (s == "gaussian") return AttackKind::gaussian;
  throw Error(ErrorKind::validation, "attack kind must be fgs, pgd, or gaussian; got '" + std::string(s) + "'");
}

struct AttackSpec {
  AttackKind kind = AttackKind::fgs;
  double epsilon = 0.1;         // L-inf budget for fgs/pgd
  double sigma = 0.1;           // Gaussian standard deviation
  std::size_t steps = 20;       // pgd iterations
  std::optional<double> alpha;  // pgd step; 2.5 * epsilon / steps when empty
  bool random_start = true;     // pgd start uniform in the ball
  std::uint64_t seed = 0;

  double pgd_alpha() const { return alpha.value_or(2.5 * epsilon / static_cast<double>(steps)); }

  void validate() const {
    if (!(epsilon >= 0.0)) throw Error(ErrorKind::validation, "attack.epsilon must be >= 0");
    if (!(sigma >= 0.0)) throw Error(ErrorKind::validation, "attack.sigma must be >= 0");
    if (steps < 1) throw Error(ErrorKind::validation, "attack.steps must be >= 1");
    if (alpha && !(*alpha > 0.0)) throw Error(ErrorKind::validation, "attack.alpha must be positive");
  }
};

inline Signal input_gradient(const Model& model, const Signal& x, std::size_t label) {
  const std::size_t lab[1] = {label};
  return input_gradients(model, std::span<const Signal>(&x, 1), lab).front();
}

/// x + epsilon * sign(grad_x CE), with sign(0) = 0.
inline Signal fgs_attack(const Model& model, const Signal& x, std::size_t label, double epsilon) {
  const Signal g = input_gradient(model, x, label);
  Signal out = x;
  for (std::size_t k = 0; k < out.size(); ++k) out.vec()[k] += epsilon * sign(g.vec()[k]);
  return out;
}

/// Iterated sign steps of size alpha, each followed by projection onto the
/// L-inf ball of radius epsilon around x.
inline Signal pgd_attack(const Model& model, const Signal& x, std::size_t label, double epsilon, std::size_t steps,
                         double alpha, Rng& rng, bool random_start = true) {
  if (!(alpha > 0.0)) throw Error(ErrorKind::validation, "pgd alpha must be positive");
  Signal cur = x;
  if (random_start && epsilon > 0.0) {
    std::uniform_real_distribution<double> u(-epsilon, epsilon);
    for (auto& v : cur.vec()) v += u(rng);
  }
  for (std::size_t s = 0; s < steps; ++s) {
    const Signal g = input_gradient(model, cur, label);
    for (std::size_t k = 0; k < cur.size(); ++k) {
      const double base = x.vec()[k];
      const double moved = cur.vec()[k] + alpha * sign(g.vec()[k]);
      cur.vec()[k] = std::clamp(moved, base - epsilon, base + epsilon);
    }
  }
  return cur;
}

/// x + e with e_k ~ N(0, sigma^2) i.i.d.
inline Signal gaussian_perturb(const Signal& x, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw Error(ErrorKind::validation, "sigma must be >= 0");
  Signal out = x;
  if (sigma == 0.0) return out;
  std::normal_distribution<double> n(0.0, sigma);
  for (auto& v : out.vec()) v += n(rng);
  return out;
}

/// Applies the attack family at the given level (epsilon for fgs/pgd, sigma for gaussian).
inline Signal apply_attack(const Model& model, const Signal& x, std::size_t label, const AttackSpec& spec, double level,
                           Rng& rng) {
  if (level == 0.0) return x;
  switch (spec.kind) {
    case AttackKind::fgs: return fgs_attack(model, x, label, level);
    case AttackKind::pgd: {
      AttackSpec s = spec;
      s.epsilon = level;
      return pgd_attack(model, x, label, level, s.steps, s.pgd_alpha(), rng, s.random_start);
    }
    case AttackKind::gaussian: return gaussian_perturb(x, level, rng);
  }
  return x;
}

/// Minibatch trainer settings shared by the baselines.
struct TrainConfig {
  OptimizerKind optimizer = OptimizerKind::adam;
  double eta = 1e-3;
  std::size_t batch = 16;
  std::size_t iterations = 500;
  std::uint64_t seed = 0;

  void validate(std::size_t n) const {
    if (!(eta > 0.0)) throw Error(ErrorKind::validation, "trainer.eta must be positive");
    if (batch < 1 || batch > n) throw Error(ErrorKind::validation, "trainer.batch must lie in [1, n]");
    if (iterations < 1) throw Error(ErrorKind::validation, "trainer.iterations must be >= 1");
  }
};

namespace detail {

// Runs `iterations` minibatch steps; make_step(idx, k) returns (loss, weight gradient).
template <class StepFn>
SolveTrace minibatch_loop(const Dataset& ds, Model& model, const TrainConfig& cfg, StepFn&& make_step) {
  cfg.validate(ds.size());
  const SeedTree seeds(cfg.seed);
  Rng batch_rng = seeds.stream("minibatch");
  Optimizer opt{cfg.optimizer, cfg.eta, {}};
  SolveTrace trace;
  trace.objective_terms = true;
  for (std::size_t k = 0; k < cfg.iterations; ++k) {
    const auto idx = sample_without_replacement(batch_rng, ds.size(), cfg.batch);
    std::pair<double, Vec> step;
    try {
      step = make_step(idx, k);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numeric) throw DivergenceError(e.what() + (" at k=" + std::to_string(k)), trace);
      throw;
    }
    auto& [loss, grad] = step;
    opt.step(model, grad);
    if (!all_finite(model.weights())) throw DivergenceError("non-finite weights at k=" + std::to_string(k), trace);
    TraceRow row;
    row.k = k;
    row.obj = loss;
    row.loss_term = loss;
    row.reg_term = 0.0;
    row.primal_grad_norm = norm2(grad);
    trace.rows.push_back(row);
  }
  return trace;
}

}  // namespace detail

/// Empirical risk minimization on clean inputs.
inline SolveTrace train_clean(const Dataset& ds, Model& model, const TrainConfig& cfg) {
  std::vector<Signal> inputs;
  std::vector<std::size_t> labels;
  return detail::minibatch_loop(ds, model, cfg, [&](const std::vector<std::size_t>& idx, std::size_t) {
    inputs.clear();
    labels.clear();
    for (auto i : idx) {
      inputs.push_back(ds.samples[i].values);
      labels.push_back(ds.samples[i].label);
    }
    auto lg = loss_and_grads(model, inputs, labels);
    return std::pair<double, Vec>(lg.loss, std::move(lg.grads.weight_grad));
  });
}

/// Adversarial training: every minibatch is replaced by attacks recomputed
/// against the current weights before the optimizer step.
inline SolveTrace adv_train(const Dataset& ds, Model& model, const AttackSpec& attack, const TrainConfig& cfg) {
  attack.validate();
  if (attack.kind == AttackKind::gaussian) throw Error(ErrorKind::validation, "adv_train needs an fgs or pgd attack");
  Rng attack_rng = SeedTree(cfg.seed).stream("attack");
  std::vector<Signal> inputs;
  std::vector<std::size_t> labels;
  return detail::minibatch_loop(ds, model, cfg, [&](const std::vector<std::size_t>& idx, std::size_t) {
    inputs.clear();
    labels.clear();
    for (auto i : idx) {
      const auto& s = ds.samples[i];
      inputs.push_back(apply_attack(model, s.values, s.label, attack, attack.epsilon, attack_rng));
      labels.push_back(s.label);
    }
    auto lg = loss_and_grads(model, inputs, labels);
    return std::pair<double, Vec>(lg.loss, std::move(lg.grads.weight_grad));
  });
}

/// KL(softmax(z) || softmax(zp)).
inline double kl_softmax(const Vec& z, const Vec& zp) {
  const Vec lp = log_softmax(z), lq = log_softmax(zp);
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) s += std::exp(lp[k]) * (lp[k] - lq[k]);
  return std::max(s, 0.0);
}

struct StnParams {
  double weight = 0.01;  // stability term weight
  double sigma = 0.04;   // Gaussian perturbation for x'
};

struct StnLoss {
  double loss = 0.0;
  double stability = 0.0;
  Vec weight_grad;
};

/// CE(f(x), y) + weight * KL(softmax f(x) || softmax f(xp)) and its weight gradient.
inline StnLoss stn_loss(const Model& model, const Signal& x, const Signal& xp, std::size_t label, double weight) {
  ForwardCache c1, c2;
  const Vec z = model.forward(x, &c1);
  const Vec zp = model.forward(xp, &c2);
  Vec dz;
  StnLoss out;
  out.loss = cross_entropy(z, label, dz);
  const Vec lp = log_softmax(z), lq = log_softmax(zp);
  double kl = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) kl += std::exp(lp[k]) * (lp[k] - lq[k]);
  out.stability = kl;
  out.loss += weight * kl;
  Vec dzp(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) {
    const double p = std::exp(lp[k]), q = std::exp(lq[k]);
    dz[k] += weight * p * ((lp[k] - lq[k]) - kl);
    dzp[k] = weight * (q - p);
  }
  out.weight_grad.assign(model.parameter_count(), 0.0);
  model.backward(c1, dz, &out.weight_grad);
  model.backward(c2, dzp, &out.weight_grad);
  return out;
}

/// Stability training with Gaussian-perturbed copies of each minibatch sample.
inline SolveTrace stn_train(const Dataset& ds, Model& model, const StnParams& stn, const TrainConfig& cfg) {
  Rng noise_rng = SeedTree(cfg.seed).stream("stn_noise");
  return detail::minibatch_loop(ds, model, cfg, [&](const std::vector<std::size_t>& idx, std::size_t) {
    Vec grad(model.parameter_count(), 0.0);
    double loss = 0.0;
    const double inv = 1.0 / static_cast<double>(idx.size());
    for (auto i : idx) {
      const auto& s = ds.samples[i];
      const Signal xp = gaussian_perturb(s.values, stn.sigma, noise_rng);
      const auto l = stn_loss(model, s.values, xp, s.label, stn.weight);
      loss += l.loss * inv;
      for (std::size_t k = 0; k < grad.size(); ++k) grad[k] += l.weight_grad[k] * inv;
    }
    return std::pair<double, Vec>(loss, std::move(grad));
  });
}

struct AccuracyRow {
  double level = 0.0;
  double mean_acc = 0.0;
  double min_acc = 0.0;
  double max_acc = 0.0;
};

inline std::string accuracy_csv(const std::vector<AccuracyRow>& rows) {
  std::ostringstream os;
  os << "level,mean_acc,min_acc,max_acc\n" << std::setprecision(17);
  for (const auto& r : rows) os << r.level << ',' << r.mean_acc << ',' << r.min_acc << ',' << r.max_acc << '\n';
  return os.str();
}

/// Accuracy under the attack family at each level, over `repeats` independent
/// draws. Level 0 is clean accuracy and is evaluated once. Every (repeat, sample)
/// pair owns its random stream, so the result does not depend on `threads`.
inline std::vector<AccuracyRow> eval_robust_accuracy(const Model& model, const Dataset& ds, const AttackSpec& attack,
                                                     const std::vector<double>& levels, std::size_t repeats,
                                                     std::uint64_t seed, std::size_t threads = 1) {
  attack.validate();
  if (repeats < 1) throw Error(ErrorKind::validation, "repeats must be >= 1");
  if (ds.empty()) throw Error(ErrorKind::validation, "empty evaluation set");
  const SeedTree seeds(seed);
  std::vector<AccuracyRow> rows;
  const std::size_t n = ds.size();
  for (std::size_t li = 0; li < levels.size(); ++li) {
    const double level = levels[li];
    const std::size_t reps = level == 0.0 ? 1 : repeats;
    Vec accs;
    for (std::size_t r = 0; r < reps; ++r) {
      std::vector<char> hit(n, 0);
      auto work = [&](std::size_t begin, std::size_t end) {
        for (std::size_t s = begin; s < end; ++s) {
          Rng rng = seeds.child(to_string(attack.kind)).stream("draw", (li * repeats + r) * n + s);
          const auto& smp = ds.samples[s];
          const Signal xa = apply_attack(model, smp.values, smp.label, attack, level, rng);
          hit[s] = argmax(model.forward(xa)) == smp.label;
        }
      };
      const std::size_t nt = std::max<std::size_t>(1, std::min(threads, n));
      if (nt == 1) {
        work(0, n);
      } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < nt; ++t) pool.emplace_back(work, t * n / nt, (t + 1) * n / nt);
        for (auto& th : pool) th.join();
      }
      std::size_t correct = 0;
      for (char h : hit) correct += static_cast<std::size_t>(h);
      accs.push_back(static_cast<double>(correct) / static_cast<double>(n));
    }
    AccuracyRow row;
    row.level = level;
    row.min_acc = *std::min_element(accs.begin(), accs.end());
    row.max_acc = *std::max_element(accs.begin(), accs.end());
    for (double a : accs) row.mean_acc += a / static_cast<double>(accs.size());
    rows.push_back(row);
  }
  return rows;
}

}  // namespace rots

#endif
