#ifndef ROTS_ROTS_TRAIN_HPP
#define ROTS_ROTS_TRAIN_HPP

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <optional>
#include <string>
#include <vector>

#include "align_kernel.hpp"
#include "diffnet.hpp"
#include "scagda.hpp"
#include "ts_data.hpp"

namespace rots {

/// How the training band is chosen: |i - j| < T/2, no band, or a fixed width.
struct BandSetting {
  enum class Mode { half_length, none, fixed };
  Mode mode = Mode::half_length;
  double width = 0.0;

  Band resolve(std::size_t length) const {
    switch (mode) {
      case Mode::half_length: return Band::half_length(length);
      case Mode::none: return Band{};
      case Mode::fixed: return Band{width};
    }
    return Band{};
  }
};

enum class AlignMode { sampled, exhaustive };

struct RotsHyper {
  double lambda = 1e-2;
  std::optional<double> nu;  // estimated from the training set when empty
  double beta = 0.5;
  double eta = 0.05;         // primal SGD step
  double gamma = 0.05;       // dual ascent step
  std::size_t batch = 16;
  std::size_t K = 500;
  std::size_t align_samples = 32;
  BandSetting band{};
  Norm p = Norm::l2;
  std::uint64_t seed = 0;
  bool warm_start = true;
  AlignMode align_mode = AlignMode::sampled;

  void validate() const {
    if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw Error(ErrorKind::validation, "rots.lambda must be >= 0");
    if (nu && !(*nu > 0.0)) throw Error(ErrorKind::validation, "rots.nu must be positive");
    if (!(beta > 0.0 && beta <= 1.0)) throw Error(ErrorKind::validation, "rots.beta must lie in (0, 1]");
    if (!(eta >= 0.0) || !(gamma >= 0.0)) throw Error(ErrorKind::validation, "step sizes must be >= 0");
    if (batch < 1) throw Error(ErrorKind::validation, "rots.batch must be >= 1");
    if (align_samples < 1) throw Error(ErrorKind::validation, "rots.align_samples must be >= 1");
    if (K < 1) throw Error(ErrorKind::validation, "K must be >= 1");
    if (band.mode == BandSetting::Mode::fixed && !(band.width >= 1.0))
      throw Error(ErrorKind::validation, "rots.band must be >= 1");
  }

  GakParams gak(std::size_t length) const { return GakParams{nu.value_or(1.0), p, band.resolve(length)}; }
};

/// Per-sample dual perturbations and moving-average GAK estimates.
struct PerturbationState {
  std::vector<Signal> a;
  Vec omega;

  static PerturbationState zeros(const Dataset& ds) {
    PerturbationState st;
    for (const auto& s : ds.samples) st.a.emplace_back(s.values.channels(), s.values.length());
    st.omega.assign(ds.size(), 0.0);
    return st;
  }
};

struct ObjectiveTerms {
  double loss = 0.0;
  double reg = 0.0;
  double total() const { return loss + reg; }
};

/// (1/n) sum_i [ CE(f(x_i + a_i), y_i) + lambda log k_GAK(x_i, x_i + a_i) ], with the
/// exact kernel or a fresh sampled subset sum per sample.
inline ObjectiveTerms rots_objective(const Model& model, const Dataset& ds, const PerturbationState& pert,
                                     const RotsHyper& hyper, bool exact, Rng* rng = nullptr) {
  if (ds.empty()) throw Error(ErrorKind::validation, "empty dataset");
  ObjectiveTerms out;
  const auto gp = hyper.gak(ds.length());
  std::optional<PathSampler> sampler;
  Rng local(hyper.seed);
  if (!exact) sampler.emplace(ds.length(), ds.length(), gp.band);
  Vec dz;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& x = ds.samples[i].values;
    const Signal xa = x + pert.a[i];
    out.loss += cross_entropy(model.forward(xa), ds.samples[i].label, dz);
    if (hyper.lambda != 0.0) {
      const double lk = exact ? log_gak(x, xa, gp)
                              : std::log(gak_sampled(x, xa, sampler->sample_set(hyper.align_samples, rng ? *rng : local), gp));
      out.reg += hyper.lambda * lk;
    }
  }
  out.loss /= static_cast<double>(ds.size());
  out.reg /= static_cast<double>(ds.size());
  return out;
}

/// Ascent direction for one sample:
///   grad_a CE  -  lambda / (omega nu) * sum_{pi in set} exp(-d_pi / nu) grad_a d_pi
/// where d_pi is evaluated between x and x + a, and loss_grad is grad_a CE at x + a.
inline Signal dual_grad(const Signal& loss_grad, const Signal& x, const Signal& a, double omega,
                        const AlignmentSet& set, const GakParams& gp, double lambda) {
  if (lambda == 0.0) return loss_grad;
  if (!(omega > 0.0)) throw Error(ErrorKind::state, "omega must be positive before the dual step (enable warm start?)");
  if (set.empty()) throw Error(ErrorKind::validation, "alignment set is empty");
  const Signal y = x + a;
  Signal reg(x.channels(), x.length());
  for (const auto& path : set.alignments) {
    const double w = std::exp(-path_cost(x, y, path, gp.p) / gp.nu);
    if (w != 0.0) accumulate_path_cost_grad(x, y, path, gp.p, w, reg);
  }
  Signal g = loss_grad;
  const double scale = lambda / (omega * gp.nu);
  for (std::size_t k = 0; k < g.size(); ++k) g.vec()[k] -= scale * reg.vec()[k];
  return g;
}

/// Convenience form that computes grad_a CE from the model.
inline Signal dual_grad(const Model& model, const Signal& x, std::size_t label, const Signal& a, double omega,
                        const AlignmentSet& set, const GakParams& gp, double lambda) {
  const Signal xa = x + a;
  const std::size_t lab[1] = {label};
  auto g = input_gradients(model, std::span<const Signal>(&xa, 1), lab);
  return dual_grad(g.front(), x, a, omega, set, gp, lambda);
}

/// Seeds every omega_i with one sampled GAK evaluation at a_i = 0.
inline void warm_start_omega(const Dataset& ds, PerturbationState& pert, const RotsHyper& hyper, Rng& rng) {
  const auto gp = hyper.gak(ds.length());
  if (hyper.align_mode == AlignMode::exhaustive) {
    const auto all = enumerate_alignments(ds.length(), ds.length(), gp.band);
    for (std::size_t i = 0; i < ds.size(); ++i) pert.omega[i] = gak_sampled(ds.samples[i].values, ds.samples[i].values, all, gp);
    return;
  }
  const PathSampler sampler(ds.length(), ds.length(), gp.band);
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& x = ds.samples[i].values;
    pert.omega[i] = gak_sampled(x, x, sampler.sample_set(hyper.align_samples, rng), gp);
  }
}

/// Observation points inside a training iteration, for instrumentation.
struct RotsHooks {
  enum class Phase { omega_update, dual_grad };
  std::function<void(std::size_t k, std::size_t i, Phase, const AlignmentSet&)> on_alignments;
};

struct RotsResult {
  Model model;
  PerturbationState pert;
  SolveTrace trace;
  double nu = 0.0;
  bool warm_started = false;
};

/// Minibatch RO-TS: SGD on the weights with the current perturbations, then for
/// each minibatch sample a moving-average refresh of omega_i from a fresh
/// alignment subset and a dual ascent step at the updated weights.
inline RotsResult rots_train(const Dataset& ds, Model model, RotsHyper hyper, const RotsHooks& hooks = {}) {
  hyper.validate();
  if (ds.empty()) throw Error(ErrorKind::validation, "empty training set");
  if (hyper.batch > ds.size()) throw Error(ErrorKind::validation, "rots.batch exceeds training set size");
  const SeedTree seeds(hyper.seed);
  if (!hyper.nu) hyper.nu = estimate_nu(ds, hyper.p, seeds.seed("nu"));
  const auto gp = hyper.gak(ds.length());
  gp.validate();

  RotsResult res;
  res.nu = *hyper.nu;
  res.pert = PerturbationState::zeros(ds);
  res.trace.objective_terms = true;
  Rng batch_rng = seeds.stream("minibatch");
  Rng align_rng = seeds.stream("alignments");
  Rng warm_rng = seeds.stream("warm_start");

  std::optional<PathSampler> sampler;
  std::optional<AlignmentSet> all_paths;
  if (hyper.align_mode == AlignMode::exhaustive)
    all_paths = enumerate_alignments(ds.length(), ds.length(), gp.band);
  else
    sampler.emplace(ds.length(), ds.length(), gp.band);

  if (hyper.warm_start) {
    warm_start_omega(ds, res.pert, hyper, warm_rng);
    res.warm_started = true;
  }

  std::vector<Signal> inputs(hyper.batch);
  std::vector<std::size_t> labels(hyper.batch);
  for (std::size_t k = 0; k < hyper.K; ++k) {
    const auto idx = sample_without_replacement(batch_rng, ds.size(), hyper.batch);
    for (std::size_t b = 0; b < idx.size(); ++b) {
      inputs[b] = ds.samples[idx[b]].values + res.pert.a[idx[b]];
      labels[b] = ds.samples[idx[b]].label;
    }
    LossGrads lg;
    std::vector<Signal> loss_grads;
    try {
      lg = loss_and_grads(model, inputs, labels);
      sgd_step(model, lg.grads.weight_grad, hyper.eta);
      loss_grads = input_gradients(model, inputs, labels);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::numeric) throw DivergenceError(e.what() + (" at k=" + std::to_string(k)), res.trace);
      throw;
    }
    double reg = 0.0;
    for (std::size_t b = 0; b < idx.size(); ++b) {
      const auto i = idx[b];
      const auto& x = ds.samples[i].values;
      AlignmentSet fresh;
      const AlignmentSet& set = all_paths ? *all_paths : (fresh = sampler->sample_set(hyper.align_samples, align_rng));
      if (hooks.on_alignments) hooks.on_alignments(k, i, RotsHooks::Phase::omega_update, set);
      const double sampled = gak_sampled(x, inputs[b], set, gp);
      res.pert.omega[i] = ma_update(res.pert.omega[i], sampled, hyper.beta);
      if (hooks.on_alignments) hooks.on_alignments(k, i, RotsHooks::Phase::dual_grad, set);
      const Signal g = dual_grad(loss_grads[b], x, res.pert.a[i], res.pert.omega[i], set, gp, hyper.lambda);
      auto& a = res.pert.a[i].vec();
      for (std::size_t c = 0; c < a.size(); ++c) a[c] += hyper.gamma * g.vec()[c];
      if (!all_finite(a)) throw DivergenceError("non-finite perturbation at k=" + std::to_string(k), res.trace);
      reg += hyper.lambda * std::log(res.pert.omega[i]);
    }
    if (!all_finite(model.weights())) throw DivergenceError("non-finite weights at k=" + std::to_string(k), res.trace);

    TraceRow row;
    row.k = k;
    row.loss_term = lg.loss;
    row.reg_term = reg / static_cast<double>(idx.size());
    row.obj = *row.loss_term + *row.reg_term;
    row.primal_grad_norm = norm2(lg.grads.weight_grad);
    res.trace.rows.push_back(row);
  }
  res.model = std::move(model);
  return res;
}

/// Textual checkpoint: architecture, input shape, iteration, hyperparameter
/// record, and the flat weight vector at full precision.
struct Checkpoint {
  std::string arch;
  std::size_t channels = 0;
  std::size_t length = 0;
  std::size_t iteration = 0;
  std::string hyper;  // single-line record, opaque to the loader
  Vec weights;

  static constexpr std::string_view kMagic = "rots-checkpoint v1";

  void save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error(ErrorKind::io, "cannot write checkpoint '" + path + "'");
    out << kMagic << '\n'
        << "arch " << arch << '\n'
        << "input " << channels << ' ' << length << '\n'
        << "iteration " << iteration << '\n'
        << "hyper " << hyper << '\n'
        << "weights " << weights.size() << '\n'
        << std::setprecision(17);
    for (double w : weights) out << w << '\n';
    if (!out) throw Error(ErrorKind::io, "failed writing checkpoint '" + path + "'");
  }

  static Checkpoint load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::io, "cannot open checkpoint '" + path + "'");
    auto bad = [&](const std::string& why) { throw Error(ErrorKind::parse, "checkpoint '" + path + "': " + why); };
    std::string line;
    std::getline(in, line);
    if (line != kMagic) bad("missing header");
    Checkpoint ck;
    auto field = [&](std::string_view key) {
      if (!std::getline(in, line) || line.rfind(std::string(key) + " ", 0) != 0) bad("expected '" + std::string(key) + "'");
      return line.substr(key.size() + 1);
    };
    ck.arch = field("arch");
    {
      std::istringstream is(field("input"));
      if (!(is >> ck.channels >> ck.length)) bad("bad input shape");
    }
    auto count_field = [&](std::string_view key) {
      const auto text = field(key);
      std::size_t v = 0;
      const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc{} || ptr != text.data() + text.size()) bad("bad " + std::string(key) + " count");
      return v;
    };
    ck.iteration = count_field("iteration");
    ck.hyper = field("hyper");
    const auto count = count_field("weights");
    ck.weights.reserve(count);
    for (std::size_t k = 0; k < count; ++k) {
      if (!std::getline(in, line)) bad("truncated weights");
      double v = 0.0;
      if (!detail::parse_double(line, v)) bad("bad weight on line " + std::to_string(k + 7));
      ck.weights.push_back(v);
    }
    return ck;
  }

  Model to_model() const {
    Model m(ArchSpec::parse(arch), channels, length);
    if (m.parameter_count() != weights.size())
      throw Error(ErrorKind::arch, "checkpoint holds " + std::to_string(weights.size()) + " weights, architecture needs " +
                                       std::to_string(m.parameter_count()));
    m.weights() = weights;
    return m;
  }
};

}  // namespace rots

#endif
