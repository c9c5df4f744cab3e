#ifndef ROTS_DIFFNET_HPP
#define ROTS_DIFFNET_HPP

#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "core.hpp"

namespace rots {

enum class LayerKind { conv1d, maxpool1d, relu, dense };

struct LayerSpec {
  LayerKind kind = LayerKind::relu;
  std::size_t units = 0;   // conv out_channels or dense units
  std::size_t kernel = 0;  // conv kernel or pool width

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Ordered layer list. The compact string form mirrors the usual 1D-CNN
/// shorthand: `C:<ch>,K:<k>` is a valid convolution followed by ReLU, `P:<w>`
/// a max-pool of width and stride w, `R:<n>` a dense layer followed by ReLU,
/// and `D:<n>` a dense layer with identity activation. Tokens are separated by ';'.
struct ArchSpec {
  std::vector<LayerSpec> layers;

  static ArchSpec parse(std::string_view text) {
    ArchSpec arch;
    std::size_t pos = 0;
    auto fail = [&](const std::string& why) {
      throw Error(ErrorKind::arch, "cannot parse architecture '" + std::string(text) + "': " + why);
    };
    auto number = [&](std::string_view s) -> std::size_t {
      std::size_t v = 0;
      if (s.empty()) fail("missing number");
      for (char ch : s) {
        if (ch < '0' || ch > '9') fail("bad number '" + std::string(s) + "'");
        v = v * 10 + static_cast<std::size_t>(ch - '0');
      }
      if (v == 0) fail("sizes must be positive");
      return v;
    };
    auto trim = [](std::string_view s) {
      while (!s.empty() && (s.front() == ' ' || s.front() == '{')) s.remove_prefix(1);
      while (!s.empty() && (s.back() == ' ' || s.back() == '}')) s.remove_suffix(1);
      return s;
    };
    std::size_t pending_conv = 0;  // channels of a conv awaiting its K token
    while (pos <= text.size()) {
      auto end = text.find(';', pos);
      if (end == std::string_view::npos) end = text.size();
      auto tok = trim(text.substr(pos, end - pos));
      pos = end + 1;
      if (tok.empty()) {
        if (end == text.size()) break;
        continue;
      }
      if (tok.size() < 3 || tok[1] != ':') fail("bad token '" + std::string(tok) + "'");
      const char tag = tok[0];
      if (tag == 'K') {
        // "C:n; K:k" split across tokens.
        if (!pending_conv) fail("kernel token without a preceding convolution");
        arch.layers.push_back({LayerKind::conv1d, pending_conv, number(tok.substr(2))});
        arch.layers.push_back({LayerKind::relu, 0, 0});
        pending_conv = 0;
      } else if (pending_conv) {
        fail("convolution needs a kernel");
      } else if (tag == 'C') {
        const auto comma = tok.find(',');
        if (comma == std::string_view::npos) {
          pending_conv = number(tok.substr(2));
          if (end == text.size()) break;
          continue;
        }
        auto ktok = trim(tok.substr(comma + 1));
        if (ktok.size() < 3 || ktok.substr(0, 2) != "K:") fail("convolution needs ',K:<kernel>'");
        arch.layers.push_back({LayerKind::conv1d, number(tok.substr(2, comma - 2)), number(ktok.substr(2))});
        arch.layers.push_back({LayerKind::relu, 0, 0});
      } else if (tag == 'P') {
        arch.layers.push_back({LayerKind::maxpool1d, 0, number(tok.substr(2))});
      } else if (tag == 'R') {
        arch.layers.push_back({LayerKind::dense, number(tok.substr(2)), 0});
        arch.layers.push_back({LayerKind::relu, 0, 0});
      } else if (tag == 'D') {
        arch.layers.push_back({LayerKind::dense, number(tok.substr(2)), 0});
      } else {
        fail("unknown layer tag '" + std::string(1, tag) + "'");
      }
      if (end == text.size()) break;
    }
    if (pending_conv) fail("convolution needs a kernel");
    return arch;
  }

  /// Appends the identity-activation output layer with one unit per class.
  ArchSpec with_output(std::size_t classes) const {
    ArchSpec a = *this;
    a.layers.push_back({LayerKind::dense, classes, 0});
    return a;
  }

  std::string to_string() const {
    std::ostringstream os;
    bool first = true;
    for (std::size_t k = 0; k < layers.size(); ++k) {
      const auto& l = layers[k];
      const bool relu_next = k + 1 < layers.size() && layers[k + 1].kind == LayerKind::relu;
      if (!first) os << ';';
      first = false;
      switch (l.kind) {
        case LayerKind::conv1d:
          os << "C:" << l.units << ",K:" << l.kernel;
          if (!relu_next) throw Error(ErrorKind::arch, "convolution without ReLU has no string form");
          ++k;
          break;
        case LayerKind::maxpool1d: os << "P:" << l.kernel; break;
        case LayerKind::dense:
          os << (relu_next ? "R:" : "D:") << l.units;
          if (relu_next) ++k;
          break;
        case LayerKind::relu: throw Error(ErrorKind::arch, "standalone ReLU has no string form");
      }
    }
    return os.str();
  }

  friend bool operator==(const ArchSpec&, const ArchSpec&) = default;
};

/// Default classifier body: two convolutions, a pool, two ReLU dense layers.
inline constexpr std::string_view kDefaultArch = "C:100,K:5;C:50,K:5;P:4;R:200;R:100";

struct LayerPlan {
  LayerSpec spec;
  std::size_t in_channels = 0, in_length = 0;
  std::size_t out_channels = 0, out_length = 0;
  std::size_t weight_offset = 0, weight_count = 0;  // weights then biases
  std::size_t fan_in = 0;

  std::size_t in_size() const { return in_channels * in_length; }
  std::size_t out_size() const { return out_channels * out_length; }
};

/// Per-sample activations kept for the backward pass.
struct ForwardCache {
  std::vector<Vec> acts;  // acts[0] is the input, acts[l+1] the output of layer l
  std::vector<std::vector<std::uint32_t>> argmax;
};

struct GradPair {
  Vec weight_grad;
  std::vector<Signal> input_grad;
};

class Model {
 public:
  Model() = default;

  Model(ArchSpec arch, std::size_t in_channels, std::size_t in_length) : arch_(std::move(arch)) {
    if (in_channels == 0 || in_length == 0) throw Error(ErrorKind::arch, "input shape must be positive");
    if (arch_.layers.empty() || arch_.layers.back().kind != LayerKind::dense)
      throw Error(ErrorKind::arch, "architecture must end with a dense output layer");
    std::size_t c = in_channels, t = in_length, offset = 0;
    for (const auto& l : arch_.layers) {
      LayerPlan p;
      p.spec = l;
      p.in_channels = c;
      p.in_length = t;
      switch (l.kind) {
        case LayerKind::conv1d:
          if (l.kernel > t)
            throw Error(ErrorKind::arch, "conv kernel " + std::to_string(l.kernel) + " exceeds length " + std::to_string(t));
          p.out_channels = l.units;
          p.out_length = t - l.kernel + 1;
          p.fan_in = c * l.kernel;
          p.weight_count = l.units * c * l.kernel + l.units;
          break;
        case LayerKind::maxpool1d:
          if (l.kernel > t)
            throw Error(ErrorKind::arch, "pool width " + std::to_string(l.kernel) + " exceeds length " + std::to_string(t));
          p.out_channels = c;
          p.out_length = t / l.kernel;
          break;
        case LayerKind::relu:
          p.out_channels = c;
          p.out_length = t;
          break;
        case LayerKind::dense:
          p.out_channels = l.units;
          p.out_length = 1;
          p.fan_in = c * t;
          p.weight_count = l.units * c * t + l.units;
          break;
      }
      p.weight_offset = offset;
      offset += p.weight_count;
      c = p.out_channels;
      t = p.out_length;
      plan_.push_back(p);
    }
    if (offset == 0) throw Error(ErrorKind::arch, "architecture has no trainable layer");
    in_channels_ = in_channels;
    in_length_ = in_length;
    weights_.assign(offset, 0.0);
  }

  const ArchSpec& arch() const noexcept { return arch_; }
  const std::vector<LayerPlan>& plan() const noexcept { return plan_; }
  std::size_t input_channels() const noexcept { return in_channels_; }
  std::size_t input_length() const noexcept { return in_length_; }
  std::size_t classes() const noexcept { return plan_.empty() ? 0 : plan_.back().out_channels; }
  std::size_t parameter_count() const noexcept { return weights_.size(); }

  Vec& weights() noexcept { return weights_; }
  const Vec& weights() const noexcept { return weights_; }

  void check_input(const Signal& x) const {
    if (x.channels() != in_channels_ || x.length() != in_length_)
      throw Error(ErrorKind::shape, "input " + std::to_string(x.channels()) + "x" + std::to_string(x.length()) +
                                        " does not match model input " + std::to_string(in_channels_) + "x" +
                                        std::to_string(in_length_));
  }

  /// Logits for one input; fills cache when given.
  Vec forward(const Signal& x, ForwardCache* cache = nullptr) const {
    check_input(x);
    Vec cur(x.values().begin(), x.values().end());
    if (cache) {
      cache->acts.assign(1, cur);
      cache->argmax.assign(plan_.size(), {});
    }
    for (std::size_t l = 0; l < plan_.size(); ++l) {
      const auto& p = plan_[l];
      Vec out(p.out_size(), 0.0);
      const double* w = weights_.data() + p.weight_offset;
      switch (p.spec.kind) {
        case LayerKind::conv1d: {
          const auto K = p.spec.kernel, Cin = p.in_channels, Tin = p.in_length, Tout = p.out_length;
          const double* bias = w + p.out_channels * Cin * K;
          for (std::size_t o = 0; o < p.out_channels; ++o) {
            double* yo = out.data() + o * Tout;
            for (std::size_t t = 0; t < Tout; ++t) yo[t] = bias[o];
            for (std::size_t i = 0; i < Cin; ++i) {
              const double* xi = cur.data() + i * Tin;
              const double* wk = w + (o * Cin + i) * K;
              for (std::size_t k = 0; k < K; ++k) {
                const double wv = wk[k];
                const double* xs = xi + k;
                for (std::size_t t = 0; t < Tout; ++t) yo[t] += wv * xs[t];
              }
            }
          }
          break;
        }
        case LayerKind::maxpool1d: {
          const auto W = p.spec.kernel;
          std::vector<std::uint32_t> idx(p.out_size());
          for (std::size_t c = 0; c < p.out_channels; ++c)
            for (std::size_t t = 0; t < p.out_length; ++t) {
              std::size_t best = c * p.in_length + t * W;
              for (std::size_t k = 1; k < W; ++k) {
                const auto s = c * p.in_length + t * W + k;
                if (cur[s] > cur[best]) best = s;
              }
              out[c * p.out_length + t] = cur[best];
              idx[c * p.out_length + t] = static_cast<std::uint32_t>(best);
            }
          if (cache) cache->argmax[l] = std::move(idx);
          break;
        }
        case LayerKind::relu:
          for (std::size_t k = 0; k < out.size(); ++k) out[k] = cur[k] > 0.0 ? cur[k] : 0.0;
          break;
        case LayerKind::dense: {
          const auto in = p.in_size();
          const double* bias = w + p.out_channels * in;
          for (std::size_t o = 0; o < p.out_channels; ++o) {
            const double* wo = w + o * in;
            double s = bias[o];
            for (std::size_t k = 0; k < in; ++k) s += wo[k] * cur[k];
            out[o] = s;
          }
          break;
        }
      }
      if (!all_finite(out)) throw Error(ErrorKind::numeric, "non-finite activation in layer " + std::to_string(l) + " (" + layer_name(p.spec.kind) + ")");
      cur = std::move(out);
      if (cache) cache->acts.push_back(cur);
    }
    return cur;
  }

  /// Backpropagates dlogits through one cached forward pass. Adds the weight
  /// gradient into weight_grad (when non-null) and returns the input gradient.
  Signal backward(const ForwardCache& cache, const Vec& dlogits, Vec* weight_grad) const {
    Vec grad = dlogits;
    for (std::size_t l = plan_.size(); l-- > 0;) {
      const auto& p = plan_[l];
      const Vec& in = cache.acts[l];
      Vec gin(p.in_size(), 0.0);
      const double* w = weights_.data() + p.weight_offset;
      double* gw = weight_grad ? weight_grad->data() + p.weight_offset : nullptr;
      switch (p.spec.kind) {
        case LayerKind::conv1d: {
          const auto K = p.spec.kernel, Cin = p.in_channels, Tin = p.in_length, Tout = p.out_length;
          for (std::size_t o = 0; o < p.out_channels; ++o) {
            const double* go = grad.data() + o * Tout;
            if (gw) {
              double gb = 0.0;
              for (std::size_t t = 0; t < Tout; ++t) gb += go[t];
              gw[p.out_channels * Cin * K + o] += gb;
            }
            for (std::size_t i = 0; i < Cin; ++i) {
              const double* xi = in.data() + i * Tin;
              double* gi = gin.data() + i * Tin;
              const double* wk = w + (o * Cin + i) * K;
              for (std::size_t k = 0; k < K; ++k) {
                if (gw) {
                  double s = 0.0;
                  for (std::size_t t = 0; t < Tout; ++t) s += go[t] * xi[t + k];
                  gw[(o * Cin + i) * K + k] += s;
                }
                const double wv = wk[k];
                double* gs = gi + k;
                for (std::size_t t = 0; t < Tout; ++t) gs[t] += wv * go[t];
              }
            }
          }
          break;
        }
        case LayerKind::maxpool1d: {
          const auto& idx = cache.argmax[l];
          for (std::size_t k = 0; k < grad.size(); ++k) gin[idx[k]] += grad[k];
          break;
        }
        case LayerKind::relu:
          for (std::size_t k = 0; k < gin.size(); ++k) gin[k] = in[k] > 0.0 ? grad[k] : 0.0;
          break;
        case LayerKind::dense: {
          const auto nin = p.in_size();
          for (std::size_t o = 0; o < p.out_channels; ++o) {
            const double g = grad[o];
            const double* wo = w + o * nin;
            if (gw) {
              double* gwo = gw + o * nin;
              for (std::size_t k = 0; k < nin; ++k) gwo[k] += g * in[k];
              gw[p.out_channels * nin + o] += g;
            }
            for (std::size_t k = 0; k < nin; ++k) gin[k] += g * wo[k];
          }
          break;
        }
      }
      grad = std::move(gin);
    }
    return Signal(in_channels_, in_length_, std::move(grad));
  }

  static const char* layer_name(LayerKind k) {
    switch (k) {
      case LayerKind::conv1d: return "conv1d";
      case LayerKind::maxpool1d: return "maxpool1d";
      case LayerKind::relu: return "relu";
      case LayerKind::dense: return "dense";
    }
    return "?";
  }

 private:
  ArchSpec arch_;
  std::vector<LayerPlan> plan_;
  std::size_t in_channels_ = 0, in_length_ = 0;
  Vec weights_;
};

/// Kaiming-uniform weights (bound sqrt(6 / fan_in)), zero biases.
inline Model init_model(const ArchSpec& arch, std::size_t in_channels, std::size_t in_length, std::uint64_t seed) {
  Model m(arch, in_channels, in_length);
  Rng rng(seed);
  for (const auto& p : m.plan()) {
    if (p.weight_count == 0) continue;
    const double bound = std::sqrt(6.0 / static_cast<double>(p.fan_in));
    std::uniform_real_distribution<double> u(-bound, bound);
    const auto nweights = p.weight_count - p.out_channels;
    for (std::size_t k = 0; k < nweights; ++k) m.weights()[p.weight_offset + k] = u(rng);
  }
  return m;
}

inline std::vector<Vec> forward(const Model& model, std::span<const Signal> batch) {
  std::vector<Vec> out;
  out.reserve(batch.size());
  for (const auto& x : batch) out.push_back(model.forward(x));
  return out;
}

inline Vec softmax(const Vec& z) {
  const double m = *std::max_element(z.begin(), z.end());
  Vec p(z.size());
  double s = 0.0;
  for (std::size_t k = 0; k < z.size(); ++k) s += (p[k] = std::exp(z[k] - m));
  for (auto& v : p) v /= s;
  return p;
}

inline Vec log_softmax(const Vec& z) {
  const double m = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double v : z) s += std::exp(v - m);
  const double lse = m + std::log(s);
  Vec out(z.size());
  for (std::size_t k = 0; k < z.size(); ++k) out[k] = z[k] - lse;
  return out;
}

inline std::size_t argmax(const Vec& z) {
  return static_cast<std::size_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

/// Softmax cross-entropy of one logit vector; writes dloss/dlogits into dz.
inline double cross_entropy(const Vec& logits, std::size_t label, Vec& dz) {
  if (label >= logits.size()) throw Error(ErrorKind::validation, "label out of range");
  const Vec lp = log_softmax(logits);
  dz.resize(logits.size());
  for (std::size_t k = 0; k < logits.size(); ++k) dz[k] = std::exp(lp[k]);
  dz[label] -= 1.0;
  return -lp[label];
}

struct LossGrads {
  double loss = 0.0;  // mean over the batch
  GradPair grads;     // weight_grad of the mean loss; input_grad[b] of the b-th sample's own loss
};

inline LossGrads loss_and_grads(const Model& model, std::span<const Signal> batch, std::span<const std::size_t> labels) {
  if (batch.size() != labels.size() || batch.empty())
    throw Error(ErrorKind::validation, "batch and label counts differ or are zero");
  LossGrads out;
  out.grads.weight_grad.assign(model.parameter_count(), 0.0);
  out.grads.input_grad.reserve(batch.size());
  const double inv = 1.0 / static_cast<double>(batch.size());
  ForwardCache cache;
  Vec dz;
  Vec wg(model.parameter_count());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Vec z = model.forward(batch[b], &cache);
    out.loss += cross_entropy(z, labels[b], dz) * inv;
    std::fill(wg.begin(), wg.end(), 0.0);
    out.grads.input_grad.push_back(model.backward(cache, dz, &wg));
    for (std::size_t k = 0; k < wg.size(); ++k) out.grads.weight_grad[k] += wg[k] * inv;
  }
  return out;
}

/// Per-sample input gradients of the cross-entropy, without weight gradients.
inline std::vector<Signal> input_gradients(const Model& model, std::span<const Signal> batch,
                                           std::span<const std::size_t> labels) {
  std::vector<Signal> out;
  out.reserve(batch.size());
  ForwardCache cache;
  Vec dz;
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const Vec z = model.forward(batch[b], &cache);
    cross_entropy(z, labels[b], dz);
    out.push_back(model.backward(cache, dz, nullptr));
  }
  return out;
}

inline double mean_loss(const Model& model, std::span<const Signal> batch, std::span<const std::size_t> labels) {
  double s = 0.0;
  Vec dz;
  for (std::size_t b = 0; b < batch.size(); ++b) s += cross_entropy(model.forward(batch[b]), labels[b], dz);
  return s / static_cast<double>(batch.size());
}

/// w <- w - eta * grad. Applying two steps equals one summed step only because
/// the gradient is held fixed between them.
inline void sgd_step(Model& model, const Vec& grad, double eta) {
  auto& w = model.weights();
  if (grad.size() != w.size()) throw Error(ErrorKind::shape, "gradient size mismatch");
  for (std::size_t k = 0; k < w.size(); ++k) w[k] -= eta * grad[k];
}

struct AdamState {
  Vec m, v;
  std::uint64_t t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

inline void adam_step(AdamState& st, Model& model, const Vec& grad, double eta) {
  auto& w = model.weights();
  if (grad.size() != w.size()) throw Error(ErrorKind::shape, "gradient size mismatch");
  if (st.m.size() != w.size()) {
    st.m.assign(w.size(), 0.0);
    st.v.assign(w.size(), 0.0);
  }
  ++st.t;
  const double c1 = 1.0 - std::pow(st.beta1, static_cast<double>(st.t));
  const double c2 = 1.0 - std::pow(st.beta2, static_cast<double>(st.t));
  for (std::size_t k = 0; k < w.size(); ++k) {
    st.m[k] = st.beta1 * st.m[k] + (1.0 - st.beta1) * grad[k];
    st.v[k] = st.beta2 * st.v[k] + (1.0 - st.beta2) * grad[k] * grad[k];
    const double mhat = st.m[k] / c1;
    const double vhat = st.v[k] / c2;
    w[k] -= eta * mhat / (std::sqrt(vhat) + st.eps);
  }
}

enum class OptimizerKind { sgd, adam };

inline OptimizerKind parse_optimizer(std::string_view s) {
  if (s == "sgd") return OptimizerKind::sgd;
  if (s == "adam") return OptimizerKind::adam;
  throw Error(ErrorKind::validation, "optimizer must be 'sgd' or 'adam'");
}

/// SGD or Adam behind one step() call.
struct Optimizer {
  OptimizerKind kind = OptimizerKind::sgd;
  double eta = 0.01;
  AdamState adam{};

  void step(Model& model, const Vec& grad) {
    if (kind == OptimizerKind::sgd)
      sgd_step(model, grad, eta);
    else
      adam_step(adam, model, grad, eta);
  }
};

inline double accuracy(const Model& model, std::span<const Signal> inputs, std::span<const std::size_t> labels) {
  if (inputs.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t k = 0; k < inputs.size(); ++k) hit += argmax(model.forward(inputs[k])) == labels[k];
  return static_cast<double>(hit) / static_cast<double>(inputs.size());
}

}  // namespace rots

#endif
