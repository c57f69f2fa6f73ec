#pragma once

// Feed-forward networks with Gaussian noise injected into every neuron's
// pre-activation:
//
//   v = W x + b + sigma * eps,   x_next = phi(v),   eps ~ N(0, 1)
//
// Backpropagation produces the weight gradients and, from the same residual
// errors delta = dL/dv, the noise-level gradients dL/dsigma = delta * eps.
// Conv layers share one sigma per feature map and draw an independent eps
// for every spatial element; their sigma gradient sums delta * eps over the map.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "noiseopt/rng.hpp"
#include "noiseopt/tensor.hpp"

namespace noiseopt {

enum class LayerKind { dense, conv };
enum class Activation { identity, relu, sigmoid };
enum class NoiseKind { none, fixed, trainable };

inline std::string_view to_string(LayerKind k) { return k == LayerKind::dense ? "dense" : "conv"; }

inline std::string_view to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::relu: return "relu";
    case Activation::sigmoid: return "sigmoid";
  }
  return "?";
}

inline std::string_view to_string(NoiseKind k) {
  switch (k) {
    case NoiseKind::none: return "none";
    case NoiseKind::fixed: return "fixed";
    case NoiseKind::trainable: return "trainable";
  }
  return "?";
}

inline Activation parse_activation(std::string_view s) {
  if (s == "identity") return Activation::identity;
  if (s == "relu") return Activation::relu;
  if (s == "sigmoid") return Activation::sigmoid;
  throw std::invalid_argument("unknown activation '" + std::string(s) + "'");
}

struct NoiseSpec {
  NoiseKind kind = NoiseKind::none;
  double sigma = 0.0;  // fixed level, or initial level when trainable

  static NoiseSpec none() { return {}; }
  static NoiseSpec fixed(double sigma) { return {NoiseKind::fixed, sigma}; }
  static NoiseSpec trainable(double init = 1.0) { return {NoiseKind::trainable, init}; }

  bool active() const noexcept { return kind != NoiseKind::none; }
  friend bool operator==(const NoiseSpec&, const NoiseSpec&) = default;
};

struct LayerSpec {
  LayerKind kind = LayerKind::dense;
  std::size_t inputs = 0;   // fan-in, or input channels for conv
  std::size_t outputs = 0;  // fan-out, or number of kernels for conv
  Activation activation = Activation::identity;
  NoiseSpec noise;
  bool pool = false;        // conv only: 2x2 max-pool after the activation
  std::size_t kernel = 3;   // conv only

  static LayerSpec dense(std::size_t in, std::size_t out, Activation act,
                         NoiseSpec noise = {}) {
    return {LayerKind::dense, in, out, act, noise, false, 3};
  }
  static LayerSpec conv(std::size_t channels, std::size_t kernels, Activation act,
                        NoiseSpec noise = {}, bool pool = false) {
    return {LayerKind::conv, channels, kernels, act, noise, pool, 3};
  }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

struct InputShape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const noexcept { return channels * height * width; }
  friend bool operator==(const InputShape&, const InputShape&) = default;
};

struct Architecture {
  InputShape input;
  std::vector<LayerSpec> layers;

  friend bool operator==(const Architecture&, const Architecture&) = default;
};

class ArchitectureError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-sample output shape of every layer (conv: K x H x W, dense: width).
/// Throws ArchitectureError when consecutive layers do not compose.
inline std::vector<Shape> layer_output_shapes(const Architecture& arch) {
  if (arch.layers.empty()) throw ArchitectureError("architecture has no layers");
  if (arch.input.size() == 0) throw ArchitectureError("input shape has a zero dimension");
  std::vector<Shape> shapes;
  Shape cur = {arch.input.channels, arch.input.height, arch.input.width};
  bool spatial = true;
  for (std::size_t t = 0; t < arch.layers.size(); ++t) {
    const LayerSpec& L = arch.layers[t];
    const std::string where = "layer " + std::to_string(t) + ": ";
    if (L.outputs == 0) throw ArchitectureError(where + "zero outputs");
    if (L.noise.kind == NoiseKind::trainable && !(L.noise.sigma > 0.0)) {
      throw ArchitectureError(where + "trainable noise needs a positive initial sigma");
    }
    if (L.noise.kind == NoiseKind::fixed && !(L.noise.sigma >= 0.0)) {
      throw ArchitectureError(where + "fixed noise level must be non-negative");
    }
    if (L.kind == LayerKind::conv) {
      if (!spatial) throw ArchitectureError(where + "conv layer after a dense layer");
      if (L.inputs != cur[0]) {
        throw ArchitectureError(where + "expects " + std::to_string(L.inputs) +
                                " channels but receives " + std::to_string(cur[0]));
      }
      if (L.kernel % 2 == 0) throw ArchitectureError(where + "kernel size must be odd");
      cur = {L.outputs, cur[1], cur[2]};
      if (L.pool) {
        if (cur[1] % 2 || cur[2] % 2) {
          throw ArchitectureError(where + "2x2 pooling needs even spatial size, got " + to_string(cur));
        }
        cur = {cur[0], cur[1] / 2, cur[2] / 2};
      }
    } else {
      const std::size_t flat = shape_size(cur);
      if (L.inputs != flat) {
        throw ArchitectureError(where + "expects fan-in " + std::to_string(L.inputs) +
                                " but receives " + std::to_string(flat));
      }
      if (L.pool) throw ArchitectureError(where + "pooling is only defined for conv layers");
      cur = {L.outputs};
      spatial = false;
    }
    shapes.push_back(cur);
  }
  return shapes;
}

struct LayerParams {
  Tensor weights;  // dense: out x in; conv: K x C x k x k
  Tensor bias;     // one per neuron / feature map (the theta_{i,0} column)
  Tensor sigma;    // one per neuron / feature map; empty when the layer has no noise

  friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

struct NetworkState {
  Architecture arch;
  std::vector<LayerParams> layers;
  std::uint64_t seed = 0;

  std::size_t num_classes() const { return arch.layers.back().outputs; }
  bool has_noise() const {
    return std::any_of(arch.layers.begin(), arch.layers.end(),
                       [](const LayerSpec& l) { return l.noise.active(); });
  }
  friend bool operator==(const NetworkState&, const NetworkState&) = default;
};

/// Xavier-uniform for sigmoid/identity layers, Kaiming-uniform for ReLU
/// layers, zero biases, sigma at the layer's configured level.
inline NetworkState init_network(const Architecture& arch, std::uint64_t seed) {
  layer_output_shapes(arch);
  NetworkState net{arch, {}, seed};
  RngStream base(seed, stream_id_of("init"));
  for (std::size_t t = 0; t < arch.layers.size(); ++t) {
    const LayerSpec& L = arch.layers[t];
    RngStream rng = base.derive(t);
    LayerParams p;
    std::size_t fan_in = L.inputs, fan_out = L.outputs;
    if (L.kind == LayerKind::conv) {
      fan_in *= L.kernel * L.kernel;
      fan_out *= L.kernel * L.kernel;
      p.weights = Tensor({L.outputs, L.inputs, L.kernel, L.kernel});
    } else {
      p.weights = Tensor({L.outputs, L.inputs});
    }
    const double bound = L.activation == Activation::relu
                             ? std::sqrt(6.0 / static_cast<double>(fan_in))
                             : std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    for (double& w : p.weights.data()) w = rng.uniform(-bound, bound);
    p.bias = Tensor({L.outputs});
    if (L.noise.active()) p.sigma = Tensor({L.outputs}, L.noise.sigma);
    net.layers.push_back(std::move(p));
  }
  return net;
}

struct LayerTrace {
  Tensor input;  // x^(t), batched in the layer's natural input shape
  Tensor pre;    // v^(t) including the injected noise
  Tensor noise;  // eps^(t); empty when no noise was injected
  std::vector<std::uint32_t> pool_argmax;  // flat index into `pre` per pooled output
};

struct ForwardTrace {
  std::vector<LayerTrace> layers;
  Tensor output;

  std::size_t batch_size() const { return output.empty() ? 0 : output.dim(0); }
};

struct NoiseMode {
  enum class Kind { active, frozen, disabled };
  Kind kind = Kind::active;
  const ForwardTrace* trace = nullptr;

  static NoiseMode active() { return {Kind::active, nullptr}; }
  static NoiseMode frozen(const ForwardTrace& t) { return {Kind::frozen, &t}; }
  static NoiseMode disabled() { return {Kind::disabled, nullptr}; }
};

struct ForwardResult {
  Tensor output;
  ForwardTrace trace;
};

namespace detail {

inline double activate(Activation a, double v) {
  switch (a) {
    case Activation::identity: return v;
    case Activation::relu: return v > 0.0 ? v : 0.0;
    case Activation::sigmoid:
      return v >= 0.0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
  }
  return v;
}

// phi'(v); relu'(0) is taken as 0.
inline double activate_derivative(Activation a, double v) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::relu: return v > 0.0 ? 1.0 : 0.0;
    case Activation::sigmoid: {
      const double s = activate(Activation::sigmoid, v);
      return s * (1.0 - s);
    }
  }
  return 1.0;
}

// Reshapes a batch to [n x per_sample...] given the per-sample shape.
inline Tensor as_batch(const Tensor& x, const Shape& per_sample, const char* what) {
  const std::size_t per = shape_size(per_sample);
  if (x.rank() == 0 || x.empty() || x.size() % per != 0 || x.dim(0) * per != x.size()) {
    throw DimensionError(std::string(what) + ": batch " + to_string(x.shape()) +
                         " does not match per-sample shape " + to_string(per_sample));
  }
  Shape s = {x.dim(0)};
  s.insert(s.end(), per_sample.begin(), per_sample.end());
  return x.reshaped(std::move(s));
}

inline Shape layer_input_shape(const Architecture& arch, const std::vector<Shape>& outs,
                               std::size_t t) {
  const LayerSpec& L = arch.layers[t];
  Shape in = t == 0 ? Shape{arch.input.channels, arch.input.height, arch.input.width} : outs[t - 1];
  if (L.kind == LayerKind::dense) return {shape_size(in)};
  return in;
}

inline void check_params(const NetworkState& net) {
  if (net.layers.size() != net.arch.layers.size()) {
    throw DimensionError("network has " + std::to_string(net.layers.size()) +
                         " parameter blocks for " + std::to_string(net.arch.layers.size()) + " layers");
  }
}

}  // namespace detail

/// Noisy forward pass. `active` draws fresh eps from `rng` (advancing it) for
/// every layer whose spec carries noise, `frozen` replays the eps stored in a
/// previous trace, and `disabled` sets the noise to zero.
inline ForwardResult forward(const NetworkState& net, const Tensor& batch, NoiseMode mode,
                             RngStream& rng) {
  detail::check_params(net);
  const auto outs = layer_output_shapes(net.arch);
  const std::size_t depth = net.arch.layers.size();
  if (mode.kind == NoiseMode::Kind::frozen) {
    if (!mode.trace || mode.trace->layers.size() != depth) {
      throw DimensionError("frozen noise trace does not match the network depth");
    }
  }

  ForwardTrace trace;
  trace.layers.resize(depth);
  Tensor x = detail::as_batch(batch, detail::layer_input_shape(net.arch, outs, 0), "forward");
  const std::size_t n = x.dim(0);

  for (std::size_t t = 0; t < depth; ++t) {
    const LayerSpec& L = net.arch.layers[t];
    const LayerParams& P = net.layers[t];
    LayerTrace& lt = trace.layers[t];
    const Shape in_shape = detail::layer_input_shape(net.arch, outs, t);
    x = detail::as_batch(x, in_shape, "forward");

    Tensor v;
    if (L.kind == LayerKind::dense) {
      v = matmul_nt(x, P.weights);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < L.outputs; ++j) v.at(i, j) += P.bias[j];
    } else {
      const std::size_t C = in_shape[0], H = in_shape[1], W = in_shape[2];
      const std::size_t plane = H * W;
      v = Tensor({n, L.outputs, H, W});
      for (std::size_t s = 0; s < n; ++s) {
        const Tensor img({C, H, W}, std::vector<double>(x.data().begin() + static_cast<std::ptrdiff_t>(s * C * plane),
                                                        x.data().begin() + static_cast<std::ptrdiff_t>((s + 1) * C * plane)));
        const Tensor m = conv2d(img, P.weights);
        double* dst = v.data().data() + s * L.outputs * plane;
        for (std::size_t k = 0; k < L.outputs; ++k)
          for (std::size_t p = 0; p < plane; ++p) dst[k * plane + p] = m[k * plane + p] + P.bias[k];
      }
    }

    if (L.noise.active() && mode.kind != NoiseMode::Kind::disabled) {
      if (mode.kind == NoiseMode::Kind::active) {
        lt.noise = sample_standard_normal(rng, v.shape());
      } else {
        const Tensor& replay = mode.trace->layers[t].noise;
        if (replay.shape() != v.shape()) {
          throw DimensionError("frozen noise for layer " + std::to_string(t) + " has shape " +
                               to_string(replay.shape()) + ", expected " + to_string(v.shape()));
        }
        lt.noise = replay;
      }
      // sigma is indexed by neuron (dense) or feature map (conv).
      const std::size_t units = L.outputs;
      const std::size_t inner = v.size() / (n * units);
      double* pv = v.data().data();
      const double* pe = lt.noise.data().data();
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t u = 0; u < units; ++u) {
          const double sig = P.sigma[u];
          const std::size_t base = (s * units + u) * inner;
          for (std::size_t p = 0; p < inner; ++p) pv[base + p] += sig * pe[base + p];
        }
    }

    Tensor y(v.shape());
    for (std::size_t i = 0; i < v.size(); ++i) y[i] = detail::activate(L.activation, v[i]);

    if (L.kind == LayerKind::conv && L.pool) {
      const std::size_t K = L.outputs, H = v.dim(2), W = v.dim(3);
      const std::size_t Ho = H / 2, Wo = W / 2;
      Tensor pooled({n, K, Ho, Wo});
      lt.pool_argmax.resize(pooled.size());
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t k = 0; k < K; ++k)
          for (std::size_t oy = 0; oy < Ho; ++oy)
            for (std::size_t ox = 0; ox < Wo; ++ox) {
              const std::size_t base = (s * K + k) * H * W;
              std::size_t best = base + 2 * oy * W + 2 * ox;
              for (std::size_t dy = 0; dy < 2; ++dy)
                for (std::size_t dx = 0; dx < 2; ++dx) {
                  const std::size_t idx = base + (2 * oy + dy) * W + 2 * ox + dx;
                  if (y[idx] > y[best]) best = idx;
                }
              const std::size_t o = ((s * K + k) * Ho + oy) * Wo + ox;
              pooled[o] = y[best];
              lt.pool_argmax[o] = static_cast<std::uint32_t>(best);
            }
      y = std::move(pooled);
    }

    lt.input = std::move(x);
    lt.pre = std::move(v);
    x = std::move(y);
  }
  trace.output = x;
  return {std::move(x), std::move(trace)};
}

struct LayerGrads {
  Tensor weights;
  Tensor bias;
  Tensor sigma;  // empty when the layer has no noise
};

/// dL/dtheta and dL/dsigma for every layer, averaged over the batch.
struct GradientBundle {
  std::vector<LayerGrads> layers;
};

struct BackpropResult {
  GradientBundle grads;
  Tensor input_grad;            // per-sample dL/dx, same shape as the layer-0 input
  std::vector<Tensor> residuals;  // delta^(t+1) = dL/dv^(t), per layer
};

struct BackpropRequest {
  bool params = true;
  bool input = false;
  bool residuals = false;
};

/// Residual-error backpropagation. `e` holds the per-sample gradient of the
/// loss with respect to the network output. Parameter gradients are averaged
/// over the batch; the input gradient and residuals are per sample.
inline BackpropResult backpropagate(const NetworkState& net, const ForwardTrace& trace,
                                    const Tensor& e, BackpropRequest want = {}) {
  detail::check_params(net);
  const std::size_t depth = net.arch.layers.size();
  if (trace.layers.size() != depth) {
    throw DimensionError("trace has " + std::to_string(trace.layers.size()) +
                         " layers, network has " + std::to_string(depth));
  }
  if (e.shape() != trace.output.shape()) {
    throw DimensionError("output gradient " + to_string(e.shape()) + " does not match output " +
                         to_string(trace.output.shape()));
  }
  const std::size_t n = e.dim(0);
  const double inv_n = 1.0 / static_cast<double>(n);

  BackpropResult out;
  if (want.params) out.grads.layers.resize(depth);
  if (want.residuals) out.residuals.resize(depth);

  Tensor g = e;  // dL/d(layer output)
  for (std::size_t t = depth; t-- > 0;) {
    const LayerSpec& L = net.arch.layers[t];
    const LayerParams& P = net.layers[t];
    const LayerTrace& lt = trace.layers[t];
    if (lt.pre.empty() || lt.input.empty()) throw DimensionError("incomplete trace at layer " + std::to_string(t));

    Tensor delta(lt.pre.shape());
    if (L.kind == LayerKind::conv && L.pool) {
      if (g.size() != lt.pool_argmax.size()) throw DimensionError("pooled gradient size mismatch");
      for (std::size_t o = 0; o < g.size(); ++o) delta[lt.pool_argmax[o]] += g[o];
    } else {
      if (g.size() != delta.size()) throw DimensionError("gradient size mismatch at layer " + std::to_string(t));
      std::copy(g.data().begin(), g.data().end(), delta.data().begin());
    }
    for (std::size_t i = 0; i < delta.size(); ++i) {
      delta[i] *= detail::activate_derivative(L.activation, lt.pre[i]);
    }

    const std::size_t units = L.outputs;
    const std::size_t inner = delta.size() / (n * units);

    if (want.params) {
      LayerGrads& G = out.grads.layers[t];
      G.bias = Tensor({units});
      for (std::size_t s = 0; s < n; ++s)
        for (std::size_t u = 0; u < units; ++u) {
          const std::size_t base = (s * units + u) * inner;
          double acc = 0.0;
          for (std::size_t p = 0; p < inner; ++p) acc += delta[base + p];
          G.bias[u] += acc;
        }
      G.bias *= inv_n;

      if (!P.sigma.empty()) {
        // dL/dsigma = delta * eps (zero when the pass carried no noise)
        G.sigma = Tensor({units});
        if (!lt.noise.empty()) {
          for (std::size_t s = 0; s < n; ++s)
            for (std::size_t u = 0; u < units; ++u) {
              const std::size_t base = (s * units + u) * inner;
              double acc = 0.0;
              for (std::size_t p = 0; p < inner; ++p) acc += delta[base + p] * lt.noise[base + p];
              G.sigma[u] += acc;
            }
          G.sigma *= inv_n;
        }
      }

      if (L.kind == LayerKind::dense) {
        G.weights = matmul_tn(delta, lt.input);
      } else {
        G.weights = Tensor(P.weights.shape());
        const Shape img = {lt.input.dim(1), lt.input.dim(2), lt.input.dim(3)};
        const Shape map = {units, delta.dim(2), delta.dim(3)};
        const std::size_t isz = shape_size(img), msz = shape_size(map);
        for (std::size_t s = 0; s < n; ++s) {
          const Tensor xi(img, std::vector<double>(lt.input.data().begin() + static_cast<std::ptrdiff_t>(s * isz),
                                                   lt.input.data().begin() + static_cast<std::ptrdiff_t>((s + 1) * isz)));
          const Tensor di(map, std::vector<double>(delta.data().begin() + static_cast<std::ptrdiff_t>(s * msz),
                                                   delta.data().begin() + static_cast<std::ptrdiff_t>((s + 1) * msz)));
          conv2d_accumulate_kernel_grad(xi, di, G.weights);
        }
      }
      G.weights *= inv_n;
    }

    if (t > 0 || want.input) {
      if (L.kind == LayerKind::dense) {
        g = matmul(delta, P.weights).reshaped(lt.input.shape());
      } else {
        const std::size_t C = lt.input.dim(1), H = lt.input.dim(2), W = lt.input.dim(3);
        const std::size_t msz = units * H * W;
        g = Tensor(lt.input.shape());
        for (std::size_t s = 0; s < n; ++s) {
          const Tensor di({units, H, W}, std::vector<double>(delta.data().begin() + static_cast<std::ptrdiff_t>(s * msz),
                                                             delta.data().begin() + static_cast<std::ptrdiff_t>((s + 1) * msz)));
          const Tensor gi = conv2d_backward_input(di, P.weights);
          std::copy(gi.data().begin(), gi.data().end(), g.data().begin() + static_cast<std::ptrdiff_t>(s * C * H * W));
        }
      }
    }
    if (want.residuals) out.residuals[t] = std::move(delta);
  }
  if (want.input) out.input_grad = std::move(g);
  return out;
}

inline GradientBundle backward(const NetworkState& net, const ForwardTrace& trace, const Tensor& e) {
  return backpropagate(net, trace, e, {true, false, false}).grads;
}

/// Per-sample dL/dx for the network input, reshaped like `trace.layers[0].input`.
inline Tensor backward_to_input(const NetworkState& net, const ForwardTrace& trace, const Tensor& e) {
  return backpropagate(net, trace, e, {false, true, false}).input_grad;
}

using Labels = std::vector<int>;

struct LossResult {
  double loss = 0.0;        // mean over the batch
  Tensor output_grad;       // per-sample dl_n/dlogits (softmax - onehot)
  std::vector<double> per_sample;
};

/// Softmax cross-entropy with log-sum-exp stabilisation.
inline LossResult cross_entropy_loss(const Tensor& logits, std::span<const int> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy_loss: logits must be n x classes, got " + to_string(logits.shape()));
  const std::size_t n = logits.dim(0), K = logits.dim(1);
  if (labels.size() != n) {
    throw DimensionError("cross_entropy_loss: " + std::to_string(labels.size()) + " labels for " +
                         std::to_string(n) + " rows");
  }
  LossResult r;
  r.output_grad = Tensor({n, K});
  r.per_sample.resize(n);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= K) {
      throw std::out_of_range("cross_entropy_loss: label " + std::to_string(y) + " outside [0, " +
                              std::to_string(K) + ")");
    }
    double mx = logits.at(i, 0);
    for (std::size_t j = 1; j < K; ++j) mx = std::max(mx, logits.at(i, j));
    double z = 0.0;
    for (std::size_t j = 0; j < K; ++j) z += std::exp(logits.at(i, j) - mx);
    const double lse = mx + std::log(z);
    for (std::size_t j = 0; j < K; ++j) r.output_grad.at(i, j) = std::exp(logits.at(i, j) - lse);
    r.output_grad.at(i, static_cast<std::size_t>(y)) -= 1.0;
    r.per_sample[i] = lse - logits.at(i, static_cast<std::size_t>(y));
    total += r.per_sample[i];
  }
  r.loss = total / static_cast<double>(n);
  return r;
}

/// Row-wise argmax; ties go to the lowest class index.
inline Labels argmax_rows(const Tensor& scores) {
  if (scores.rank() != 2) throw DimensionError("argmax_rows: expected a matrix, got " + to_string(scores.shape()));
  Labels out(scores.dim(0));
  for (std::size_t i = 0; i < scores.dim(0); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < scores.dim(1); ++j)
      if (scores.at(i, j) > scores.at(i, best)) best = j;
    out[i] = static_cast<int>(best);
  }
  return out;
}

inline Labels predict(const NetworkState& net, const Tensor& batch, NoiseMode mode, RngStream& rng) {
  return argmax_rows(forward(net, batch, mode, rng).output);
}

enum class EvalNoise { active, disabled };

inline std::string_view to_string(EvalNoise m) { return m == EvalNoise::active ? "active" : "disabled"; }

/// Predictions in chunks of `chunk` rows. Noisy networks evaluated with
/// EvalNoise::active draw fresh noise for every chunk from `rng`.
inline Labels predict_batched(const NetworkState& net, const Tensor& x, EvalNoise noise, RngStream& rng,
                              std::size_t chunk = 512) {
  Labels out;
  out.reserve(x.dim(0));
  const NoiseMode mode = noise == EvalNoise::active ? NoiseMode::active() : NoiseMode::disabled();
  for (std::size_t b = 0; b < x.dim(0); b += chunk) {
    const Labels part = predict(net, x.slice_rows(b, std::min(x.dim(0), b + chunk)), mode, rng);
    out.insert(out.end(), part.begin(), part.end());
  }
  return out;
}

inline double accuracy_of(const Labels& predicted, std::span<const int> truth) {
  if (predicted.size() != truth.size() || truth.empty()) {
    throw std::invalid_argument("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                                std::to_string(truth.size()) + " labels");
  }
  std::size_t hit = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) hit += predicted[i] == truth[i];
  return static_cast<double>(hit) / static_cast<double>(truth.size());
}

inline double accuracy(const NetworkState& net, const Tensor& x, std::span<const int> labels, EvalNoise noise,
                       RngStream& rng) {
  return accuracy_of(predict_batched(net, x, noise, rng), labels);
}

/// Gradient of the class-`c` output score with respect to the input, per
/// sample. Accepts a single image (returned in its own shape) or a batch.
inline Tensor input_gradient(const NetworkState& net, const Tensor& x, std::size_t c, NoiseMode mode,
                             RngStream& rng) {
  if (c >= net.num_classes()) {
    throw std::out_of_range("input_gradient: class " + std::to_string(c) + " outside [0, " +
                            std::to_string(net.num_classes()) + ")");
  }
  const bool single = x.size() == net.arch.input.size();
  Tensor batch = single ? x.reshaped({1, x.size()}) : x;
  ForwardResult fr = forward(net, batch, mode, rng);
  Tensor e(fr.output.shape());
  for (std::size_t i = 0; i < e.dim(0); ++i) e.at(i, c) = 1.0;
  Tensor g = backward_to_input(net, fr.trace, e);
  return g.reshaped(x.shape());
}

}  // namespace noiseopt
