#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

#include "noiseopt/tensor.hpp"

namespace noiseopt {

class NonFiniteGradientError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

enum class Projection { none, abs };

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // L2 penalty folded into the gradient

  friend bool operator==(const AdamConfig&, const AdamConfig&) = default;
};

/// Adam moments for one parameter tensor.
///
/// The bias-corrected moments are kept directly and updated with
///   m_hat <- m_hat + (g - m_hat) * (1 - beta1) / (1 - beta1^N)
/// which equals m / (1 - beta1^N) for the usual raw moment m, but makes the
/// first step reproduce m_hat == g and v_hat == g*g exactly.
struct AdamState {
  AdamConfig config;
  Tensor m_hat;
  Tensor v_hat;
  std::uint64_t step = 0;

  AdamState() = default;
  explicit AdamState(const Shape& shape, AdamConfig cfg = {})
      : config(cfg), m_hat(shape), v_hat(shape) {}

  /// Raw (uncorrected) first moment.
  Tensor first_moment() const {
    return m_hat * (1.0 - std::pow(config.beta1, static_cast<double>(step)));
  }
  /// Raw (uncorrected) second moment.
  Tensor second_moment() const {
    return v_hat * (1.0 - std::pow(config.beta2, static_cast<double>(step)));
  }

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

namespace detail {

inline void check_step_inputs(const Tensor& params, const Tensor& grads, const char* op) {
  if (params.shape() != grads.shape()) {
    throw DimensionError(std::string(op) + ": parameter shape " + to_string(params.shape()) +
                         " vs gradient shape " + to_string(grads.shape()));
  }
  for (std::size_t i = 0; i < grads.size(); ++i) {
    if (!std::isfinite(grads[i])) {
      throw NonFiniteGradientError(std::string(op) + ": non-finite gradient at index " + std::to_string(i));
    }
  }
}

}  // namespace detail

/// One Adam step on `params`. With Projection::abs the result is replaced
/// by its absolute value, which keeps noise levels non-negative.
inline void adam_step(AdamState& state, Tensor& params, const Tensor& grads,
                      Projection project = Projection::none) {
  detail::check_step_inputs(params, grads, "adam_step");
  if (state.m_hat.empty()) {
    state.m_hat = Tensor(params.shape());
    state.v_hat = Tensor(params.shape());
  }
  if (state.m_hat.shape() != params.shape()) {
    throw DimensionError("adam_step: optimizer state shape " + to_string(state.m_hat.shape()) +
                         " vs parameter shape " + to_string(params.shape()));
  }
  const AdamConfig& c = state.config;
  ++state.step;
  const double N = static_cast<double>(state.step);
  const double r1 = (1.0 - c.beta1) / (1.0 - std::pow(c.beta1, N));
  const double r2 = (1.0 - c.beta2) / (1.0 - std::pow(c.beta2, N));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + c.weight_decay * params[i];
    double& m = state.m_hat[i];
    double& v = state.v_hat[i];
    m = std::lerp(m, g, r1);
    v = std::lerp(v, g * g, r2);
    double p = params[i] - c.lr * m / (std::sqrt(v) + c.eps);
    if (project == Projection::abs) p = std::abs(p);
    params[i] = p;
  }
}

struct SgdConfig {
  double lr = 1e-2;
  double momentum = 0.0;
  double weight_decay = 0.0;

  friend bool operator==(const SgdConfig&, const SgdConfig&) = default;
};

struct SgdState {
  SgdConfig config;
  Tensor velocity;

  friend bool operator==(const SgdState&, const SgdState&) = default;
};

/// Momentum SGD: buf <- momentum * buf + (g + wd * p);  p <- p - lr * buf.
inline void sgd_step(SgdState& state, Tensor& params, const Tensor& grads) {
  detail::check_step_inputs(params, grads, "sgd_step");
  if (state.velocity.empty()) state.velocity = Tensor(params.shape());
  const SgdConfig& c = state.config;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grads[i] + c.weight_decay * params[i];
    state.velocity[i] = c.momentum * state.velocity[i] + g;
    params[i] -= c.lr * state.velocity[i];
  }
}

/// lr(epoch) = initial * factor^floor(epoch / every); every == 0 means constant.
struct StepDecay {
  double factor = 1.0;
  std::uint32_t every = 0;

  double scale(std::uint32_t epoch) const {
    if (every == 0) return 1.0;
    return std::pow(factor, static_cast<double>(epoch / every));
  }
  friend bool operator==(const StepDecay&, const StepDecay&) = default;
};

}  // namespace noiseopt
