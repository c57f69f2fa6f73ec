#pragma once

// Adversarial example generation. The attack loops are templates over a
// loss oracle: any callable mapping a batch x to per-sample losses and
// per-sample input gradients (LossGradient). NetworkLoss adapts a network
// with cross-entropy; tests plug in closed-form oracles.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "noiseopt/network.hpp"
#include "noiseopt/rng.hpp"
#include "noiseopt/tensor.hpp"

namespace noiseopt {

enum class AttackKind { fgsm, pgd, lbfgs };

inline std::string_view to_string(AttackKind k) {
  switch (k) {
    case AttackKind::fgsm: return "fgsm";
    case AttackKind::pgd: return "pgd";
    case AttackKind::lbfgs: return "lbfgs";
  }
  return "?";
}

inline AttackKind parse_attack_kind(std::string_view s) {
  if (s == "fgsm") return AttackKind::fgsm;
  if (s == "pgd") return AttackKind::pgd;
  if (s == "lbfgs" || s == "l-bfgs") return AttackKind::lbfgs;
  throw std::invalid_argument("unknown attack '" + std::string(s) + "'");
}

/// How the victim's own noise behaves while the attacker computes gradients.
enum class VictimNoise {
  frozen_draw,  // one eps realisation drawn per attack run, reused every step
  disabled,
};

struct AttackConfig {
  AttackKind kind = AttackKind::fgsm;
  double step = 0.1;             // alpha
  double budget = 0.0;           // l-inf radius (pgd)
  std::uint32_t iterations = 1;  // pgd / lbfgs
  double lbfgs_c = 0.01;         // l2 proximity weight
  std::uint32_t lbfgs_history = 10;
  bool random_start = true;      // pgd
  double box_lo = 0.0, box_hi = 1.0;
  std::uint64_t seed = 0;
  VictimNoise victim_noise = VictimNoise::frozen_draw;

  void validate() const {
    if (!(step >= 0.0) || !std::isfinite(step)) throw std::invalid_argument("attack step must be finite and >= 0");
    if (kind == AttackKind::pgd) {
      if (!(budget > 0.0)) throw std::invalid_argument("pgd budget must be > 0");
      if (iterations < 1) throw std::invalid_argument("pgd needs at least one iteration");
    }
    if (kind == AttackKind::lbfgs && lbfgs_history < 1) throw std::invalid_argument("lbfgs history must be >= 1");
    if (!(box_lo < box_hi)) throw std::invalid_argument("attack box must be non-empty");
  }

  std::string describe() const {
    std::ostringstream o;
    o.precision(6);
    o << "alpha=" << step;
    if (kind == AttackKind::pgd) o << ";eps=" << budget << ";N=" << iterations;
    if (kind == AttackKind::lbfgs) o << ";N=" << iterations << ";c=" << lbfgs_c << ";m=" << lbfgs_history;
    return o.str();
  }

  static AttackConfig fgsm(double alpha) { return {AttackKind::fgsm, alpha}; }
  static AttackConfig pgd(double alpha, double eps, std::uint32_t n) {
    AttackConfig c{AttackKind::pgd, alpha, eps, n};
    return c;
  }
  static AttackConfig lbfgs(double alpha, std::uint32_t n) {
    AttackConfig c{AttackKind::lbfgs, alpha, 0.0, n};
    return c;
  }
};

/// Attack settings per dataset.
struct AttackPreset {
  AttackConfig fgsm, lbfgs, pgd;
};

inline AttackPreset mnist_attacks() {
  return {AttackConfig::fgsm(0.1), AttackConfig::lbfgs(0.5, 10), AttackConfig::pgd(5.0 / 255, 25.0 / 255, 10)};
}
// The CIFAR FGSM step is not given separately; it inherits the MNIST value.
inline AttackPreset cifar_attacks() {
  return {AttackConfig::fgsm(0.1), AttackConfig::lbfgs(5e-2, 20), AttackConfig::pgd(2.0 / 255, 8.0 / 255, 5)};
}
inline AttackPreset tiny_imagenet_attacks() {
  return {AttackConfig::fgsm(2.0 / 255), AttackConfig::lbfgs(5e-2, 10), AttackConfig::pgd(2.0 / 255, 5.0 / 255, 3)};
}

struct LossGradient {
  std::vector<double> loss;  // per sample
  Tensor grad;               // per-sample d loss / d x, shaped like x
};

/// Cross-entropy loss oracle for a victim network. With
/// VictimNoise::frozen_draw the first call samples eps and every later call
/// replays it.
class NetworkLoss {
 public:
  NetworkLoss(const NetworkState& net, Labels labels, VictimNoise noise, RngStream rng)
      : net_(net), labels_(std::move(labels)), noise_(noise), rng_(rng) {}

  LossGradient operator()(const Tensor& x) {
    NoiseMode mode = NoiseMode::disabled();
    if (noise_ == VictimNoise::frozen_draw && net_.has_noise()) {
      mode = frozen_ ? NoiseMode::frozen(*frozen_) : NoiseMode::active();
    }
    ForwardResult fr = forward(net_, x, mode, rng_);
    LossResult lr = cross_entropy_loss(fr.output, labels_);
    Tensor g = backward_to_input(net_, fr.trace, lr.output_grad).reshaped(x.shape());
    if (!frozen_ && mode.kind == NoiseMode::Kind::active) frozen_ = std::move(fr.trace);
    return {std::move(lr.per_sample), std::move(g)};
  }

 private:
  const NetworkState& net_;
  Labels labels_;
  VictimNoise noise_;
  RngStream rng_;
  std::optional<ForwardTrace> frozen_;
};

namespace detail {

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace detail

/// x' = clip(x + alpha * sign(grad)).
template <class Oracle>
Tensor fgsm(Oracle&& oracle, const Tensor& x, const AttackConfig& cfg) {
  cfg.validate();
  if (cfg.step == 0.0) return x;
  const LossGradient lg = oracle(x);
  Tensor adv = x;
  for (std::size_t i = 0; i < adv.size(); ++i) {
    adv[i] = std::clamp(x[i] + cfg.step * detail::sign(lg.grad[i]), cfg.box_lo, cfg.box_hi);
  }
  return adv;
}

/// Projected sign-gradient ascent in the l-inf ball of radius cfg.budget
/// around x, intersected with the pixel box. `on_iterate` sees every iterate
/// after projection (including the start point).
template <class Oracle>
Tensor pgd(Oracle&& oracle, const Tensor& x, const AttackConfig& cfg,
           const std::function<void(const Tensor&)>& on_iterate = {}) {
  cfg.validate();
  const double eps = cfg.budget;
  auto project = [&](Tensor& t) {
    for (std::size_t i = 0; i < t.size(); ++i) {
      const double v = std::clamp(t[i], x[i] - eps, x[i] + eps);
      t[i] = std::clamp(v, cfg.box_lo, cfg.box_hi);
    }
  };
  Tensor adv = x;
  if (cfg.random_start) {
    RngStream rng(cfg.seed, stream_id_of("pgd-start"));
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += rng.uniform(-eps, eps);
  }
  project(adv);
  if (on_iterate) on_iterate(adv);
  for (std::uint32_t it = 0; it < cfg.iterations; ++it) {
    const LossGradient lg = oracle(adv);
    for (std::size_t i = 0; i < adv.size(); ++i) adv[i] += cfg.step * detail::sign(lg.grad[i]);
    project(adv);
    if (on_iterate) on_iterate(adv);
  }
  return adv;
}

struct LbfgsOptions {
  double step = 1.0;
  std::uint32_t iterations = 10;
  std::uint32_t history = 10;
  double box_lo = -std::numeric_limits<double>::infinity();
  double box_hi = std::numeric_limits<double>::infinity();
};

/// Per-sample limited-memory BFGS minimisation with a fixed step length and
/// box clipping. Each row of x is an independent problem with its own
/// curvature history; `objective` returns per-row values and gradients.
/// Performs exactly `iterations` gradient evaluations.
template <class Objective>
Tensor lbfgs_minimize(Objective&& objective, Tensor x, const LbfgsOptions& opt,
                      const std::function<void(const Tensor&)>& on_iterate = {}) {
  if (opt.iterations == 0) return x;
  const std::size_t n = x.dim(0);
  const std::size_t d = x.size() / n;
  struct Pair {
    std::vector<double> s, y;
    double rho;
  };
  std::vector<std::deque<Pair>> hist(n);
  auto dot = [d](const double* a, const double* b) {
    double acc = 0.0;
    for (std::size_t j = 0; j < d; ++j) acc += a[j] * b[j];
    return acc;
  };

  LossGradient cur = objective(x);
  std::vector<double> q(d), alpha(opt.history);
  for (std::uint32_t k = 0; k < opt.iterations; ++k) {
    Tensor next = x;
    for (std::size_t i = 0; i < n; ++i) {
      const double* g = cur.grad.data().data() + i * d;
      std::copy(g, g + d, q.begin());
      const auto& H = hist[i];
      for (std::size_t h = H.size(); h-- > 0;) {
        alpha[h] = H[h].rho * dot(H[h].s.data(), q.data());
        for (std::size_t j = 0; j < d; ++j) q[j] -= alpha[h] * H[h].y[j];
      }
      double gamma = 1.0;
      if (!H.empty()) gamma = dot(H.back().s.data(), H.back().y.data()) / dot(H.back().y.data(), H.back().y.data());
      for (double& v : q) v *= gamma;
      for (std::size_t h = 0; h < H.size(); ++h) {
        const double beta = H[h].rho * dot(H[h].y.data(), q.data());
        for (std::size_t j = 0; j < d; ++j) q[j] += H[h].s[j] * (alpha[h] - beta);
      }
      double* xn = next.data().data() + i * d;
      for (std::size_t j = 0; j < d; ++j) xn[j] = std::clamp(xn[j] - opt.step * q[j], opt.box_lo, opt.box_hi);
    }
    if (on_iterate) on_iterate(next);
    if (k + 1 == opt.iterations) return next;

    LossGradient nxt = objective(next);
    for (std::size_t i = 0; i < n; ++i) {
      Pair p{std::vector<double>(d), std::vector<double>(d), 0.0};
      for (std::size_t j = 0; j < d; ++j) {
        p.s[j] = next[i * d + j] - x[i * d + j];
        p.y[j] = nxt.grad[i * d + j] - cur.grad[i * d + j];
      }
      const double sy = dot(p.s.data(), p.y.data());
      // Skip pairs without positive curvature (non-convex regions, clipping).
      if (sy > 1e-12 * std::sqrt(dot(p.s.data(), p.s.data()) * dot(p.y.data(), p.y.data())) && sy > 0.0) {
        p.rho = 1.0 / sy;
        hist[i].push_back(std::move(p));
        if (hist[i].size() > opt.history) hist[i].pop_front();
      }
    }
    x = std::move(next);
    cur = std::move(nxt);
  }
  return x;
}

/// Untargeted L-BFGS attack: minimise -loss(x') + c * ||x' - x||^2 over the
/// pixel box.
template <class Oracle>
Tensor lbfgs_attack(Oracle&& oracle, const Tensor& x, const AttackConfig& cfg) {
  cfg.validate();
  auto objective = [&](const Tensor& z) {
    LossGradient lg = oracle(z);
    const std::size_t n = z.dim(0), d = z.size() / n;
    for (std::size_t i = 0; i < n; ++i) {
      double pen = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        const double diff = z[i * d + j] - x[i * d + j];
        pen += diff * diff;
        lg.grad[i * d + j] = -lg.grad[i * d + j] + 2.0 * cfg.lbfgs_c * diff;
      }
      lg.loss[i] = -lg.loss[i] + cfg.lbfgs_c * pen;
    }
    return lg;
  };
  return lbfgs_minimize(objective, x, {cfg.step, cfg.iterations, cfg.lbfgs_history, cfg.box_lo, cfg.box_hi});
}

template <class Oracle>
Tensor run_attack(Oracle&& oracle, const Tensor& x, const AttackConfig& cfg) {
  switch (cfg.kind) {
    case AttackKind::fgsm: return fgsm(oracle, x, cfg);
    case AttackKind::pgd: return pgd(oracle, x, cfg);
    case AttackKind::lbfgs: return lbfgs_attack(oracle, x, cfg);
  }
  return x;
}

/// White-box attack against `net`. Works in chunks of `chunk` rows; each
/// chunk is a separate attack run with its own victim noise draw.
inline Tensor attack_network(const NetworkState& net, const Tensor& x, const Labels& y, const AttackConfig& cfg,
                             std::size_t chunk = 256) {
  if (x.dim(0) != y.size()) throw DimensionError("attack: batch/label count mismatch");
  Tensor out(x.shape());
  const std::size_t per = x.size() / x.dim(0);
  RngStream victim_rng(cfg.seed, stream_id_of("victim-noise"));
  for (std::size_t b = 0, c = 0; b < x.dim(0); b += chunk, ++c) {
    const std::size_t e = std::min(x.dim(0), b + chunk);
    const Tensor xs = x.slice_rows(b, e);
    NetworkLoss oracle(net, Labels(y.begin() + static_cast<std::ptrdiff_t>(b), y.begin() + static_cast<std::ptrdiff_t>(e)),
                       cfg.victim_noise, victim_rng.derive(c));
    AttackConfig local = cfg;
    local.seed = RngStream(cfg.seed, c).next_u64();
    const Tensor adv = run_attack(oracle, xs, local);
    std::copy(adv.data().begin(), adv.data().end(), out.data().begin() + static_cast<std::ptrdiff_t>(b * per));
  }
  return out;
}

inline Tensor fgsm(const NetworkState& net, const Tensor& x, const Labels& y, AttackConfig cfg) {
  cfg.kind = AttackKind::fgsm;
  return attack_network(net, x, y, cfg);
}

inline Tensor pgd(const NetworkState& net, const Tensor& x, const Labels& y, AttackConfig cfg) {
  cfg.kind = AttackKind::pgd;
  return attack_network(net, x, y, cfg);
}

inline Tensor lbfgs_attack(const NetworkState& net, const Tensor& x, const Labels& y, AttackConfig cfg) {
  cfg.kind = AttackKind::lbfgs;
  return attack_network(net, x, y, cfg);
}

struct TransferResult {
  Tensor adversarial;
  double victim_accuracy = 0.0;
};

/// Crafts examples on `surrogate` and scores them on `victim`.
inline TransferResult transfer_attack(const NetworkState& surrogate, const NetworkState& victim, const Tensor& x,
                                      const Labels& y, const AttackConfig& cfg, EvalNoise eval_noise,
                                      RngStream eval_rng) {
  if (!(surrogate.arch.input == victim.arch.input)) {
    throw DimensionError("transfer_attack: surrogate and victim take different input shapes");
  }
  TransferResult r;
  r.adversarial = attack_network(surrogate, x, y, cfg);
  r.victim_accuracy = accuracy(victim, r.adversarial, y, eval_noise, eval_rng);
  return r;
}

}  // namespace noiseopt
