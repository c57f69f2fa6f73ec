#pragma once

// Finite-difference check of the backward pass. The noise draw is sampled
// once and replayed for every perturbed evaluation, so the central
// difference measures the derivative of the same realised loss that the
// analytic gradient describes. Every weight, bias and sigma coordinate is
// checked.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "noiseopt/network.hpp"
#include "noiseopt/presets.hpp"
#include "noiseopt/rng.hpp"

namespace noiseopt {

enum class GradcheckLoss {
  cross_entropy,  // mean softmax cross-entropy against random labels
  output_sum,     // mean over the batch of the summed outputs
};

struct GradcheckOptions {
  double h = 1e-5;
  double rel_tol = 1e-4;
  double abs_floor = 1e-7;
  std::size_t batch = 3;
  GradcheckLoss loss = GradcheckLoss::cross_entropy;
  bool randomize_sigma = true;  // sigma ~ U(0.2, 1) on noisy layers
};

/// One row per parameter tensor.
struct GradcheckRow {
  std::size_t layer = 0;
  std::string param;  // weights | bias | sigma
  std::size_t coordinates = 0;
  std::size_t failures = 0;
  std::size_t worst_index = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
  double max_error = 0.0;
  bool passed = true;
};

struct GradcheckReport {
  std::vector<GradcheckRow> rows;
  double max_error = 0.0;
  std::size_t coordinates = 0;
  bool passed = true;

  std::string summary() const {
    std::ostringstream o;
    o.precision(3);
    o << (passed ? "PASS" : "FAIL") << " coordinates=" << coordinates << " max_rel_error=" << std::scientific
      << max_error;
    return o.str();
  }
};

using GradientFn = std::function<GradientBundle(const NetworkState&, const ForwardTrace&, const Tensor&)>;

/// Error measure: |a - n| / max(|a|, |n|, abs_floor / rel_tol). A coordinate
/// passes when this is <= rel_tol, i.e. it is within the relative tolerance
/// or within the absolute floor.
inline double gradcheck_error(double analytic, double numeric, const GradcheckOptions& opt) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), opt.abs_floor / opt.rel_tol});
  return std::abs(analytic - numeric) / scale;
}

struct GradcheckProblem {
  NetworkState net;
  Tensor x;
  Labels labels;
  ForwardTrace noise;  // the frozen draw
};

/// Random inputs, labels and (optionally) sigma values for `arch`.
inline GradcheckProblem make_gradcheck_problem(const Architecture& arch, std::uint64_t seed,
                                               const GradcheckOptions& opt = {}) {
  if (opt.batch == 0) throw std::invalid_argument("gradcheck: batch must be positive");
  GradcheckProblem p;
  p.net = init_network(arch, seed);
  RngStream rng(seed, stream_id_of("gradcheck"));
  RngStream param_rng = rng.derive(0);
  for (std::size_t t = 0; t < arch.layers.size(); ++t) {
    // Non-zero biases so that no unit sits at a symmetric point.
    for (double& b : p.net.layers[t].bias.data()) b = param_rng.uniform(-0.1, 0.1);
    if (opt.randomize_sigma)
      for (double& s : p.net.layers[t].sigma.data()) s = param_rng.uniform(0.2, 1.0);
  }
  RngStream data_rng = rng.derive(1);
  p.x = sample_uniform(data_rng, {opt.batch, arch.input.channels, arch.input.height, arch.input.width}, 0.0, 1.0);
  for (std::size_t i = 0; i < opt.batch; ++i)
    p.labels.push_back(static_cast<int>(data_rng.below(p.net.num_classes())));
  RngStream noise_rng = rng.derive(2);
  p.noise = forward(p.net, p.x, NoiseMode::active(), noise_rng).trace;
  return p;
}

namespace detail {

struct LossAndGrad {
  double loss;
  Tensor output_grad;
};

inline LossAndGrad gradcheck_loss(const Tensor& out, const Labels& labels, GradcheckLoss kind) {
  if (kind == GradcheckLoss::cross_entropy) {
    LossResult r = cross_entropy_loss(out, labels);
    return {r.loss, std::move(r.output_grad)};
  }
  const double n = static_cast<double>(out.dim(0));
  double s = 0.0;
  for (double v : out.data()) s += v;
  return {s / n, Tensor(out.shape(), 1.0)};
}

}  // namespace detail

inline GradcheckReport gradcheck(const GradcheckProblem& problem, const GradcheckOptions& opt = {},
                                 const GradientFn& grad_fn = backward) {
  NetworkState net = problem.net;
  RngStream unused(0, 0);
  const NoiseMode frozen = NoiseMode::frozen(problem.noise);

  const ForwardResult fr = forward(net, problem.x, frozen, unused);
  const auto base = detail::gradcheck_loss(fr.output, problem.labels, opt.loss);
  const GradientBundle g = grad_fn(net, fr.trace, base.output_grad);
  if (g.layers.size() != net.layers.size()) throw DimensionError("gradcheck: gradient bundle depth mismatch");

  auto loss_at = [&]() { return detail::gradcheck_loss(forward(net, problem.x, frozen, unused).output, problem.labels, opt.loss).loss; };

  GradcheckReport report;
  for (std::size_t t = 0; t < net.layers.size(); ++t) {
    struct Item {
      const char* name;
      Tensor* param;
      const Tensor* grad;
    };
    const Item items[] = {{"weights", &net.layers[t].weights, &g.layers[t].weights},
                          {"bias", &net.layers[t].bias, &g.layers[t].bias},
                          {"sigma", &net.layers[t].sigma, &g.layers[t].sigma}};
    for (const Item& it : items) {
      if (it.param->empty()) continue;
      if (it.grad->shape() != it.param->shape()) {
        throw DimensionError("gradcheck: layer " + std::to_string(t) + " " + it.name + " gradient shape " +
                             to_string(it.grad->shape()) + " vs parameter " + to_string(it.param->shape()));
      }
      GradcheckRow row;
      row.layer = t;
      row.param = it.name;
      for (std::size_t i = 0; i < it.param->size(); ++i) {
        double& p = (*it.param)[i];
        const double saved = p;
        p = saved + opt.h;
        const double up = loss_at();
        p = saved - opt.h;
        const double down = loss_at();
        p = saved;
        const double numeric = (up - down) / (2.0 * opt.h);
        const double analytic = (*it.grad)[i];
        const double err = gradcheck_error(analytic, numeric, opt);
        ++row.coordinates;
        if (!(err <= opt.rel_tol)) ++row.failures;
        if (err > row.max_error || std::isnan(err)) {
          row.max_error = std::isnan(err) ? INFINITY : err;
          row.worst_index = i;
          row.worst_analytic = analytic;
          row.worst_numeric = numeric;
        }
      }
      row.passed = row.failures == 0;
      report.coordinates += row.coordinates;
      report.max_error = std::max(report.max_error, row.max_error);
      report.passed = report.passed && row.passed;
      report.rows.push_back(row);
    }
  }
  return report;
}

inline GradcheckReport gradcheck(const Architecture& arch, std::uint64_t seed, const GradcheckOptions& opt = {},
                                 const GradientFn& grad_fn = backward) {
  if (arch.layers.size() > 4) throw std::invalid_argument("gradcheck: at most 4 layers are supported");
  return gradcheck(make_gradcheck_problem(arch, seed, opt), opt, grad_fn);
}

}  // namespace noiseopt
