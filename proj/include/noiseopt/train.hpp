#pragma once

// Joint weight + noise-level training. Per minibatch: noisy forward pass,
// cross-entropy, one backward pass giving both the weight and the sigma
// gradients, a weight-optimizer step, then an Adam step on the trainable
// noise levels followed by |.| projection.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "noiseopt/checkpoint.hpp"
#include "noiseopt/config.hpp"
#include "noiseopt/data.hpp"
#include "noiseopt/network.hpp"
#include "noiseopt/optim.hpp"
#include "noiseopt/presets.hpp"
#include "noiseopt/report.hpp"
#include "noiseopt/rng.hpp"

namespace noiseopt {

class NonFiniteLossError : public std::runtime_error {
 public:
  NonFiniteLossError(std::uint32_t epoch, std::size_t batch)
      : std::runtime_error("non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(batch)),
        epoch_(epoch),
        batch_(batch) {}
  std::uint32_t epoch() const noexcept { return epoch_; }
  std::size_t batch() const noexcept { return batch_; }

 private:
  std::uint32_t epoch_;
  std::size_t batch_;
};

struct TrainOptions {
  std::optional<std::filesystem::path> checkpoint_path;  // rewritten after every epoch
  std::optional<Checkpoint> resume;                      // continue from a saved trainer state
  std::function<void(const EpochRecord&)> on_epoch;
  std::function<void(const Checkpoint&)> on_checkpoint;  // called after every epoch
};

struct TrainResult {
  Checkpoint checkpoint;
  MetricsReport report;  // curve only
};

/// Loads and splits the configured dataset.
inline DatasetSplits prepare_data(const RunConfig& cfg) {
  return split(load_configured_dataset(cfg.data), cfg.data.ratio, cfg.data.split_seed);
}

inline Architecture architecture_for(const RunConfig& cfg, const Dataset& train) {
  if (cfg.model.layers.empty()) return build_architecture(cfg.model, train.input_shape(), train.class_count);
  const InputShape in = train.input_shape();
  const Architecture a = parse_architecture(
      std::to_string(in.channels) + "x" + std::to_string(in.height) + "x" + std::to_string(in.width), cfg.model.layers);
  if (a.layers.back().outputs != train.class_count) {
    throw ConfigError("model.layers: last layer has " + std::to_string(a.layers.back().outputs) +
                      " outputs but the dataset has " + std::to_string(train.class_count) + " classes");
  }
  return a;
}

namespace detail {

inline TrainerState fresh_trainer_state(const RunConfig& cfg, const NetworkState& net) {
  TrainerState t;
  t.kind = cfg.train.optimizer;
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const LayerParams& p = net.layers[i];
    if (t.kind == WeightOptimizer::adam) {
      const AdamConfig ac{cfg.train.lr, 0.9, 0.999, 1e-8, cfg.train.weight_decay};
      t.adam.emplace_back(p.weights.shape(), ac);
      t.adam.emplace_back(p.bias.shape(), ac);
    } else {
      const SgdConfig sc{cfg.train.lr, cfg.train.momentum, cfg.train.weight_decay};
      t.sgd.push_back({sc, Tensor(p.weights.shape())});
      t.sgd.push_back({sc, Tensor(p.bias.shape())});
    }
    // Noise levels never see weight decay.
    const AdamConfig sigma_cfg{cfg.train.sigma_lr, 0.9, 0.999, 1e-8, 0.0};
    if (net.arch.layers[i].noise.kind == NoiseKind::trainable) {
      t.sigma.emplace_back(p.sigma.shape(), sigma_cfg);
    } else {
      t.sigma.emplace_back();
      t.sigma.back().config = sigma_cfg;
    }
  }
  return t;
}

inline void shuffle_rows(std::vector<std::size_t>& rows, RngStream rng) {
  for (std::size_t i = rows.size(); i > 1; --i) std::swap(rows[i - 1], rows[rng.below(i)]);
}

// Mean cross-entropy over a dataset in chunks, noise drawn like in training.
inline double dataset_loss(const NetworkState& net, const Dataset& ds, NoiseMode mode, RngStream rng,
                           std::size_t chunk = 512) {
  double total = 0.0;
  for (std::size_t b = 0; b < ds.size(); b += chunk) {
    const std::size_t e = std::min(ds.size(), b + chunk);
    const ForwardResult fr = forward(net, ds.images.slice_rows(b, e), mode, rng);
    const LossResult lr = cross_entropy_loss(
        fr.output, std::span<const int>(ds.labels).subspan(b, e - b));
    total += lr.loss * static_cast<double>(e - b);
  }
  return total / static_cast<double>(ds.size());
}

}  // namespace detail

/// Runs the configured number of epochs. A 0-epoch run returns the freshly
/// initialised network and an empty curve.
inline TrainResult train(const RunConfig& cfg, const DatasetSplits& data, const TrainOptions& opt = {}) {
  validate(cfg);
  const Dataset& tr = data.train;
  if (tr.size() == 0) throw std::invalid_argument("train: empty training set");

  TrainResult result;
  Checkpoint& ck = result.checkpoint;
  if (opt.resume) {
    ck = *opt.resume;
    if (!ck.trainer) throw std::invalid_argument("train: resume checkpoint has no trainer state");
    if (!(ck.net.arch.input == tr.input_shape())) throw std::invalid_argument("train: resume checkpoint input shape differs");
  } else {
    ck.preset = cfg.model.layers.empty() ? cfg.model.preset : "custom";
    ck.net = init_network(architecture_for(cfg, tr), cfg.train.seed);
    ck.trainer = detail::fresh_trainer_state(cfg, ck.net);
  }
  NetworkState& net = ck.net;
  TrainerState& ts = *ck.trainer;
  const std::size_t depth = net.layers.size();
  const NoiseMode train_mode = net.has_noise() ? NoiseMode::active() : NoiseMode::disabled();

  const RngStream shuffle_base(cfg.train.seed, stream_id_of("shuffle"));
  const RngStream noise_base(cfg.train.seed, stream_id_of("train-noise"));
  const RngStream val_base(cfg.train.seed, stream_id_of("val-noise"));
  const RngStream test_base(cfg.train.seed, stream_id_of("test-noise"));

  std::vector<std::size_t> order(tr.size());
  for (std::uint32_t epoch = ts.epochs_done; epoch < cfg.train.epochs; ++epoch) {
    const double lr = cfg.train.lr * cfg.train.schedule.scale(epoch);
    for (auto& s : ts.adam) s.config.lr = lr;
    for (auto& s : ts.sgd) s.config.lr = lr;

    std::iota(order.begin(), order.end(), std::size_t{0});
    detail::shuffle_rows(order, shuffle_base.derive(epoch));
    const RngStream epoch_noise = noise_base.derive(epoch);

    double loss_sum = 0.0;
    std::size_t batch_index = 0;
    for (std::size_t b = 0; b < order.size(); b += cfg.train.batch_size, ++batch_index) {
      const std::size_t e = std::min(order.size(), b + cfg.train.batch_size);
      const std::span<const std::size_t> rows(order.data() + b, e - b);
      const Tensor x = tr.images.gather_rows(rows);
      Labels y;
      y.reserve(rows.size());
      for (std::size_t r : rows) y.push_back(tr.labels[r]);

      RngStream noise = epoch_noise.derive(batch_index);
      const ForwardResult fr = forward(net, x, train_mode, noise);
      const LossResult lr_ = cross_entropy_loss(fr.output, y);
      if (!std::isfinite(lr_.loss)) throw NonFiniteLossError(epoch + 1, batch_index);
      loss_sum += lr_.loss * static_cast<double>(rows.size());

      const GradientBundle g = backward(net, fr.trace, lr_.output_grad);
      for (std::size_t t = 0; t < depth; ++t) {
        LayerParams& p = net.layers[t];
        if (ts.kind == WeightOptimizer::adam) {
          adam_step(ts.adam[2 * t], p.weights, g.layers[t].weights);
          adam_step(ts.adam[2 * t + 1], p.bias, g.layers[t].bias);
        } else {
          sgd_step(ts.sgd[2 * t], p.weights, g.layers[t].weights);
          sgd_step(ts.sgd[2 * t + 1], p.bias, g.layers[t].bias);
        }
        if (net.arch.layers[t].noise.kind == NoiseKind::trainable) {
          adam_step(ts.sigma[t], p.sigma, g.layers[t].sigma, Projection::abs);
        }
      }
      ++ts.steps;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.train_loss = loss_sum / static_cast<double>(tr.size());
    rec.val_loss = data.val.size() ? detail::dataset_loss(net, data.val, train_mode, val_base.derive(epoch))
                                   : std::nan("");
    if (data.test.size()) {
      RngStream test_rng = test_base.derive(epoch);
      rec.test_accuracy = accuracy(net, data.test.images, data.test.labels, cfg.train.eval_noise, test_rng);
    } else {
      rec.test_accuracy = std::nan("");
    }
    ts.epochs_done = epoch + 1;
    result.report.curve.push_back(rec);
    if (opt.checkpoint_path) save_checkpoint(ck, *opt.checkpoint_path);
    if (opt.on_checkpoint) opt.on_checkpoint(ck);
    if (opt.on_epoch) opt.on_epoch(rec);
  }
  return result;
}

inline TrainResult train(const RunConfig& cfg, const TrainOptions& opt = {}) {
  return train(cfg, prepare_data(cfg), opt);
}

}  // namespace noiseopt
