#pragma once

// SmoothGrad saliency: the squared input gradient of a class score,
// averaged over Gaussian-perturbed copies of the image and summed over
// channels into an H x W map.

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>

#include "noiseopt/network.hpp"
#include "noiseopt/rng.hpp"

namespace noiseopt {

struct SaliencyConfig {
  double smoothing_std = 0.15;
  std::uint32_t repetitions = 25;
  std::optional<std::size_t> target_class;  // nullopt: use the predicted class
  EvalNoise victim_noise = EvalNoise::disabled;
  std::uint64_t seed = 0;

  void validate() const {
    if (repetitions < 1) throw std::invalid_argument("saliency needs at least one repetition");
    if (!(smoothing_std >= 0.0)) throw std::invalid_argument("saliency smoothing std must be >= 0");
  }
};

struct SaliencyResult {
  Tensor map;  // H x W, unnormalised (non-negative)
  std::size_t target_class = 0;
};

/// `image` is a single C x H x W (or flattened) input of the network.
inline SaliencyResult saliency_map(const NetworkState& net, const Tensor& image, const SaliencyConfig& cfg) {
  cfg.validate();
  const InputShape in = net.arch.input;
  if (image.size() != in.size()) {
    throw DimensionError("saliency_map: image " + to_string(image.shape()) + " does not match network input");
  }
  RngStream rng(cfg.seed, stream_id_of("saliency"));
  const NoiseMode mode = cfg.victim_noise == EvalNoise::active ? NoiseMode::active() : NoiseMode::disabled();

  SaliencyResult r;
  if (cfg.target_class) {
    if (*cfg.target_class >= net.num_classes()) {
      throw std::out_of_range("saliency_map: class " + std::to_string(*cfg.target_class) + " outside [0, " +
                              std::to_string(net.num_classes()) + ")");
    }
    r.target_class = *cfg.target_class;
  } else {
    RngStream pred_rng = rng.derive(1);
    r.target_class = static_cast<std::size_t>(predict(net, image.reshaped({1, in.size()}), mode, pred_rng)[0]);
  }

  const std::size_t n = cfg.repetitions, d = in.size();
  Tensor batch({n, d});
  RngStream smooth = rng.derive(2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) batch[i * d + j] = image[j] + cfg.smoothing_std * smooth.normal();

  RngStream noise_rng = rng.derive(3);
  const Tensor g = input_gradient(net, batch, r.target_class, mode, noise_rng);

  const std::size_t plane = in.height * in.width;
  r.map = Tensor({in.height, in.width});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < in.channels; ++c)
      for (std::size_t p = 0; p < plane; ++p) {
        const double v = g[i * d + c * plane + p];
        r.map[p] += v * v;
      }
  r.map *= 1.0 / static_cast<double>(n);
  return r;
}

/// Min-max scaling to [0, 1]; a constant map becomes all zeros.
inline Tensor normalize_minmax(const Tensor& m) {
  const auto [lo, hi] = std::minmax_element(m.data().begin(), m.data().end());
  Tensor out(m.shape());
  const double range = *hi - *lo;
  if (range > 0.0) {
    for (std::size_t i = 0; i < m.size(); ++i) out[i] = (m[i] - *lo) / range;
  }
  return out;
}

/// Binary 8-bit PGM (P5) of an H x W map already scaled to [0, 1].
inline void write_pgm(const std::filesystem::path& path, const Tensor& unit_map) {
  if (unit_map.rank() != 2) throw DimensionError("write_pgm: expected an H x W map");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "P5\n" << unit_map.dim(1) << ' ' << unit_map.dim(0) << "\n255\n";
  for (double v : unit_map.data()) {
    out.put(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0))));
  }
  if (!out) throw std::runtime_error("short write to " + path.string());
}

inline std::string saliency_filename(std::string_view model, std::size_t index, std::size_t cls) {
  return std::string(model) + "_" + std::to_string(index) + "_" + std::to_string(cls) + ".pgm";
}

}  // namespace noiseopt
