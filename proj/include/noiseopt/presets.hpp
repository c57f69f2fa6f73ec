#pragma once

// Named architectures for the ablation variants:
//   mlp / mlp_plus / mlp_n        no noise / fixed unit noise / trained noise
//   cnn, cnn_mlp_plus, cnn_a_plus  noise on FC layers only (mlp) or all layers (a)
//   cnn_mlp_n, cnn_a_n             same placements with trained noise
//   surrogate                      300/150 ReLU MLP used for transfer attacks
// Noise is placed on hidden layers; the output layer never carries noise.

#include <array>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "noiseopt/network.hpp"

namespace noiseopt {

struct ModelConfig {
  std::string preset = "mlp_n";
  Activation activation = Activation::sigmoid;  // MLP hidden layers
  std::vector<std::size_t> hidden = {100, 50};  // MLP hidden widths
  double sigma_init = 1.0;                      // trainable noise start
  double fixed_sigma = 1.0;                     // *_plus presets
  std::string layers;                           // explicit layer list; overrides the preset when set
};

inline constexpr std::array<std::string_view, 9> kPresetNames = {
    "mlp", "mlp_plus", "mlp_n", "cnn", "cnn_mlp_plus", "cnn_a_plus", "cnn_mlp_n", "cnn_a_n", "surrogate"};

inline bool is_known_preset(std::string_view name) {
  for (auto p : kPresetNames)
    if (p == name) return true;
  return false;
}

inline Architecture build_architecture(const ModelConfig& cfg, InputShape input, std::size_t classes) {
  const std::string_view p = cfg.preset;
  if (!is_known_preset(p)) throw std::invalid_argument("unknown model preset '" + cfg.preset + "'");
  Architecture arch{input, {}};

  auto noise_for = [&](bool noisy_placement) -> NoiseSpec {
    if (!noisy_placement) return NoiseSpec::none();
    if (p.ends_with("_plus")) return NoiseSpec::fixed(cfg.fixed_sigma);
    if (p.ends_with("_n")) return NoiseSpec::trainable(cfg.sigma_init);
    return NoiseSpec::none();
  };

  if (p == "mlp" || p == "mlp_plus" || p == "mlp_n" || p == "surrogate") {
    std::vector<std::size_t> widths = cfg.hidden;
    Activation act = cfg.activation;
    if (p == "surrogate") {
      widths = {300, 150};
      act = Activation::relu;
    }
    std::size_t fan_in = input.size();
    for (std::size_t w : widths) {
      arch.layers.push_back(LayerSpec::dense(fan_in, w, act, noise_for(true)));
      fan_in = w;
    }
    arch.layers.push_back(LayerSpec::dense(fan_in, classes, Activation::identity));
  } else {
    const bool conv_noise = p == "cnn_a_plus" || p == "cnn_a_n";
    const bool fc_noise = p != "cnn";
    arch.layers.push_back(LayerSpec::conv(input.channels, 32, Activation::relu, noise_for(conv_noise), true));
    arch.layers.push_back(LayerSpec::conv(32, 64, Activation::relu, noise_for(conv_noise), true));
    const std::size_t flat = 64 * (input.height / 4) * (input.width / 4);
    arch.layers.push_back(LayerSpec::dense(flat, 128, Activation::relu, noise_for(fc_noise)));
    arch.layers.push_back(LayerSpec::dense(128, 128, Activation::relu, noise_for(fc_noise)));
    arch.layers.push_back(LayerSpec::dense(128, classes, Activation::identity));
  }
  layer_output_shapes(arch);
  return arch;
}

/// Parses a compact architecture description:
///   input  "CxHxW" (or a single number for a flat input)
///   layers "dense:5:sigmoid:noise;dense:3:identity" or "conv:4:relu:noise:pool;dense:3:identity"
/// Layer fields after the width are activation, then any of "noise"
/// (trainable sigma), "fixed" (sigma 1, not trained) and "pool".
inline Architecture parse_architecture(const std::string& input, const std::string& layers) {
  auto split = [](const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep))
      if (!cur.empty()) out.push_back(cur);
    return out;
  };
  auto to_size = [](const std::string& s) -> std::size_t {
    try {
      std::size_t used = 0;
      const unsigned long long v = std::stoull(s, &used);
      if (used != s.size() || v == 0) throw std::invalid_argument(s);
      return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
      throw ArchitectureError("expected a positive integer, got '" + s + "'");
    }
  };
  Architecture arch;
  const auto dims = split(input, 'x');
  if (dims.size() == 1) {
    arch.input = {1, 1, to_size(dims[0])};
  } else if (dims.size() == 3) {
    arch.input = {to_size(dims[0]), to_size(dims[1]), to_size(dims[2])};
  } else {
    throw ArchitectureError("input shape must be N or CxHxW, got '" + input + "'");
  }

  std::size_t channels = arch.input.channels, h = arch.input.height, w = arch.input.width;
  bool flat = false;
  for (const std::string& spec : split(layers, ';')) {
    const auto f = split(spec, ':');
    if (f.size() < 3) throw ArchitectureError("layer '" + spec + "' needs kind:width:activation");
    LayerSpec L;
    L.kind = f[0] == "conv" ? LayerKind::conv : LayerKind::dense;
    if (f[0] != "conv" && f[0] != "dense") throw ArchitectureError("unknown layer kind '" + f[0] + "'");
    L.outputs = to_size(f[1]);
    try {
      L.activation = parse_activation(f[2]);
    } catch (const std::invalid_argument& e) {
      throw ArchitectureError(e.what());
    }
    for (std::size_t i = 3; i < f.size(); ++i) {
      if (f[i] == "noise") L.noise = NoiseSpec::trainable(1.0);
      else if (f[i] == "fixed") L.noise = NoiseSpec::fixed(1.0);
      else if (f[i] == "pool") L.pool = true;
      else throw ArchitectureError("unknown layer flag '" + f[i] + "'");
    }
    if (L.kind == LayerKind::conv) {
      L.inputs = channels;
      channels = L.outputs;
      if (L.pool) {
        h /= 2;
        w /= 2;
      }
    } else {
      L.inputs = flat ? channels : channels * h * w;
      channels = L.outputs;
      flat = true;
    }
    arch.layers.push_back(L);
  }
  if (arch.layers.empty()) throw ArchitectureError("architecture has no layers");
  layer_output_shapes(arch);
  return arch;
}

}  // namespace noiseopt
