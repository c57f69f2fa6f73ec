#pragma once

// Versioned binary model checkpoint. Every double is stored as its raw
// IEEE-754 bit pattern (little-endian), so save/load is bit-exact.
//
//   "NOCKPT" | u32 version | string preset | u64 seed |
//   input (u64 C, H, W) | u32 layers | per layer spec |
//   per layer: tensor weights, bias, sigma |
//   u8 has_trainer [ trainer state ]
//
// tensor := u32 rank | u64 dims[rank] | u64 count | f64 values[count]
// (count == 0 encodes an absent tensor).

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "noiseopt/io.hpp"
#include "noiseopt/network.hpp"
#include "noiseopt/optim.hpp"

namespace noiseopt {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class WeightOptimizer { adam, sgd };

/// Everything needed to resume training exactly.
struct TrainerState {
  WeightOptimizer kind = WeightOptimizer::adam;
  std::vector<AdamState> adam;   // per layer: weights, bias
  std::vector<SgdState> sgd;     // per layer: weights, bias
  std::vector<AdamState> sigma;  // per layer; unused entries stay empty
  std::uint32_t epochs_done = 0;
  std::uint64_t steps = 0;

  friend bool operator==(const TrainerState&, const TrainerState&) = default;
};

struct Checkpoint {
  std::string preset;
  NetworkState net;
  std::optional<TrainerState> trainer;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

namespace detail {

inline void put_tensor(std::vector<std::uint8_t>& b, const Tensor& t) {
  put_le<std::uint32_t>(b, static_cast<std::uint32_t>(t.rank()));
  for (std::size_t d : t.shape()) put_le<std::uint64_t>(b, d);
  put_le<std::uint64_t>(b, t.size());
  for (double v : t.data()) put_le<double>(b, v);
}

inline Tensor get_tensor(ByteReader& r) {
  const auto rank = r.get<std::uint32_t>();
  if (rank > 8) throw FormatError(FormatError::Code::bad_format, r.what() + ": implausible tensor rank");
  Shape shape(rank);
  for (auto& d : shape) d = r.get<std::uint64_t>();
  const auto count = r.get<std::uint64_t>();
  if (count == 0) return {};
  if (count != shape_size(shape)) throw FormatError(FormatError::Code::bad_format, r.what() + ": tensor size mismatch");
  std::vector<double> data(count);
  for (double& v : data) v = r.get<double>();
  return Tensor(std::move(shape), std::move(data));
}

inline void put_adam(std::vector<std::uint8_t>& b, const AdamState& s) {
  put_le<double>(b, s.config.lr);
  put_le<double>(b, s.config.beta1);
  put_le<double>(b, s.config.beta2);
  put_le<double>(b, s.config.eps);
  put_le<double>(b, s.config.weight_decay);
  put_le<std::uint64_t>(b, s.step);
  put_tensor(b, s.m_hat);
  put_tensor(b, s.v_hat);
}

inline AdamState get_adam(ByteReader& r) {
  AdamState s;
  s.config.lr = r.get<double>();
  s.config.beta1 = r.get<double>();
  s.config.beta2 = r.get<double>();
  s.config.eps = r.get<double>();
  s.config.weight_decay = r.get<double>();
  s.step = r.get<std::uint64_t>();
  s.m_hat = get_tensor(r);
  s.v_hat = get_tensor(r);
  return s;
}

inline void put_sgd(std::vector<std::uint8_t>& b, const SgdState& s) {
  put_le<double>(b, s.config.lr);
  put_le<double>(b, s.config.momentum);
  put_le<double>(b, s.config.weight_decay);
  put_tensor(b, s.velocity);
}

inline SgdState get_sgd(ByteReader& r) {
  SgdState s;
  s.config.lr = r.get<double>();
  s.config.momentum = r.get<double>();
  s.config.weight_decay = r.get<double>();
  s.velocity = get_tensor(r);
  return s;
}

template <class E>
E checked_enum(ByteReader& r, std::uint8_t max) {
  const auto v = r.get<std::uint8_t>();
  if (v > max) throw FormatError(FormatError::Code::bad_format, r.what() + ": enum value out of range");
  return static_cast<E>(v);
}

}  // namespace detail

inline std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ck) {
  std::vector<std::uint8_t> b;
  detail::put_magic(b, "NOCKPT");
  detail::put_le<std::uint32_t>(b, kCheckpointVersion);
  detail::put_string(b, ck.preset);
  detail::put_le<std::uint64_t>(b, ck.net.seed);
  const Architecture& a = ck.net.arch;
  detail::put_le<std::uint64_t>(b, a.input.channels);
  detail::put_le<std::uint64_t>(b, a.input.height);
  detail::put_le<std::uint64_t>(b, a.input.width);
  detail::put_le<std::uint32_t>(b, static_cast<std::uint32_t>(a.layers.size()));
  for (const LayerSpec& L : a.layers) {
    detail::put_le<std::uint8_t>(b, static_cast<std::uint8_t>(L.kind));
    detail::put_le<std::uint64_t>(b, L.inputs);
    detail::put_le<std::uint64_t>(b, L.outputs);
    detail::put_le<std::uint8_t>(b, static_cast<std::uint8_t>(L.activation));
    detail::put_le<std::uint8_t>(b, static_cast<std::uint8_t>(L.noise.kind));
    detail::put_le<double>(b, L.noise.sigma);
    detail::put_le<std::uint8_t>(b, L.pool ? 1 : 0);
    detail::put_le<std::uint64_t>(b, L.kernel);
  }
  for (const LayerParams& p : ck.net.layers) {
    detail::put_tensor(b, p.weights);
    detail::put_tensor(b, p.bias);
    detail::put_tensor(b, p.sigma);
  }
  detail::put_le<std::uint8_t>(b, ck.trainer ? 1 : 0);
  if (ck.trainer) {
    const TrainerState& t = *ck.trainer;
    detail::put_le<std::uint8_t>(b, static_cast<std::uint8_t>(t.kind));
    detail::put_le<std::uint32_t>(b, t.epochs_done);
    detail::put_le<std::uint64_t>(b, t.steps);
    detail::put_le<std::uint32_t>(b, static_cast<std::uint32_t>(t.adam.size()));
    for (const auto& s : t.adam) detail::put_adam(b, s);
    detail::put_le<std::uint32_t>(b, static_cast<std::uint32_t>(t.sgd.size()));
    for (const auto& s : t.sgd) detail::put_sgd(b, s);
    detail::put_le<std::uint32_t>(b, static_cast<std::uint32_t>(t.sigma.size()));
    for (const auto& s : t.sigma) detail::put_adam(b, s);
  }
  return b;
}

inline Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& what = "checkpoint") {
  detail::ByteReader r(bytes, what);
  r.expect_magic("NOCKPT");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(FormatError::Code::bad_format, what + ": unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.preset = r.get_string();
  ck.net.seed = r.get<std::uint64_t>();
  Architecture& a = ck.net.arch;
  a.input.channels = r.get<std::uint64_t>();
  a.input.height = r.get<std::uint64_t>();
  a.input.width = r.get<std::uint64_t>();
  const auto depth = r.get<std::uint32_t>();
  for (std::uint32_t t = 0; t < depth; ++t) {
    LayerSpec L;
    L.kind = detail::checked_enum<LayerKind>(r, 1);
    L.inputs = r.get<std::uint64_t>();
    L.outputs = r.get<std::uint64_t>();
    L.activation = detail::checked_enum<Activation>(r, 2);
    L.noise.kind = detail::checked_enum<NoiseKind>(r, 2);
    L.noise.sigma = r.get<double>();
    L.pool = r.get<std::uint8_t>() != 0;
    L.kernel = r.get<std::uint64_t>();
    a.layers.push_back(L);
  }
  try {
    layer_output_shapes(a);
  } catch (const ArchitectureError& e) {
    throw FormatError(FormatError::Code::bad_format, what + ": " + e.what());
  }
  for (std::uint32_t t = 0; t < depth; ++t) {
    LayerParams p;
    p.weights = detail::get_tensor(r);
    p.bias = detail::get_tensor(r);
    p.sigma = detail::get_tensor(r);
    ck.net.layers.push_back(std::move(p));
  }
  if (r.get<std::uint8_t>()) {
    TrainerState t;
    t.kind = detail::checked_enum<WeightOptimizer>(r, 1);
    t.epochs_done = r.get<std::uint32_t>();
    t.steps = r.get<std::uint64_t>();
    t.adam.resize(r.get<std::uint32_t>());
    for (auto& s : t.adam) s = detail::get_adam(r);
    t.sgd.resize(r.get<std::uint32_t>());
    for (auto& s : t.sgd) s = detail::get_sgd(r);
    t.sigma.resize(r.get<std::uint32_t>());
    for (auto& s : t.sigma) s = detail::get_adam(r);
    ck.trainer = std::move(t);
  }
  if (!r.done()) throw FormatError(FormatError::Code::bad_format, what + ": trailing bytes");
  return ck;
}

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
  detail::write_file(path, encode_checkpoint(ck));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
  return decode_checkpoint(detail::read_file(path), path.string());
}

}  // namespace noiseopt
