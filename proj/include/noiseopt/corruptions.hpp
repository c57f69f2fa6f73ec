#pragma once

// Natural corruptions (Gaussian noise, impulse noise, glass blur, contrast)
// at five severities, and the mean-over-severities accuracy metric.
//
// The severity tables are this library's own constants for 28x28 / 32x32
// images; they can be overridden per call through CorruptionTables.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "noiseopt/data.hpp"
#include "noiseopt/network.hpp"
#include "noiseopt/rng.hpp"

namespace noiseopt {

enum class CorruptionKind { gaussian, impulse, glass_blur, contrast };

inline constexpr std::array<CorruptionKind, 4> kAllCorruptions = {
    CorruptionKind::gaussian, CorruptionKind::impulse, CorruptionKind::glass_blur, CorruptionKind::contrast};

inline std::string_view to_string(CorruptionKind k) {
  switch (k) {
    case CorruptionKind::gaussian: return "gaussian";
    case CorruptionKind::impulse: return "impulse";
    case CorruptionKind::glass_blur: return "glass_blur";
    case CorruptionKind::contrast: return "contrast";
  }
  return "?";
}

inline CorruptionKind parse_corruption_kind(std::string_view s) {
  for (CorruptionKind k : kAllCorruptions)
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown corruption '" + std::string(s) + "'");
}

struct CorruptionTables {
  std::array<double, 5> gaussian_std = {0.04, 0.06, 0.08, 0.09, 0.10};
  double gaussian_scale = 1.0;
  std::array<double, 5> impulse_fraction = {0.01, 0.02, 0.03, 0.05, 0.07};
  std::array<double, 5> blur_sigma = {0.7, 0.9, 1.0, 1.1, 1.5};
  std::array<int, 5> glass_rounds = {1, 2, 2, 3, 3};
  std::array<int, 5> glass_radius = {1, 1, 2, 2, 3};
  std::array<double, 5> contrast_factor = {0.75, 0.5, 0.4, 0.3, 0.15};
};

struct CorruptionSpec {
  CorruptionKind kind = CorruptionKind::gaussian;
  int severity = 1;  // 1..5
  std::uint64_t seed = 0;
  CorruptionTables tables{};

  void validate() const {
    if (severity < 1 || severity > 5) {
      throw std::out_of_range("corruption severity " + std::to_string(severity) + " outside 1..5");
    }
  }
};

namespace detail {

// Separable Gaussian blur of one H x W plane, edges clamped.
inline void gaussian_blur_plane(double* plane, std::size_t H, std::size_t W, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    const double w = std::exp(-0.5 * (i * i) / (sigma * sigma));
    k[static_cast<std::size_t>(i + radius)] = w;
    total += w;
  }
  for (double& w : k) w /= total;
  std::vector<double> tmp(H * W);
  const auto Hi = static_cast<std::ptrdiff_t>(H), Wi = static_cast<std::ptrdiff_t>(W);
  for (std::ptrdiff_t y = 0; y < Hi; ++y)
    for (std::ptrdiff_t x = 0; x < Wi; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const std::ptrdiff_t xx = std::clamp<std::ptrdiff_t>(x + i, 0, Wi - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * plane[y * Wi + xx];
      }
      tmp[static_cast<std::size_t>(y * Wi + x)] = acc;
    }
  for (std::ptrdiff_t y = 0; y < Hi; ++y)
    for (std::ptrdiff_t x = 0; x < Wi; ++x) {
      double acc = 0.0;
      for (int i = -radius; i <= radius; ++i) {
        const std::ptrdiff_t yy = std::clamp<std::ptrdiff_t>(y + i, 0, Hi - 1);
        acc += k[static_cast<std::size_t>(i + radius)] * tmp[static_cast<std::size_t>(yy * Wi + x)];
      }
      plane[y * Wi + x] = acc;
    }
}

}  // namespace detail

/// Applies the corruption to a batch of n x C x H x W images in [0, 1].
/// Deterministic per (spec, seed); the result is clipped to [0, 1].
inline Tensor corrupt(const Tensor& x, const CorruptionSpec& spec) {
  spec.validate();
  if (x.rank() != 4) throw DimensionError("corrupt: expected n x C x H x W images, got " + to_string(x.shape()));
  const std::size_t s = static_cast<std::size_t>(spec.severity - 1);
  const CorruptionTables& tab = spec.tables;
  // The stream ignores severity: the severities of one kind share random
  // numbers, so gaussian noise is one field scaled by s and impulse sets are
  // nested.
  RngStream rng(spec.seed, stream_id_of(to_string(spec.kind)));
  Tensor out = x;
  const std::size_t n = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t per = C * H * W;

  switch (spec.kind) {
    case CorruptionKind::gaussian: {
      const double sd = tab.gaussian_std[s] * tab.gaussian_scale;
      for (double& v : out.data()) v += sd * rng.normal();
      break;
    }
    case CorruptionKind::impulse: {
      const double p = tab.impulse_fraction[s];
      for (double& v : out.data()) {
        const double u = rng.uniform();
        const bool salt = (rng.next_u64() >> 63) != 0;
        if (u < p) v = salt ? 1.0 : 0.0;
      }
      break;
    }
    case CorruptionKind::glass_blur: {
      const int radius = tab.glass_radius[s];
      for (std::size_t i = 0; i < n; ++i) {
        double* img = out.data().data() + i * per;
        for (std::size_t c = 0; c < C; ++c) detail::gaussian_blur_plane(img + c * H * W, H, W, tab.blur_sigma[s]);
        const auto Hi = static_cast<std::ptrdiff_t>(H), Wi = static_cast<std::ptrdiff_t>(W);
        for (int round = 0; round < tab.glass_rounds[s]; ++round) {
          for (std::ptrdiff_t y = Hi - 1 - radius; y >= radius; --y)
            for (std::ptrdiff_t xx = Wi - 1 - radius; xx >= radius; --xx) {
              const auto dy = static_cast<std::ptrdiff_t>(rng.below(static_cast<std::uint64_t>(2 * radius + 1))) - radius;
              const auto dx = static_cast<std::ptrdiff_t>(rng.below(static_cast<std::uint64_t>(2 * radius + 1))) - radius;
              for (std::size_t c = 0; c < C; ++c) {
                double* plane = img + c * H * W;
                std::swap(plane[y * Wi + xx], plane[(y + dy) * Wi + (xx + dx)]);
              }
            }
        }
      }
      break;
    }
    case CorruptionKind::contrast: {
      const double f = tab.contrast_factor[s];
      for (std::size_t i = 0; i < n; ++i) {
        double* img = out.data().data() + i * per;
        double mean = 0.0;
        for (std::size_t j = 0; j < per; ++j) mean += img[j];
        mean /= static_cast<double>(per);
        for (std::size_t j = 0; j < per; ++j) img[j] = (img[j] - mean) * f + mean;
      }
      break;
    }
  }
  for (double& v : out.data()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

inline Dataset corrupt(const Dataset& ds, const CorruptionSpec& spec) {
  Dataset out = ds;
  out.images = corrupt(ds.images, spec);
  out.name = ds.name + "/" + std::string(to_string(spec.kind)) + "-" + std::to_string(spec.severity);
  return out;
}

struct CorruptionAccuracy {
  CorruptionKind kind = CorruptionKind::gaussian;
  std::array<double, 5> per_severity{};
  double mean = 0.0;
};

/// Accuracy at one severity; severity 0 is the uncorrupted data.
inline double severity_accuracy(const NetworkState& net, const Dataset& ds, CorruptionKind kind, int severity,
                                EvalNoise noise, std::uint64_t seed, const CorruptionTables& tables = {}) {
  if (ds.size() == 0) throw std::invalid_argument("corruption accuracy: empty dataset");
  // same eval noise at every severity so the per-severity accuracies are paired
  RngStream eval_rng(seed, stream_id_of("corruption-eval"));
  if (severity == 0) return accuracy(net, ds.images, ds.labels, noise, eval_rng);
  const Tensor xc = corrupt(ds.images, {kind, severity, seed, tables});
  return accuracy(net, xc, ds.labels, noise, eval_rng);
}

inline CorruptionAccuracy corruption_accuracy(const NetworkState& net, const Dataset& ds, CorruptionKind kind,
                                              EvalNoise noise, std::uint64_t seed,
                                              const CorruptionTables& tables = {}) {
  if (ds.size() == 0) throw std::invalid_argument("corruption accuracy: empty dataset");
  CorruptionAccuracy r;
  r.kind = kind;
  double total = 0.0;
  for (int s = 1; s <= 5; ++s) {
    r.per_severity[static_cast<std::size_t>(s - 1)] = severity_accuracy(net, ds, kind, s, noise, seed, tables);
    total += r.per_severity[static_cast<std::size_t>(s - 1)];
  }
  r.mean = total / 5.0;
  return r;
}

}  // namespace noiseopt
