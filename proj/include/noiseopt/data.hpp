#pragma once

// Image datasets: MNIST-style IDX ingestion, a versioned float64 container,
// seeded splits, and synthetic Gaussian blobs for fast tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "noiseopt/io.hpp"
#include "noiseopt/network.hpp"
#include "noiseopt/rng.hpp"
#include "noiseopt/tensor.hpp"

namespace noiseopt {

struct Dataset {
  Tensor images;  // n x C x H x W, values in [0, 1]
  Labels labels;
  std::string name;
  std::size_t class_count = 0;

  std::size_t size() const noexcept { return labels.size(); }
  InputShape input_shape() const { return {images.dim(1), images.dim(2), images.dim(3)}; }

  Dataset subset(std::span<const std::size_t> rows, std::string subset_name) const {
    Labels l;
    l.reserve(rows.size());
    for (std::size_t r : rows) l.push_back(labels.at(r));
    return {images.gather_rows(rows), std::move(l), std::move(subset_name), class_count};
  }

  Dataset head(std::size_t n) const {
    std::vector<std::size_t> rows(std::min(n, size()));
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return subset(rows, name);
  }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

using DatasetError = FormatError;

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

namespace detail {

inline std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& what) {
  if (off + 4 > b.size()) throw DatasetError(DatasetError::Code::truncated, what + ": truncated header");
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

inline void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::string hex32(std::uint32_t v) {
  char buf[11];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

}  // namespace detail

struct IdxImages {
  std::size_t count = 0, rows = 0, cols = 0;
  std::vector<std::uint8_t> pixels;
};

inline IdxImages parse_idx_images(const std::vector<std::uint8_t>& b, const std::string& what = "image file") {
  const std::uint32_t magic = detail::read_be32(b, 0, what);
  if (magic != kIdxImageMagic) {
    throw DatasetError(DatasetError::Code::bad_magic, what + ": bad magic number " + detail::hex32(magic) +
                                                          ", expected " + detail::hex32(kIdxImageMagic));
  }
  IdxImages img;
  img.count = detail::read_be32(b, 4, what);
  img.rows = detail::read_be32(b, 8, what);
  img.cols = detail::read_be32(b, 12, what);
  const std::size_t need = img.count * img.rows * img.cols;
  if (b.size() < 16 + need) {
    throw DatasetError(DatasetError::Code::truncated, what + ": expected " + std::to_string(need) +
                                                          " pixel bytes, found " + std::to_string(b.size() - 16));
  }
  img.pixels.assign(b.begin() + 16, b.begin() + 16 + static_cast<std::ptrdiff_t>(need));
  return img;
}

inline std::vector<std::uint8_t> parse_idx_labels(const std::vector<std::uint8_t>& b,
                                                  const std::string& what = "label file") {
  const std::uint32_t magic = detail::read_be32(b, 0, what);
  if (magic != kIdxLabelMagic) {
    throw DatasetError(DatasetError::Code::bad_magic, what + ": bad magic number " + detail::hex32(magic) +
                                                          ", expected " + detail::hex32(kIdxLabelMagic));
  }
  const std::size_t count = detail::read_be32(b, 4, what);
  if (b.size() < 8 + count) {
    throw DatasetError(DatasetError::Code::truncated, what + ": expected " + std::to_string(count) +
                                                          " labels, found " + std::to_string(b.size() - 8));
  }
  return {b.begin() + 8, b.begin() + 8 + static_cast<std::ptrdiff_t>(count)};
}

inline Dataset dataset_from_idx(const IdxImages& img, const std::vector<std::uint8_t>& labels,
                                std::string name = "idx") {
  if (img.count != labels.size()) {
    throw DatasetError(DatasetError::Code::count_mismatch, "image count " + std::to_string(img.count) +
                                                               " differs from label count " +
                                                               std::to_string(labels.size()));
  }
  Dataset ds;
  ds.name = std::move(name);
  if (img.count == 0) throw DatasetError(DatasetError::Code::bad_format, "IDX file holds no images");
  ds.images = Tensor({img.count, 1, img.rows, img.cols});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) ds.images[i] = img.pixels[i] / 255.0;
  ds.labels.assign(labels.begin(), labels.end());
  ds.class_count = static_cast<std::size_t>(*std::max_element(ds.labels.begin(), ds.labels.end())) + 1;
  ds.class_count = std::max<std::size_t>(ds.class_count, 10);
  return ds;
}

inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  const IdxImages img = parse_idx_images(detail::read_file(images_path), images_path.string());
  const auto lab = parse_idx_labels(detail::read_file(labels_path), labels_path.string());
  return dataset_from_idx(img, lab, images_path.stem().string());
}

/// IDX encoding of a single-channel dataset; pixels are rounded to bytes.
inline std::vector<std::uint8_t> encode_idx_images(const Dataset& ds) {
  if (ds.images.dim(1) != 1) throw DatasetError(DatasetError::Code::bad_format, "IDX images must be single-channel");
  std::vector<std::uint8_t> b;
  b.reserve(16 + ds.images.size());
  detail::put_be32(b, kIdxImageMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(ds.images.dim(0)));
  detail::put_be32(b, static_cast<std::uint32_t>(ds.images.dim(2)));
  detail::put_be32(b, static_cast<std::uint32_t>(ds.images.dim(3)));
  for (double v : ds.images.data()) {
    b.push_back(static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0)));
  }
  return b;
}

inline std::vector<std::uint8_t> encode_idx_labels(const Labels& labels) {
  std::vector<std::uint8_t> b;
  detail::put_be32(b, kIdxLabelMagic);
  detail::put_be32(b, static_cast<std::uint32_t>(labels.size()));
  for (int l : labels) b.push_back(static_cast<std::uint8_t>(l));
  return b;
}

inline void save_idx(const Dataset& ds, const std::filesystem::path& images_path,
                     const std::filesystem::path& labels_path) {
  detail::write_file(images_path, encode_idx_images(ds));
  detail::write_file(labels_path, encode_idx_labels(ds.labels));
}

// Container layout (little-endian):
//   "NODS" | u32 version=1 | u32 name_len | name bytes | u64 class_count |
//   u64 n, C, H, W | n*C*H*W f64 pixels | n i32 labels
inline constexpr std::uint32_t kDatasetContainerVersion = 1;

inline std::vector<std::uint8_t> encode_dataset(const Dataset& ds) {
  std::vector<std::uint8_t> b;
  b.reserve(64 + ds.images.size() * 8 + ds.labels.size() * 4);
  detail::put_magic(b, "NODS");
  detail::put_le<std::uint32_t>(b, kDatasetContainerVersion);
  detail::put_string(b, ds.name);
  detail::put_le<std::uint64_t>(b, ds.class_count);
  for (std::size_t a = 0; a < 4; ++a) detail::put_le<std::uint64_t>(b, ds.images.dim(a));
  for (double v : ds.images.data()) detail::put_le<double>(b, v);
  for (int l : ds.labels) detail::put_le<std::int32_t>(b, l);
  return b;
}

inline Dataset decode_dataset(const std::vector<std::uint8_t>& bytes, const std::string& what = "dataset") {
  detail::ByteReader r(bytes, what);
  r.expect_magic("NODS");
  const auto version = r.get<std::uint32_t>();
  if (version != kDatasetContainerVersion) {
    throw DatasetError(DatasetError::Code::bad_format, what + ": unsupported container version " + std::to_string(version));
  }
  Dataset ds;
  ds.name = r.get_string();
  ds.class_count = r.get<std::uint64_t>();
  Shape shape(4);
  for (auto& d : shape) d = r.get<std::uint64_t>();
  ds.images = Tensor(shape);
  for (double& v : ds.images.data()) v = r.get<double>();
  ds.labels.resize(shape[0]);
  for (int& l : ds.labels) {
    l = r.get<std::int32_t>();
    if (l < 0 || static_cast<std::size_t>(l) >= ds.class_count) {
      throw DatasetError(DatasetError::Code::bad_label, what + ": label " + std::to_string(l) + " out of range");
    }
  }
  if (!r.done()) throw DatasetError(DatasetError::Code::bad_format, what + ": trailing bytes");
  return ds;
}

inline void save_dataset(const Dataset& ds, const std::filesystem::path& path) {
  detail::write_file(path, encode_dataset(ds));
}

inline Dataset load_dataset(const std::filesystem::path& path) {
  return decode_dataset(detail::read_file(path), path.string());
}

struct SplitRatio {
  std::size_t train = 5, val = 1, test = 1;
};

struct DatasetSplits {
  Dataset train, val, test;
  std::vector<std::size_t> train_rows, val_rows, test_rows;
};

/// Seeded permutation split; validation and test get floor(n * part / total)
/// samples and the remainder goes to training.
inline DatasetSplits split(const Dataset& ds, SplitRatio ratio, std::uint64_t seed) {
  if (ds.size() < 3) throw std::invalid_argument("split: dataset needs at least 3 samples");
  if (ratio.train == 0 || ratio.val == 0 || ratio.test == 0) {
    throw std::invalid_argument("split: ratio parts must be positive");
  }
  const std::size_t n = ds.size();
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RngStream rng(seed, stream_id_of("split"));
  for (std::size_t i = n - 1; i > 0; --i) std::swap(perm[i], perm[rng.below(i + 1)]);

  const std::size_t total = ratio.train + ratio.val + ratio.test;
  const std::size_t n_val = n * ratio.val / total;
  const std::size_t n_test = n * ratio.test / total;
  DatasetSplits s;
  s.val_rows.assign(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
  s.test_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val),
                     perm.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
  s.train_rows.assign(perm.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), perm.end());
  if (s.val_rows.empty() || s.test_rows.empty() || s.train_rows.empty()) {
    throw std::invalid_argument("split: a part would be empty for " + std::to_string(n) + " samples");
  }
  s.train = ds.subset(s.train_rows, ds.name + "/train");
  s.val = ds.subset(s.val_rows, ds.name + "/val");
  s.test = ds.subset(s.test_rows, ds.name + "/test");
  return s;
}

struct BlobOptions {
  double cluster_std = 0.05;
  double separation = 1.0;  // distance between any two class means
};

/// Gaussian clusters laid out as 1 x 1 x dim "images". Class c has mean
/// base + (separation / sqrt 2) * e_c, so all pairwise mean distances equal
/// `separation`. Requires classes <= dim; samples are clipped to [0, 1].
inline Dataset synthetic_blobs(std::size_t classes, std::size_t samples_per_class, std::size_t dim,
                               std::uint64_t seed, BlobOptions opt = {}) {
  if (classes < 2 || classes > dim) throw std::invalid_argument("synthetic_blobs: need 2 <= classes <= dim");
  if (samples_per_class == 0) throw std::invalid_argument("synthetic_blobs: samples_per_class must be positive");
  const double offset = opt.separation / std::sqrt(2.0);
  const double base = 0.5 - offset / 2.0;
  if (base < 0.0 || base + offset > 1.0) throw std::invalid_argument("synthetic_blobs: separation too large for [0,1]");
  Dataset ds;
  ds.name = "blobs";
  ds.class_count = classes;
  const std::size_t n = classes * samples_per_class;
  ds.images = Tensor({n, 1, 1, dim});
  ds.labels.resize(n);
  RngStream rng(seed, stream_id_of("blobs"));
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t c = i % classes;
    ds.labels[i] = static_cast<int>(c);
    for (std::size_t j = 0; j < dim; ++j) {
      const double mean = base + (j == c ? offset : 0.0);
      ds.images[i * dim + j] = std::clamp(mean + opt.cluster_std * rng.normal(), 0.0, 1.0);
    }
  }
  return ds;
}

}  // namespace noiseopt
