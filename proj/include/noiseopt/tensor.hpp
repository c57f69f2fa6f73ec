#pragma once

// Dense row-major float64 tensors and the handful of kernels the network
// needs: matrix products in three transpose layouts and 3x3 "same" conv.

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace noiseopt {

using Shape = std::vector<std::size_t>;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline std::string to_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, double fill = 0.0)
      : shape_(std::move(shape)), data_(checked_size(shape_), fill) {}

  Tensor(Shape shape, std::vector<double> data)
      : shape_(std::move(shape)), data_(std::move(data)) {
    if (checked_size(shape_) != data_.size()) {
      throw DimensionError("tensor data length " + std::to_string(data_.size()) +
                           " does not match shape " + noiseopt::to_string(shape_));
    }
  }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::vector<double>& values() noexcept { return data_; }
  const std::vector<double>& values() const noexcept { return data_; }

  double& operator[](std::size_t i) noexcept { return data_[i]; }
  double operator[](std::size_t i) const noexcept { return data_[i]; }

  double& at(std::size_t r, std::size_t c) { return data_[r * shape_.at(1) + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_.at(1) + c]; }

  /// Same data, new shape. The element count must agree.
  Tensor reshaped(Shape shape) const {
    return Tensor(std::move(shape), data_);
  }

  /// Sub-tensor along axis 0 (rows [begin, end)).
  Tensor slice_rows(std::size_t begin, std::size_t end) const {
    if (rank() == 0 || begin > end || end > shape_[0]) {
      throw DimensionError("row slice [" + std::to_string(begin) + "," +
                           std::to_string(end) + ") out of range for " +
                           noiseopt::to_string(shape_));
    }
    const std::size_t stride = shape_[0] ? data_.size() / shape_[0] : 0;
    Shape s = shape_;
    s[0] = end - begin;
    return Tensor(std::move(s),
                  std::vector<double>(data_.begin() + static_cast<std::ptrdiff_t>(begin * stride),
                                      data_.begin() + static_cast<std::ptrdiff_t>(end * stride)));
  }

  /// Gathers the listed rows (axis 0) into a new tensor.
  Tensor gather_rows(std::span<const std::size_t> rows) const {
    const std::size_t stride = shape_.at(0) ? data_.size() / shape_[0] : 0;
    Shape s = shape_;
    s[0] = rows.size();
    Tensor out(std::move(s));
    for (std::size_t i = 0; i < rows.size(); ++i) {
      if (rows[i] >= shape_[0]) throw DimensionError("gather row out of range");
      std::copy_n(data_.begin() + static_cast<std::ptrdiff_t>(rows[i] * stride), stride,
                  out.data_.begin() + static_cast<std::ptrdiff_t>(i * stride));
    }
    return out;
  }

  Tensor& operator+=(const Tensor& o) { return apply(o, std::plus<>(), "+="); }
  Tensor& operator-=(const Tensor& o) { return apply(o, std::minus<>(), "-="); }
  Tensor& operator*=(const Tensor& o) { return apply(o, std::multiplies<>(), "*="); }
  Tensor& operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
  }

  friend Tensor operator+(Tensor a, const Tensor& b) { return a += b; }
  friend Tensor operator-(Tensor a, const Tensor& b) { return a -= b; }
  friend Tensor operator*(Tensor a, const Tensor& b) { return a *= b; }
  friend Tensor operator*(Tensor a, double s) { return a *= s; }
  friend Tensor operator*(double s, Tensor a) { return a *= s; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  static std::size_t checked_size(const Shape& shape) {
    for (std::size_t d : shape) {
      if (d == 0) throw DimensionError("zero-length axis in shape " + noiseopt::to_string(shape));
    }
    return shape_size(shape);
  }

  // Elementwise op with broadcasting of length-1 axes in `o` (same rank).
  template <class Op>
  Tensor& apply(const Tensor& o, Op op, const char* name) {
    if (o.shape_ == shape_) {
      for (std::size_t i = 0; i < data_.size(); ++i) data_[i] = op(data_[i], o.data_[i]);
      return *this;
    }
    if (o.rank() != rank()) {
      throw DimensionError(std::string("operator") + name + ": shapes " +
                           noiseopt::to_string(shape_) + " and " + noiseopt::to_string(o.shape_));
    }
    for (std::size_t a = 0; a < rank(); ++a) {
      if (o.shape_[a] != shape_[a] && o.shape_[a] != 1) {
        throw DimensionError(std::string("operator") + name + ": shapes " +
                             noiseopt::to_string(shape_) + " and " +
                             noiseopt::to_string(o.shape_));
      }
    }
    std::vector<std::size_t> idx(rank(), 0);
    for (std::size_t i = 0; i < data_.size(); ++i) {
      std::size_t j = 0;
      for (std::size_t a = 0; a < rank(); ++a) {
        j = j * o.shape_[a] + (o.shape_[a] == 1 ? 0 : idx[a]);
      }
      data_[i] = op(data_[i], o.data_[j]);
      for (std::size_t a = rank(); a-- > 0;) {
        if (++idx[a] < shape_[a]) break;
        idx[a] = 0;
      }
    }
    return *this;
  }

  Shape shape_;
  std::vector<double> data_;
};

namespace detail {

inline void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a matrix, got " + to_string(t.shape()));
  }
}

inline void mismatch(const char* op, const Tensor& a, const Tensor& b) {
  throw DimensionError(std::string(op) + ": incompatible shapes " + to_string(a.shape()) +
                       " and " + to_string(b.shape()));
}

}  // namespace detail

/// a[m x k] * b[k x n]
inline Tensor matmul(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul");
  detail::require_matrix(b, "matmul");
  if (a.dim(1) != b.dim(0)) detail::mismatch("matmul", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double s = pa[i * k + p];
      if (s == 0.0) continue;
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return c;
}

/// a[m x k] * b[n x k]^T
inline Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul_nt");
  detail::require_matrix(b, "matmul_nt");
  if (a.dim(1) != b.dim(1)) detail::mismatch("matmul_nt", a, b);
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(0);
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = pa + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const double* brow = pb + j * k;
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += arow[p] * brow[p];
      pc[i * n + j] = acc;
    }
  }
  return c;
}

/// a[k x m]^T * b[k x n]
inline Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  detail::require_matrix(a, "matmul_tn");
  detail::require_matrix(b, "matmul_tn");
  if (a.dim(0) != b.dim(0)) detail::mismatch("matmul_tn", a, b);
  const std::size_t k = a.dim(0), m = a.dim(1), n = b.dim(1);
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double s = pa[p * m + i];
      if (s == 0.0) continue;
      double* row = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += s * brow[j];
    }
  }
  return c;
}

namespace detail {

inline void check_conv_shapes(const Tensor& input, const Tensor& kernels, const char* op) {
  if (input.rank() != 3 || kernels.rank() != 4) {
    throw DimensionError(std::string(op) + ": expected C x H x W input and K x C x k x k kernels, got " +
                         to_string(input.shape()) + " and " + to_string(kernels.shape()));
  }
  if (kernels.dim(1) != input.dim(0)) {
    throw DimensionError(std::string(op) + ": channel mismatch between input " +
                         to_string(input.shape()) + " and kernels " + to_string(kernels.shape()));
  }
  if (kernels.dim(2) != kernels.dim(3) || kernels.dim(2) % 2 == 0) {
    throw DimensionError(std::string(op) + ": kernels must be square with odd size, got " +
                         to_string(kernels.shape()));
  }
}

}  // namespace detail

/// Stride-1 cross-correlation with zero "same" padding (pad = k/2, so pad 1
/// for the 3x3 kernels the networks use). input C x H x W, kernels K x C x k x k,
/// result K x H x W. No kernel flip.
inline Tensor conv2d(const Tensor& input, const Tensor& kernels) {
  detail::check_conv_shapes(input, kernels, "conv2d");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::size_t K = kernels.dim(0), ks = kernels.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ks / 2);
  Tensor out({K, H, W});
  const double* in = input.data().data();
  const double* ker = kernels.data().data();
  double* o = out.data().data();
  for (std::size_t k = 0; k < K; ++k) {
    double* oplane = o + k * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      const double* iplane = in + c * H * W;
      const double* kw = ker + (k * C + c) * ks * ks;
      for (std::size_t dy = 0; dy < ks; ++dy) {
        for (std::size_t dx = 0; dx < ks; ++dx) {
          const double w = kw[dy * ks + dx];
          if (w == 0.0) continue;
          const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - pad;
          const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
          const std::size_t y0 = oy < 0 ? static_cast<std::size_t>(-oy) : 0;
          const std::size_t y1 = oy > 0 ? H - static_cast<std::size_t>(oy) : H;
          const std::size_t x0 = ox < 0 ? static_cast<std::size_t>(-ox) : 0;
          const std::size_t x1 = ox > 0 ? W - static_cast<std::size_t>(ox) : W;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* irow = iplane + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + oy) * W;
            double* orow = oplane + y * W;
            for (std::size_t x = x0; x < x1; ++x) {
              orow[x] += w * irow[static_cast<std::ptrdiff_t>(x) + ox];
            }
          }
        }
      }
    }
  }
  return out;
}

/// Gradient of sum(grad_out * conv2d(input, kernels)) with respect to input.
inline Tensor conv2d_backward_input(const Tensor& grad_out, const Tensor& kernels) {
  if (grad_out.rank() != 3 || kernels.rank() != 4 || grad_out.dim(0) != kernels.dim(0)) {
    detail::mismatch("conv2d_backward_input", grad_out, kernels);
  }
  const std::size_t K = kernels.dim(0), C = kernels.dim(1), ks = kernels.dim(2);
  const std::size_t H = grad_out.dim(1), W = grad_out.dim(2);
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ks / 2);
  Tensor gin({C, H, W});
  const double* g = grad_out.data().data();
  const double* ker = kernels.data().data();
  double* gi = gin.data().data();
  for (std::size_t k = 0; k < K; ++k) {
    const double* gplane = g + k * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      double* iplane = gi + c * H * W;
      const double* kw = ker + (k * C + c) * ks * ks;
      for (std::size_t dy = 0; dy < ks; ++dy) {
        for (std::size_t dx = 0; dx < ks; ++dx) {
          const double w = kw[dy * ks + dx];
          if (w == 0.0) continue;
          const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - pad;
          const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
          const std::size_t y0 = oy < 0 ? static_cast<std::size_t>(-oy) : 0;
          const std::size_t y1 = oy > 0 ? H - static_cast<std::size_t>(oy) : H;
          const std::size_t x0 = ox < 0 ? static_cast<std::size_t>(-ox) : 0;
          const std::size_t x1 = ox > 0 ? W - static_cast<std::size_t>(ox) : W;
          for (std::size_t y = y0; y < y1; ++y) {
            double* irow = iplane + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + oy) * W;
            const double* grow = gplane + y * W;
            for (std::size_t x = x0; x < x1; ++x) {
              irow[static_cast<std::ptrdiff_t>(x) + ox] += w * grow[x];
            }
          }
        }
      }
    }
  }
  return gin;
}

/// Accumulates the kernel gradient of sum(grad_out * conv2d(input, kernels))
/// into `grad_kernels` (same shape as the kernels).
inline void conv2d_accumulate_kernel_grad(const Tensor& input, const Tensor& grad_out,
                                          Tensor& grad_kernels) {
  detail::check_conv_shapes(input, grad_kernels, "conv2d_accumulate_kernel_grad");
  const std::size_t C = input.dim(0), H = input.dim(1), W = input.dim(2);
  const std::size_t K = grad_kernels.dim(0), ks = grad_kernels.dim(2);
  if (grad_out.rank() != 3 || grad_out.dim(0) != K || grad_out.dim(1) != H || grad_out.dim(2) != W) {
    detail::mismatch("conv2d_accumulate_kernel_grad", grad_out, grad_kernels);
  }
  const std::ptrdiff_t pad = static_cast<std::ptrdiff_t>(ks / 2);
  const double* in = input.data().data();
  const double* g = grad_out.data().data();
  double* gk = grad_kernels.data().data();
  for (std::size_t k = 0; k < K; ++k) {
    const double* gplane = g + k * H * W;
    for (std::size_t c = 0; c < C; ++c) {
      const double* iplane = in + c * H * W;
      double* kw = gk + (k * C + c) * ks * ks;
      for (std::size_t dy = 0; dy < ks; ++dy) {
        for (std::size_t dx = 0; dx < ks; ++dx) {
          const std::ptrdiff_t oy = static_cast<std::ptrdiff_t>(dy) - pad;
          const std::ptrdiff_t ox = static_cast<std::ptrdiff_t>(dx) - pad;
          const std::size_t y0 = oy < 0 ? static_cast<std::size_t>(-oy) : 0;
          const std::size_t y1 = oy > 0 ? H - static_cast<std::size_t>(oy) : H;
          const std::size_t x0 = ox < 0 ? static_cast<std::size_t>(-ox) : 0;
          const std::size_t x1 = ox > 0 ? W - static_cast<std::size_t>(ox) : W;
          double acc = 0.0;
          for (std::size_t y = y0; y < y1; ++y) {
            const double* irow = iplane + static_cast<std::size_t>(static_cast<std::ptrdiff_t>(y) + oy) * W;
            const double* grow = gplane + y * W;
            for (std::size_t x = x0; x < x1; ++x) {
              acc += grow[x] * irow[static_cast<std::ptrdiff_t>(x) + ox];
            }
          }
          kw[dy * ks + dx] += acc;
        }
      }
    }
  }
}

}  // namespace noiseopt
