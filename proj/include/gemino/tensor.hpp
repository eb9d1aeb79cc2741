#pragma once

// Dense CHW float tensors and the deterministic kernels every model stage is
// built from. All kernels are pure functions: they never mutate their inputs
// unless the name ends in `_inplace`.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "gemino/error.hpp"

namespace gemino {

class Tensor {
 public:
  Tensor() = default;
  Tensor(int channels, int height, int width, float fill = 0.0f)
      : channels_(channels), height_(height), width_(width) {
    if (channels < 0 || height < 0 || width < 0) {
      throw ShapeError("tensor dimensions must be non-negative");
    }
    data_.assign(static_cast<std::size_t>(channels) * height * width, fill);
  }
  Tensor(int channels, int height, int width, std::vector<float> values)
      : channels_(channels), height_(height), width_(width), data_(std::move(values)) {
    if (data_.size() != static_cast<std::size_t>(channels) * height * width) {
      throw ShapeError("tensor value count does not match " + shape_string());
    }
  }

  int channels() const noexcept { return channels_; }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t plane_size() const noexcept { return static_cast<std::size_t>(height_) * width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  float* data() noexcept { return data_.data(); }
  const float* data() const noexcept { return data_.data(); }
  std::span<float> values() noexcept { return data_; }
  std::span<const float> values() const noexcept { return data_; }

  std::span<float> channel(int c) noexcept {
    return {data_.data() + c * plane_size(), plane_size()};
  }
  std::span<const float> channel(int c) const noexcept {
    return {data_.data() + c * plane_size(), plane_size()};
  }

  float& operator()(int c, int y, int x) noexcept {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }
  float operator()(int c, int y, int x) const noexcept {
    return data_[(static_cast<std::size_t>(c) * height_ + y) * width_ + x];
  }

  bool same_shape(const Tensor& other) const noexcept {
    return channels_ == other.channels_ && height_ == other.height_ && width_ == other.width_;
  }

  std::string shape_string() const {
    return std::to_string(channels_) + "x" + std::to_string(height_) + "x" + std::to_string(width_);
  }

  void clamp(float lo, float hi) noexcept {
    for (float& v : data_) v = std::clamp(v, lo, hi);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  int channels_ = 0;
  int height_ = 0;
  int width_ = 0;
  std::vector<float> data_;
};

/// A 3-channel image with samples nominally in [0, 1].
using Frame = Tensor;

/// Per-pixel sampling coordinates in normalized [-1, 1] space. Entry
/// (y, x) holds the (x, y) location in the source image that output pixel
/// (y, x) reads from.
class WarpField {
 public:
  WarpField() = default;
  WarpField(int height, int width)
      : height_(height), width_(width), xy_(static_cast<std::size_t>(height) * width * 2, 0.0f) {}

  static WarpField identity(int height, int width);

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  float& x(int y, int x) noexcept { return xy_[(static_cast<std::size_t>(y) * width_ + x) * 2]; }
  float& y(int y, int x) noexcept { return xy_[(static_cast<std::size_t>(y) * width_ + x) * 2 + 1]; }
  float x(int y, int x) const noexcept { return xy_[(static_cast<std::size_t>(y) * width_ + x) * 2]; }
  float y(int y, int x) const noexcept { return xy_[(static_cast<std::size_t>(y) * width_ + x) * 2 + 1]; }
  std::span<float> values() noexcept { return xy_; }
  std::span<const float> values() const noexcept { return xy_; }

  friend bool operator==(const WarpField&, const WarpField&) = default;

 private:
  int height_ = 0;
  int width_ = 0;
  std::vector<float> xy_;
};

/// Normalized coordinate of pixel center `i` on an axis of `n` samples
/// (align-corners-false convention).
inline float pixel_center(int i, int n) noexcept {
  return (2.0f * static_cast<float>(i) + 1.0f) / static_cast<float>(n) - 1.0f;
}

/// Inverse of pixel_center: continuous pixel index of normalized coordinate `u`.
inline float unnormalize(float u, int n) noexcept {
  return ((u + 1.0f) * static_cast<float>(n) - 1.0f) * 0.5f;
}

inline WarpField WarpField::identity(int height, int width) {
  WarpField field(height, width);
  for (int y = 0; y < height; ++y) {
    const float gy = pixel_center(y, height);
    for (int x = 0; x < width; ++x) {
      field.x(y, x) = pixel_center(x, width);
      field.y(y, x) = gy;
    }
  }
  return field;
}

/// Read-only view of a convolution's parameters. Weight layout is
/// [out_channels][in_channels][kernel_h][kernel_w].
struct ConvKernel {
  std::span<const float> weight;
  std::span<const float> bias;  // empty means no bias
  int out_channels = 0;
  int in_channels = 0;
  int kernel_h = 0;
  int kernel_w = 0;
};

namespace detail {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Upper bound on the im2col scratch buffer, in floats (64 MiB).
inline constexpr std::size_t kIm2colBudget = std::size_t{16} << 20;

inline void require_finite_dims(const Tensor& t, const char* what) {
  if (t.empty()) throw ShapeError(std::string(what) + ": empty input tensor");
}

// Positions within a few float ulps of a texel center (the rounding left by
// normalizing and unnormalizing pixel centers) read that texel exactly.
inline float snap_to_texel(float p, int n) noexcept {
  const float nearest = std::round(p);
  const float tol = 4.0f * std::numeric_limits<float>::epsilon() * static_cast<float>(n);
  return std::abs(p - nearest) <= tol ? nearest : p;
}

}  // namespace detail

/// 2-D cross-correlation with zero padding, computed as tiled im2col + GEMM.
inline Tensor conv2d(const Tensor& input, const ConvKernel& kernel, int stride = 1, int padding = 0) {
  if (kernel.in_channels != input.channels()) {
    throw ShapeError("conv2d: kernel expects " + std::to_string(kernel.in_channels) +
                     " input channels but input is " + input.shape_string());
  }
  if (kernel.kernel_h % 2 == 0 || kernel.kernel_w % 2 == 0 || kernel.kernel_h < 1 || kernel.kernel_w < 1) {
    throw ShapeError("conv2d: kernel dimensions must be odd");
  }
  if (stride < 1 || padding < 0) throw ShapeError("conv2d: stride must be >= 1 and padding >= 0");
  const std::size_t k_size = static_cast<std::size_t>(kernel.in_channels) * kernel.kernel_h * kernel.kernel_w;
  if (kernel.weight.size() != k_size * kernel.out_channels) {
    throw ShapeError("conv2d: weight block has " + std::to_string(kernel.weight.size()) + " values, expected " +
                     std::to_string(k_size * kernel.out_channels));
  }
  if (!kernel.bias.empty() && kernel.bias.size() != static_cast<std::size_t>(kernel.out_channels)) {
    throw ShapeError("conv2d: bias length does not match output channels");
  }
  const int in_h = input.height();
  const int in_w = input.width();
  const int out_h = (in_h + 2 * padding - kernel.kernel_h) / stride + 1;
  const int out_w = (in_w + 2 * padding - kernel.kernel_w) / stride + 1;
  if (out_h <= 0 || out_w <= 0) throw ShapeError("conv2d: kernel larger than padded input");

  Tensor output(kernel.out_channels, out_h, out_w);
  const std::size_t out_plane = output.plane_size();

  Eigen::Map<const detail::RowMatrix> weights(kernel.weight.data(), kernel.out_channels,
                                              static_cast<Eigen::Index>(k_size));

  // Tile over whole output rows so the scratch matrix stays bounded.
  const std::size_t row_cost = k_size * static_cast<std::size_t>(out_w);
  const int rows_per_tile = static_cast<int>(std::clamp<std::size_t>(detail::kIm2colBudget / row_cost, 1, out_h));
  detail::RowMatrix columns(static_cast<Eigen::Index>(k_size), static_cast<Eigen::Index>(rows_per_tile) * out_w);

  for (int row0 = 0; row0 < out_h; row0 += rows_per_tile) {
    const int rows = std::min(rows_per_tile, out_h - row0);
    const int tile = rows * out_w;
    for (int ic = 0; ic < kernel.in_channels; ++ic) {
      const float* plane = input.channel(ic).data();
      for (int ky = 0; ky < kernel.kernel_h; ++ky) {
        for (int kx = 0; kx < kernel.kernel_w; ++kx) {
          const std::size_t k_row = (static_cast<std::size_t>(ic) * kernel.kernel_h + ky) * kernel.kernel_w + kx;
          float* dst = columns.data() + k_row * columns.cols();
          for (int r = 0; r < rows; ++r) {
            const int iy = (row0 + r) * stride - padding + ky;
            float* dst_row = dst + static_cast<std::size_t>(r) * out_w;
            if (iy < 0 || iy >= in_h) {
              std::fill(dst_row, dst_row + out_w, 0.0f);
              continue;
            }
            const float* src_row = plane + static_cast<std::size_t>(iy) * in_w;
            for (int ox = 0; ox < out_w; ++ox) {
              const int ix = ox * stride - padding + kx;
              dst_row[ox] = (ix >= 0 && ix < in_w) ? src_row[ix] : 0.0f;
            }
          }
        }
      }
    }
    Eigen::Map<detail::RowMatrix, 0, Eigen::OuterStride<>> out_block(
        output.data() + static_cast<std::size_t>(row0) * out_w, kernel.out_channels, tile,
        Eigen::OuterStride<>(static_cast<Eigen::Index>(out_plane)));
    out_block.noalias() = weights * columns.leftCols(tile);
  }

  if (!kernel.bias.empty()) {
    for (int oc = 0; oc < kernel.out_channels; ++oc) {
      const float b = kernel.bias[oc];
      for (float& v : output.channel(oc)) v += b;
    }
  }
  return output;
}

/// Per-channel affine normalization with frozen statistics.
struct BatchNormParams {
  std::span<const float> mean;
  std::span<const float> var;
  std::span<const float> gamma;
  std::span<const float> beta;
  float eps = 1e-5f;
};

inline void batchnorm_infer_inplace(Tensor& t, const BatchNormParams& p) {
  const auto c = static_cast<std::size_t>(t.channels());
  if (p.mean.size() != c || p.var.size() != c || p.gamma.size() != c || p.beta.size() != c) {
    throw ShapeError("batchnorm: parameter lengths must equal channel count " + std::to_string(c));
  }
  for (std::size_t ch = 0; ch < c; ++ch) {
    if (!(p.var[ch] >= 0.0f)) {
      throw ShapeError("batchnorm: negative variance in channel " + std::to_string(ch));
    }
  }
  for (int ch = 0; ch < t.channels(); ++ch) {
    const float scale = p.gamma[ch] / std::sqrt(p.var[ch] + p.eps);
    const float shift = p.beta[ch] - p.mean[ch] * scale;
    for (float& v : t.channel(ch)) v = v * scale + shift;
  }
}

inline Tensor batchnorm_infer(const Tensor& input, const BatchNormParams& p) {
  Tensor out = input;
  batchnorm_infer_inplace(out, p);
  return out;
}

inline void relu_inplace(Tensor& t) noexcept {
  for (float& v : t.values()) v = std::max(v, 0.0f);
}

inline Tensor relu(const Tensor& input) {
  Tensor out = input;
  relu_inplace(out);
  return out;
}

inline float sigmoid(float x) noexcept {
  return x >= 0.0f ? 1.0f / (1.0f + std::exp(-x)) : std::exp(x) / (1.0f + std::exp(x));
}

inline void sigmoid_inplace(Tensor& t) noexcept {
  for (float& v : t.values()) v = sigmoid(v);
}

inline Tensor sigmoid(const Tensor& input) {
  Tensor out = input;
  sigmoid_inplace(out);
  return out;
}

/// 2x2 average pooling with stride 2.
inline Tensor avgpool2(const Tensor& input) {
  detail::require_finite_dims(input, "avgpool2");
  if (input.height() % 2 != 0 || input.width() % 2 != 0) {
    throw ShapeError("avgpool2: spatial dims must be even, got " + input.shape_string());
  }
  const int oh = input.height() / 2;
  const int ow = input.width() / 2;
  Tensor out(input.channels(), oh, ow);
  for (int c = 0; c < input.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      for (int x = 0; x < ow; ++x) {
        const float s = input(c, 2 * y, 2 * x) + input(c, 2 * y, 2 * x + 1) + input(c, 2 * y + 1, 2 * x) +
                        input(c, 2 * y + 1, 2 * x + 1);
        out(c, y, x) = 0.25f * s;
      }
    }
  }
  return out;
}

enum class UpsampleMode { nearest, bilinear };

namespace detail {

// Source taps and weights for align-corners-false linear resampling of one axis.
struct LinearTap {
  int i0;
  int i1;
  float w1;
};

inline std::vector<LinearTap> linear_taps(int in_n, int out_n) {
  std::vector<LinearTap> taps(static_cast<std::size_t>(out_n));
  const float scale = static_cast<float>(in_n) / static_cast<float>(out_n);
  for (int o = 0; o < out_n; ++o) {
    float src = (static_cast<float>(o) + 0.5f) * scale - 0.5f;
    src = std::clamp(src, 0.0f, static_cast<float>(in_n - 1));
    const int i0 = static_cast<int>(std::floor(src));
    const int i1 = std::min(i0 + 1, in_n - 1);
    taps[o] = {i0, i1, src - static_cast<float>(i0)};
  }
  return taps;
}

}  // namespace detail

/// Bilinear resize to an arbitrary size (align-corners-false, edge clamped,
/// no antialiasing).
inline Tensor resize_bilinear(const Tensor& input, int out_h, int out_w) {
  detail::require_finite_dims(input, "resize_bilinear");
  if (out_h <= 0 || out_w <= 0) throw ShapeError("resize_bilinear: target dims must be positive");
  const auto ty = detail::linear_taps(input.height(), out_h);
  const auto tx = detail::linear_taps(input.width(), out_w);
  Tensor out(input.channels(), out_h, out_w);
  for (int c = 0; c < input.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      const auto& a = ty[y];
      for (int x = 0; x < out_w; ++x) {
        const auto& b = tx[x];
        const float top = input(c, a.i0, b.i0) * (1.0f - b.w1) + input(c, a.i0, b.i1) * b.w1;
        const float bottom = input(c, a.i1, b.i0) * (1.0f - b.w1) + input(c, a.i1, b.i1) * b.w1;
        out(c, y, x) = top * (1.0f - a.w1) + bottom * a.w1;
      }
    }
  }
  return out;
}

inline Tensor upsample2(const Tensor& input, UpsampleMode mode) {
  detail::require_finite_dims(input, "upsample2");
  if (mode == UpsampleMode::bilinear) return resize_bilinear(input, input.height() * 2, input.width() * 2);
  Tensor out(input.channels(), input.height() * 2, input.width() * 2);
  for (int c = 0; c < input.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) out(c, y, x) = input(c, y / 2, x / 2);
    }
  }
  return out;
}

/// Softmax across channels at every pixel.
inline Tensor softmax_channels(const Tensor& input) {
  detail::require_finite_dims(input, "softmax_channels");
  Tensor out(input.channels(), input.height(), input.width());
  const std::size_t plane = input.plane_size();
  const int channels = input.channels();
  for (std::size_t p = 0; p < plane; ++p) {
    float peak = -std::numeric_limits<float>::infinity();
    for (int c = 0; c < channels; ++c) peak = std::max(peak, input.data()[c * plane + p]);
    double total = 0.0;
    for (int c = 0; c < channels; ++c) {
      const float e = std::exp(input.data()[c * plane + p] - peak);
      out.data()[c * plane + p] = e;
      total += e;
    }
    const auto inv = static_cast<float>(1.0 / total);
    for (int c = 0; c < channels; ++c) out.data()[c * plane + p] *= inv;
  }
  return out;
}

/// Softmax over all pixels of each channel independently.
inline Tensor softmax_spatial(const Tensor& input) {
  detail::require_finite_dims(input, "softmax_spatial");
  Tensor out(input.channels(), input.height(), input.width());
  for (int c = 0; c < input.channels(); ++c) {
    const auto src = input.channel(c);
    auto dst = out.channel(c);
    const float peak = *std::max_element(src.begin(), src.end());
    double total = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) {
      dst[i] = std::exp(src[i] - peak);
      total += dst[i];
    }
    const auto inv = static_cast<float>(1.0 / total);
    for (float& v : dst) v *= inv;
  }
  return out;
}

/// Bilinear sampling of `input` at normalized coordinates; coordinates outside
/// the image clamp to the border texels. Output has the grid's spatial size.
inline Tensor grid_sample(const Tensor& input, const WarpField& grid) {
  detail::require_finite_dims(input, "grid_sample");
  const int in_h = input.height();
  const int in_w = input.width();
  Tensor out(input.channels(), grid.height(), grid.width());
  const std::size_t in_plane = input.plane_size();
  const std::size_t out_plane = out.plane_size();
  const float max_x = static_cast<float>(in_w - 1);
  const float max_y = static_cast<float>(in_h - 1);
  for (int y = 0; y < grid.height(); ++y) {
    for (int x = 0; x < grid.width(); ++x) {
      float px = detail::snap_to_texel(unnormalize(grid.x(y, x), in_w), in_w);
      float py = detail::snap_to_texel(unnormalize(grid.y(y, x), in_h), in_h);
      // NaN coordinates sample the origin rather than propagating.
      px = std::isnan(px) ? 0.0f : std::clamp(px, 0.0f, max_x);
      py = std::isnan(py) ? 0.0f : std::clamp(py, 0.0f, max_y);
      const int x0 = static_cast<int>(std::floor(px));
      const int y0 = static_cast<int>(std::floor(py));
      const int x1 = std::min(x0 + 1, in_w - 1);
      const int y1 = std::min(y0 + 1, in_h - 1);
      const float wx = px - static_cast<float>(x0);
      const float wy = py - static_cast<float>(y0);
      const float w00 = (1.0f - wx) * (1.0f - wy);
      const float w01 = wx * (1.0f - wy);
      const float w10 = (1.0f - wx) * wy;
      const float w11 = wx * wy;
      const std::size_t i00 = static_cast<std::size_t>(y0) * in_w + x0;
      const std::size_t i01 = static_cast<std::size_t>(y0) * in_w + x1;
      const std::size_t i10 = static_cast<std::size_t>(y1) * in_w + x0;
      const std::size_t i11 = static_cast<std::size_t>(y1) * in_w + x1;
      const std::size_t o = static_cast<std::size_t>(y) * grid.width() + x;
      for (int c = 0; c < input.channels(); ++c) {
        const float* src = input.data() + c * in_plane;
        out.data()[c * out_plane + o] = w00 * src[i00] + w01 * src[i01] + w10 * src[i10] + w11 * src[i11];
      }
    }
  }
  return out;
}

/// Bilinear resize of a sampling field; coordinates are resolution-free so the
/// values are interpolated, not rescaled.
inline WarpField resize_warp(const WarpField& field, int out_h, int out_w) {
  if (field.height() == out_h && field.width() == out_w) return field;
  Tensor planes(2, field.height(), field.width());
  for (int y = 0; y < field.height(); ++y) {
    for (int x = 0; x < field.width(); ++x) {
      planes(0, y, x) = field.x(y, x);
      planes(1, y, x) = field.y(y, x);
    }
  }
  const Tensor resized = resize_bilinear(planes, out_h, out_w);
  WarpField out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      out.x(y, x) = resized(0, y, x);
      out.y(y, x) = resized(1, y, x);
    }
  }
  return out;
}

/// Channel-wise concatenation; spatial dims must agree.
inline Tensor concat_channels(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
  const int h = parts.front()->height();
  const int w = parts.front()->width();
  int channels = 0;
  for (const Tensor* t : parts) {
    if (t->height() != h || t->width() != w) {
      throw ShapeError("concat_channels: spatial mismatch " + t->shape_string() + " vs " +
                       parts.front()->shape_string());
    }
    channels += t->channels();
  }
  Tensor out(channels, h, w);
  float* dst = out.data();
  for (const Tensor* t : parts) dst = std::copy(t->values().begin(), t->values().end(), dst);
  return out;
}

inline Tensor concat_channels(const Tensor& a, const Tensor& b) {
  const Tensor* parts[] = {&a, &b};
  return concat_channels(parts);
}

/// Row-major 2x2 matrix [[a, b], [c, d]].
struct Mat2 {
  float a = 1.0f;
  float b = 0.0f;
  float c = 0.0f;
  float d = 1.0f;

  static constexpr Mat2 identity() noexcept { return {}; }
  float det() const noexcept { return a * d - b * c; }
  friend bool operator==(const Mat2&, const Mat2&) = default;
};

inline Mat2 operator*(const Mat2& l, const Mat2& r) noexcept {
  return {l.a * r.a + l.b * r.c, l.a * r.b + l.b * r.d, l.c * r.a + l.d * r.c, l.c * r.b + l.d * r.d};
}

struct Mat2Inverse {
  Mat2 value;
  bool degenerate = false;
};

/// Inverse of `m`; falls back to identity (and flags it) when |det| < eps.
inline Mat2Inverse mat2_inverse(const Mat2& m, float eps = 1e-6f) noexcept {
  const float det = m.det();
  if (!(std::abs(det) >= eps)) return {Mat2::identity(), true};
  const float inv = 1.0f / det;
  return {{m.d * inv, -m.b * inv, -m.c * inv, m.a * inv}, false};
}

}  // namespace gemino
