#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <string>

#include "gemino/tensor.hpp"

namespace gemino {

/// Square resolutions a session can operate at, indexed by resolution id.
inline constexpr std::array<int, 5> kResolutions = {64, 128, 256, 512, 1024};
inline constexpr std::uint8_t kNoResolutionId = 0xFF;

inline bool is_supported_resolution(int r) noexcept {
  for (int s : kResolutions) {
    if (s == r) return true;
  }
  return false;
}

inline std::uint8_t resolution_id(int r) noexcept {
  for (std::size_t i = 0; i < kResolutions.size(); ++i) {
    if (kResolutions[i] == r) return static_cast<std::uint8_t>(i);
  }
  return kNoResolutionId;
}

inline int resolution_from_id(std::uint8_t id) {
  if (id >= kResolutions.size()) throw FormatError("unknown resolution id " + std::to_string(id));
  return kResolutions[id];
}

/// Area-average reduction by an integer factor per axis.
inline Tensor downsample(const Tensor& frame, int out_h, int out_w) {
  if (out_h <= 0 || out_w <= 0 || out_h > frame.height() || out_w > frame.width()) {
    throw ShapeError("downsample: cannot resize " + frame.shape_string() + " to " + std::to_string(out_h) + "x" +
                     std::to_string(out_w) + " (upscaling is not a downsample)");
  }
  if (frame.height() % out_h != 0 || frame.width() % out_w != 0) {
    throw ShapeError("downsample: " + frame.shape_string() + " is not an integer multiple of the target");
  }
  const int fy = frame.height() / out_h;
  const int fx = frame.width() / out_w;
  if (fy == 1 && fx == 1) return frame;
  const float inv = 1.0f / static_cast<float>(fy * fx);
  Tensor out(frame.channels(), out_h, out_w);
  for (int c = 0; c < frame.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) {
        float s = 0.0f;
        for (int dy = 0; dy < fy; ++dy) {
          for (int dx = 0; dx < fx; ++dx) s += frame(c, y * fy + dy, x * fx + dx);
        }
        out(c, y, x) = s * inv;
      }
    }
  }
  return out;
}

/// Square downsample between supported session resolutions.
inline Tensor downsample(const Tensor& frame, int resolution) {
  if (!is_supported_resolution(resolution) || !is_supported_resolution(frame.height()) ||
      frame.height() != frame.width()) {
    throw ShapeError("downsample: " + frame.shape_string() + " -> " + std::to_string(resolution) +
                     " is not between supported square resolutions");
  }
  return downsample(frame, resolution, resolution);
}

namespace detail {

// Catmull-Rom weights (a = -0.5) for fractional offset t in [0, 1).
inline std::array<float, 4> cubic_weights(float t) noexcept {
  constexpr float a = -0.5f;
  const auto near = [](float x) { return ((a + 2.0f) * x - (a + 3.0f)) * x * x + 1.0f; };
  const auto far = [](float x) { return ((a * x - 5.0f * a) * x + 8.0f * a) * x - 4.0f * a; };
  return {far(t + 1.0f), near(t), near(1.0f - t), far(2.0f - t)};
}

struct CubicTap {
  std::array<int, 4> index;
  std::array<float, 4> weight;
};

inline std::vector<CubicTap> cubic_taps(int in_n, int out_n) {
  std::vector<CubicTap> taps(static_cast<std::size_t>(out_n));
  const double scale = static_cast<double>(in_n) / out_n;
  for (int o = 0; o < out_n; ++o) {
    const double src = (o + 0.5) * scale - 0.5;
    const double base = std::floor(src);
    const auto t = static_cast<float>(src - base);
    auto& tap = taps[o];
    tap.weight = cubic_weights(t);
    for (int k = 0; k < 4; ++k) tap.index[k] = std::clamp(static_cast<int>(base) - 1 + k, 0, in_n - 1);
  }
  return taps;
}

}  // namespace detail

/// Separable bicubic interpolation, border clamped, output clamped to [0, 1].
inline Tensor bicubic_upsample(const Tensor& frame, int out_h, int out_w) {
  if (out_h < frame.height() || out_w < frame.width()) {
    throw ShapeError("bicubic_upsample: target smaller than source " + frame.shape_string());
  }
  const auto ty = detail::cubic_taps(frame.height(), out_h);
  const auto tx = detail::cubic_taps(frame.width(), out_w);
  Tensor rows(frame.channels(), frame.height(), out_w);
  for (int c = 0; c < frame.channels(); ++c) {
    for (int y = 0; y < frame.height(); ++y) {
      for (int x = 0; x < out_w; ++x) {
        const auto& t = tx[x];
        float s = 0.0f;
        for (int k = 0; k < 4; ++k) s += t.weight[k] * frame(c, y, t.index[k]);
        rows(c, y, x) = s;
      }
    }
  }
  Tensor out(frame.channels(), out_h, out_w);
  for (int c = 0; c < frame.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      const auto& t = ty[y];
      for (int x = 0; x < out_w; ++x) {
        float s = 0.0f;
        for (int k = 0; k < 4; ++k) s += t.weight[k] * rows(c, t.index[k], x);
        out(c, y, x) = std::clamp(s, 0.0f, 1.0f);
      }
    }
  }
  return out;
}

inline Tensor bicubic_upsample(const Tensor& frame, int resolution) {
  return bicubic_upsample(frame, resolution, resolution);
}

/// Pixel replication by an integer factor.
inline Tensor nearest_upsample(const Tensor& frame, int out_h, int out_w) {
  if (out_h % frame.height() != 0 || out_w % frame.width() != 0) {
    throw ShapeError("nearest_upsample: target is not an integer multiple of " + frame.shape_string());
  }
  const int fy = out_h / frame.height();
  const int fx = out_w / frame.width();
  Tensor out(frame.channels(), out_h, out_w);
  for (int c = 0; c < frame.channels(); ++c) {
    for (int y = 0; y < out_h; ++y) {
      for (int x = 0; x < out_w; ++x) out(c, y, x) = frame(c, y / fy, x / fx);
    }
  }
  return out;
}

/// Box-average when shrinking by an integer factor, bilinear otherwise.
inline Tensor resample(const Tensor& frame, int out_h, int out_w) {
  if (frame.height() == out_h && frame.width() == out_w) return frame;
  if (out_h <= frame.height() && out_w <= frame.width() && frame.height() % out_h == 0 && frame.width() % out_w == 0) {
    return downsample(frame, out_h, out_w);
  }
  return resize_bilinear(frame, out_h, out_w);
}

inline Tensor clamp_unit(Tensor t) {
  for (float& v : t.values()) v = std::isnan(v) ? 0.0f : std::clamp(v, 0.0f, 1.0f);
  return t;
}

}  // namespace gemino
