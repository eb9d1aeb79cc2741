#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "gemino/tensor.hpp"

namespace gemino {

enum class SyntheticStyle {
  talking_head,  // gradient backdrop, a moving head with eyes and a mouth, striped hair texture
  gradient,      // smooth drifting color gradient only
};

/// Deterministic procedural video. Frame t depends only on (seed, t, size),
/// so any resolution renders the same scene.
class SyntheticVideo {
 public:
  SyntheticVideo(int size, std::uint64_t seed, SyntheticStyle style = SyntheticStyle::talking_head)
      : size_(size), style_(style) {
    if (size <= 0) throw ShapeError("synthetic video: size must be positive");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (auto& c : corner_) {
      for (double& v : c) v = 0.15 + 0.7 * u(rng);
    }
    for (double& v : skin_) v = 0.45 + 0.4 * u(rng);
    for (double& v : hair_) v = 0.05 + 0.3 * u(rng);
    phase_ = 6.283185307179586 * u(rng);
    period_ = 40.0 + 40.0 * u(rng);
    stripe_freq_ = 40.0 + 30.0 * u(rng);
  }

  int size() const noexcept { return size_; }

  Frame frame(int t) const {
    Frame f(3, size_, size_);
    const double n = size_;
    const double aa = 1.5 / n;  // edge softening, about 1.5 pixels
    const double w = 6.283185307179586 * t / period_ + phase_;
    const double drift = 0.1 * std::sin(0.5 * w);
    const double cx = 0.5 + 0.08 * std::sin(w), cy = 0.52 + 0.04 * std::sin(1.7 * w);
    const double rx = 0.22, ry = 0.28;
    const double mouth_open = 0.015 + 0.02 * (0.5 + 0.5 * std::sin(3.1 * w));
    for (int y = 0; y < size_; ++y) {
      const double v = (y + 0.5) / n;
      for (int x = 0; x < size_; ++x) {
        const double u = (x + 0.5) / n;
        double rgb[3];
        const double gu = std::clamp(u + drift, 0.0, 1.0), gv = std::clamp(v - 0.5 * drift, 0.0, 1.0);
        for (int c = 0; c < 3; ++c) {
          rgb[c] = (1 - gu) * (1 - gv) * corner_[0][c] + gu * (1 - gv) * corner_[1][c] + (1 - gu) * gv * corner_[2][c] +
                   gu * gv * corner_[3][c];
        }
        if (style_ == SyntheticStyle::talking_head) {
          const auto inside = [&](double ex, double ey, double ax, double ay) {
            const double d = std::sqrt(((u - ex) / ax) * ((u - ex) / ax) + ((v - ey) / ay) * ((v - ey) / ay));
            return std::clamp((1.0 - d) * std::min(ax, ay) / aa + 0.5, 0.0, 1.0);
          };
          // Hair: a larger ellipse behind the head with fine stripes.
          const double hair = inside(cx, cy - 0.08, rx * 1.15, ry * 1.05);
          const double stripes = 0.5 + 0.5 * std::sin(stripe_freq_ * 6.283185307179586 * (u - cx) + 3.0 * v);
          for (int c = 0; c < 3; ++c) rgb[c] += hair * (hair_[c] * (0.7 + 0.3 * stripes) - rgb[c]);
          const double face = inside(cx, cy, rx, ry);
          const double shade = 0.85 + 0.15 * std::cos(3.0 * (u - cx)) * std::cos(2.0 * (v - cy));
          for (int c = 0; c < 3; ++c) rgb[c] += face * (skin_[c] * shade - rgb[c]);
          const double eyes = std::max(inside(cx - 0.08, cy - 0.06, 0.035, 0.02), inside(cx + 0.08, cy - 0.06, 0.035, 0.02));
          const double mouth = inside(cx, cy + 0.13, 0.07, mouth_open);
          const double dark = std::max(eyes, mouth) * face;
          for (int c = 0; c < 3; ++c) rgb[c] += dark * (0.08 + 0.1 * (c == 0) * mouth - rgb[c]);
        }
        for (int c = 0; c < 3; ++c) f(c, y, x) = static_cast<float>(std::clamp(rgb[c], 0.0, 1.0));
      }
    }
    return f;
  }

 private:
  int size_;
  SyntheticStyle style_;
  double corner_[4][3];
  double skin_[3];
  double hair_[3];
  double phase_;
  double period_;
  double stripe_freq_;
};

}  // namespace gemino
