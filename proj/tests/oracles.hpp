#pragma once

// Reference implementations used only by tests. Each one follows the textbook
// definition with plain loops and double accumulation, and shares no code with
// the library kernels it checks.

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "gemino/tensor.hpp"

namespace gemino::oracle {

inline Tensor random_tensor(int c, int h, int w, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  Tensor t(c, h, w);
  for (float& v : t.values()) v = dist(rng);
  return t;
}

inline std::vector<float> random_vector(std::size_t n, std::mt19937& rng, float lo = -1.0f, float hi = 1.0f) {
  std::uniform_real_distribution<float> dist(lo, hi);
  std::vector<float> v(n);
  for (float& x : v) x = dist(rng);
  return v;
}

inline Tensor conv2d(const Tensor& in, const std::vector<float>& weight, const std::vector<float>& bias, int out_ch,
                     int kh, int kw, int stride, int pad) {
  const int oh = (in.height() + 2 * pad - kh) / stride + 1;
  const int ow = (in.width() + 2 * pad - kw) / stride + 1;
  Tensor out(out_ch, oh, ow);
  for (int oc = 0; oc < out_ch; ++oc) {
    for (int oy = 0; oy < oh; ++oy) {
      for (int ox = 0; ox < ow; ++ox) {
        double acc = bias.empty() ? 0.0 : bias[oc];
        for (int ic = 0; ic < in.channels(); ++ic) {
          for (int ky = 0; ky < kh; ++ky) {
            for (int kx = 0; kx < kw; ++kx) {
              const int iy = oy * stride - pad + ky;
              const int ix = ox * stride - pad + kx;
              if (iy < 0 || ix < 0 || iy >= in.height() || ix >= in.width()) continue;
              acc += static_cast<double>(weight[((oc * in.channels() + ic) * kh + ky) * kw + kx]) * in(ic, iy, ix);
            }
          }
        }
        out(oc, oy, ox) = static_cast<float>(acc);
      }
    }
  }
  return out;
}

inline Tensor avgpool2(const Tensor& in) {
  Tensor out(in.channels(), in.height() / 2, in.width() / 2);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        double s = 0;
        for (int dy = 0; dy < 2; ++dy) {
          for (int dx = 0; dx < 2; ++dx) s += in(c, 2 * y + dy, 2 * x + dx);
        }
        out(c, y, x) = static_cast<float>(s / 4);
      }
    }
  }
  return out;
}

// Continuous-coordinate bilinear read with edge clamping, in pixel units.
inline double bilinear_at(const Tensor& in, int c, double py, double px) {
  py = std::min(std::max(py, 0.0), in.height() - 1.0);
  px = std::min(std::max(px, 0.0), in.width() - 1.0);
  const int y0 = static_cast<int>(std::floor(py));
  const int x0 = static_cast<int>(std::floor(px));
  const int y1 = std::min(y0 + 1, in.height() - 1);
  const int x1 = std::min(x0 + 1, in.width() - 1);
  const double fy = py - y0;
  const double fx = px - x0;
  return (1 - fy) * ((1 - fx) * in(c, y0, x0) + fx * in(c, y0, x1)) + fy * ((1 - fx) * in(c, y1, x0) + fx * in(c, y1, x1));
}

// Bilinear 2x upsample: output pixel o samples source position (o + 0.5) / 2 - 0.5.
inline Tensor upsample2_bilinear(const Tensor& in) {
  Tensor out(in.channels(), 2 * in.height(), 2 * in.width());
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < out.height(); ++y) {
      for (int x = 0; x < out.width(); ++x) {
        out(c, y, x) = static_cast<float>(bilinear_at(in, c, (y + 0.5) / 2 - 0.5, (x + 0.5) / 2 - 0.5));
      }
    }
  }
  return out;
}

// grid_sample straight from the definition: normalized coordinate u maps to
// pixel ((u + 1) * n - 1) / 2.
inline Tensor grid_sample(const Tensor& in, const WarpField& grid) {
  Tensor out(in.channels(), grid.height(), grid.width());
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < grid.height(); ++y) {
      for (int x = 0; x < grid.width(); ++x) {
        const double px = ((grid.x(y, x) + 1.0) * in.width() - 1.0) / 2.0;
        const double py = ((grid.y(y, x) + 1.0) * in.height() - 1.0) / 2.0;
        out(c, y, x) = static_cast<float>(bilinear_at(in, c, py, px));
      }
    }
  }
  return out;
}

inline Tensor softmax_channels(const Tensor& in) {
  Tensor out(in.channels(), in.height(), in.width());
  for (int y = 0; y < in.height(); ++y) {
    for (int x = 0; x < in.width(); ++x) {
      long double total = 0;
      for (int c = 0; c < in.channels(); ++c) total += std::exp(static_cast<long double>(in(c, y, x)));
      for (int c = 0; c < in.channels(); ++c) {
        out(c, y, x) = static_cast<float>(std::exp(static_cast<long double>(in(c, y, x))) / total);
      }
    }
  }
  return out;
}

inline Tensor softmax_spatial(const Tensor& in) {
  Tensor out(in.channels(), in.height(), in.width());
  for (int c = 0; c < in.channels(); ++c) {
    long double total = 0;
    for (float v : in.channel(c)) total += std::exp(static_cast<long double>(v));
    for (int y = 0; y < in.height(); ++y) {
      for (int x = 0; x < in.width(); ++x) {
        out(c, y, x) = static_cast<float>(std::exp(static_cast<long double>(in(c, y, x))) / total);
      }
    }
  }
  return out;
}

inline double max_abs_diff(const Tensor& a, const Tensor& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(static_cast<double>(a.values()[i]) - b.values()[i]));
  return m;
}

// Catmull-Rom kernel (a = -0.5) evaluated directly from its piecewise definition.
inline double keys_kernel(double x) {
  constexpr double a = -0.5;
  x = std::abs(x);
  if (x <= 1) return (a + 2) * x * x * x - (a + 3) * x * x + 1;
  if (x < 2) return a * x * x * x - 5 * a * x * x + 8 * a * x - 4 * a;
  return 0;
}

// Bicubic resize as a direct 2-D convolution with the Keys kernel over all
// source pixels (edge clamped by index), clamped to [0, 1].
inline Tensor bicubic(const Tensor& in, int oh, int ow) {
  Tensor out(in.channels(), oh, ow);
  for (int c = 0; c < in.channels(); ++c) {
    for (int y = 0; y < oh; ++y) {
      const double sy = (y + 0.5) * in.height() / oh - 0.5;
      for (int x = 0; x < ow; ++x) {
        const double sx = (x + 0.5) * in.width() / ow - 0.5;
        double acc = 0;
        for (int ky = static_cast<int>(std::floor(sy)) - 1; ky <= static_cast<int>(std::floor(sy)) + 2; ++ky) {
          for (int kx = static_cast<int>(std::floor(sx)) - 1; kx <= static_cast<int>(std::floor(sx)) + 2; ++kx) {
            const int cy = std::min(std::max(ky, 0), in.height() - 1);
            const int cx = std::min(std::max(kx, 0), in.width() - 1);
            acc += keys_kernel(sy - ky) * keys_kernel(sx - kx) * in(c, cy, cx);
          }
        }
        out(c, y, x) = static_cast<float>(std::min(std::max(acc, 0.0), 1.0));
      }
    }
  }
  return out;
}

}  // namespace gemino::oracle
