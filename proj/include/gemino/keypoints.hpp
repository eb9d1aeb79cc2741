#pragma once

#include <array>
#include <string>

#include "gemino/unet.hpp"

namespace gemino {

inline constexpr int kNumKeypoints = 10;

struct Keypoint {
  float x = 0.0f;  // normalized, [-1, 1]
  float y = 0.0f;
  Mat2 jacobian;

  friend bool operator==(const Keypoint&, const Keypoint&) = default;
};

struct KeypointSet {
  std::array<Keypoint, kNumKeypoints> points{};

  /// All keypoints at `(x, y)` with identity jacobians.
  static KeypointSet uniform(float x = 0.0f, float y = 0.0f) {
    KeypointSet s;
    for (auto& p : s.points) p = {x, y, Mat2::identity()};
    return s;
  }

  friend bool operator==(const KeypointSet&, const KeypointSet&) = default;
};

/// Turns head outputs into keypoints: a spatial softmax per location channel
/// gives a probability map whose expectation over the pixel-center grid is the
/// keypoint location; the four jacobian maps of each keypoint are averaged
/// under that same probability map.
inline KeypointSet keypoints_from_heads(const Tensor& location_logits, const Tensor& jacobian_maps) {
  if (location_logits.channels() != kNumKeypoints) {
    throw ShapeError("keypoints: expected " + std::to_string(kNumKeypoints) + " location channels, got " +
                     location_logits.shape_string());
  }
  if (jacobian_maps.channels() != 4 * kNumKeypoints || jacobian_maps.height() != location_logits.height() ||
      jacobian_maps.width() != location_logits.width()) {
    throw ShapeError("keypoints: jacobian maps " + jacobian_maps.shape_string() + " do not match location logits " +
                     location_logits.shape_string());
  }
  const Tensor prob = softmax_spatial(location_logits);
  const int h = prob.height();
  const int w = prob.width();
  KeypointSet out;
  for (int k = 0; k < kNumKeypoints; ++k) {
    double sx = 0.0, sy = 0.0;
    double j[4] = {0.0, 0.0, 0.0, 0.0};
    for (int y = 0; y < h; ++y) {
      const double gy = pixel_center(y, h);
      for (int x = 0; x < w; ++x) {
        const double p = prob(k, y, x);
        sx += p * pixel_center(x, w);
        sy += p * gy;
        for (int e = 0; e < 4; ++e) j[e] += p * jacobian_maps(4 * k + e, y, x);
      }
    }
    auto& kp = out.points[k];
    kp.x = std::clamp(static_cast<float>(sx), -1.0f, 1.0f);
    kp.y = std::clamp(static_cast<float>(sy), -1.0f, 1.0f);
    kp.jacobian = {static_cast<float>(j[0]), static_cast<float>(j[1]), static_cast<float>(j[2]),
                   static_cast<float>(j[3])};
  }
  return out;
}

/// UNet trunk followed by a 7x7 location head (one channel per keypoint) and a
/// 7x7 jacobian head (four channels per keypoint). Parameters live under
/// `<prefix>.unet`, `<prefix>.kp_head` and `<prefix>.jacobian_head`.
class KeypointDetector {
 public:
  static constexpr int kHeadKernel = 7;

  static UNetConfig trunk_config() { return {3, 64, 5, 3}; }

  static void declare(ArchitectureSpec& spec, const std::string& prefix) {
    const UNetConfig cfg = trunk_config();
    UNetTrunk::declare(spec, prefix + ".unet", cfg);
    Conv2d::declare(spec, prefix + ".kp_head", kNumKeypoints, cfg.base_features, kHeadKernel);
    const int ch = cfg.base_features;
    spec.add(prefix + ".jacobian_head.weight", {4 * kNumKeypoints, ch, kHeadKernel, kHeadKernel},
             ParamRole::conv_weight, ch * kHeadKernel * kHeadKernel);
    spec.add(prefix + ".jacobian_head.bias", {4 * kNumKeypoints}, ParamRole::identity_2x2);
  }

  // Layers borrow parameter storage; the store must outlive the module.
  static KeypointDetector build(WeightStore&&, const std::string& prefix, int input_size = 64) = delete;
  static KeypointDetector build(const WeightStore& store, const std::string& prefix, int input_size = 64) {
    const UNetConfig cfg = trunk_config();
    KeypointDetector d;
    d.trunk_ = UNetTrunk::build(store, prefix + ".unet", cfg);
    d.location_ = Conv2d::bind(store, prefix + ".kp_head", kNumKeypoints, cfg.base_features, kHeadKernel);
    d.jacobian_ = Conv2d::bind(store, prefix + ".jacobian_head", 4 * kNumKeypoints, cfg.base_features, kHeadKernel);
    d.input_size_ = input_size;
    if (input_size <= 0 || input_size % cfg.spatial_multiple() != 0) {
      throw ShapeError("keypoint detector input size must be a positive multiple of " +
                       std::to_string(cfg.spatial_multiple()));
    }
    return d;
  }

  int input_size() const noexcept { return input_size_; }

  /// Same weights, operating on frames of a different size.
  KeypointDetector at_size(int input_size) const {
    KeypointDetector d = *this;
    d.input_size_ = input_size;
    return d;
  }

  KeypointSet detect(const Tensor& frame) const {
    if (frame.channels() != 3 || frame.height() != input_size_ || frame.width() != input_size_) {
      throw ShapeError("keypoint detector expects 3x" + std::to_string(input_size_) + "x" +
                       std::to_string(input_size_) + ", got " + frame.shape_string());
    }
    const Tensor features = trunk_.forward(frame);
    return keypoints_from_heads(location_(features), jacobian_(features));
  }

  double macs(int size) const noexcept {
    return trunk_.macs(size, size) + location_.macs(size, size) + jacobian_.macs(size, size);
  }

 private:
  UNetTrunk trunk_;
  Conv2d location_;
  Conv2d jacobian_;
  int input_size_ = 64;
};

}  // namespace gemino
