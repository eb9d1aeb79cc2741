#pragma once

#include <array>
#include <cmath>
#include <string>

#include "gemino/keypoints.hpp"

namespace gemino {

/// Number of sparse-motion candidates: one per keypoint plus the background.
inline constexpr int kNumMotions = kNumKeypoints + 1;
inline constexpr int kBackground = kNumKeypoints;
/// heatmap + 3 deformed RGB channels per candidate, then the 3-channel target.
inline constexpr int kMotionInputChannels = kNumMotions * (1 + 3) + 3;

inline constexpr float kHeatmapVariance = 0.01f;

/// Channel k < 10 is G(target_k) - G(reference_k) with
/// G(p)(z) = exp(-|z - p|^2 / (2 * sigma2)); channel 10 is zero.
inline Tensor gaussian_heatmaps(const KeypointSet& reference, const KeypointSet& target, int height, int width,
                                float sigma2 = kHeatmapVariance) {
  if (!(sigma2 > 0.0f)) throw ShapeError("gaussian_heatmaps: variance must be positive");
  Tensor out(kNumMotions, height, width);
  const float inv = 1.0f / (2.0f * sigma2);
  for (int k = 0; k < kNumKeypoints; ++k) {
    const auto& r = reference.points[k];
    const auto& t = target.points[k];
    for (int y = 0; y < height; ++y) {
      const float gy = pixel_center(y, height);
      for (int x = 0; x < width; ++x) {
        const float gx = pixel_center(x, width);
        const float dt = (gx - t.x) * (gx - t.x) + (gy - t.y) * (gy - t.y);
        const float dr = (gx - r.x) * (gx - r.x) + (gy - r.y) * (gy - r.y);
        out(k, y, x) = std::exp(-dt * inv) - std::exp(-dr * inv);
      }
    }
  }
  return out;
}

struct SparseMotion {
  std::array<WarpField, kNumMotions> candidates;
  bool degenerate = false;  // some target jacobian fell back to identity
};

/// Candidate k maps target-frame location z to
/// p_ref,k + J_ref,k * inverse(J_tgt,k) * (z - p_tgt,k); the background
/// candidate is the identity grid.
inline SparseMotion sparse_motion(const KeypointSet& reference, const KeypointSet& target, int height, int width) {
  SparseMotion motion;
  const WarpField identity = WarpField::identity(height, width);
  for (int k = 0; k < kNumKeypoints; ++k) {
    const auto& r = reference.points[k];
    const auto& t = target.points[k];
    const Mat2Inverse inv = mat2_inverse(t.jacobian);
    motion.degenerate = motion.degenerate || inv.degenerate;
    const Mat2 m = r.jacobian * inv.value;
    WarpField field(height, width);
    for (int y = 0; y < height; ++y) {
      for (int x = 0; x < width; ++x) {
        const float dx = identity.x(y, x) - t.x;
        const float dy = identity.y(y, x) - t.y;
        field.x(y, x) = r.x + m.a * dx + m.b * dy;
        field.y(y, x) = r.y + m.c * dx + m.d * dy;
      }
    }
    motion.candidates[k] = std::move(field);
  }
  motion.candidates[kBackground] = identity;
  return motion;
}

/// The reference warped by each candidate, concatenated: 11 x 3 channels.
inline Tensor deformed_references(const Tensor& reference, const SparseMotion& motion) {
  if (reference.channels() != 3) throw ShapeError("deformed_references: expected RGB, got " + reference.shape_string());
  const int h = motion.candidates[0].height();
  const int w = motion.candidates[0].width();
  Tensor out(3 * kNumMotions, h, w);
  float* dst = out.data();
  for (const auto& field : motion.candidates) {
    const Tensor warped = grid_sample(reference, field);
    dst = std::copy(warped.values().begin(), warped.values().end(), dst);
  }
  return out;
}

/// Interleaves [heatmap_k, deformed_k(RGB)] for every candidate and appends the
/// low-resolution target: 11 * 4 + 3 = 47 channels.
inline Tensor assemble_motion_input(const Tensor& heatmaps, const Tensor& deformed, const Tensor& target) {
  if (heatmaps.channels() != kNumMotions || deformed.channels() != 3 * kNumMotions || target.channels() != 3 ||
      !(heatmaps.height() == deformed.height() && deformed.height() == target.height()) ||
      !(heatmaps.width() == deformed.width() && deformed.width() == target.width())) {
    throw ShapeError("assemble_motion_input: incompatible parts " + heatmaps.shape_string() + ", " +
                     deformed.shape_string() + ", " + target.shape_string());
  }
  Tensor out(kMotionInputChannels, target.height(), target.width());
  const std::size_t plane = target.plane_size();
  float* dst = out.data();
  for (int k = 0; k < kNumMotions; ++k) {
    dst = std::copy_n(heatmaps.channel(k).data(), plane, dst);
    dst = std::copy_n(deformed.channel(3 * k).data(), 3 * plane, dst);
  }
  std::copy_n(target.data(), 3 * plane, dst);
  return out;
}

/// Three pixelwise weights: A (warped HR), B (unwarped HR), C (LR); they sum
/// to one at every pixel.
struct OcclusionMasks {
  Tensor masks;  // 3 x H x W

  int height() const noexcept { return masks.height(); }
  int width() const noexcept { return masks.width(); }
  float warped(int y, int x) const noexcept { return masks(0, y, x); }
  float unwarped(int y, int x) const noexcept { return masks(1, y, x); }
  float low_res(int y, int x) const noexcept { return masks(2, y, x); }

  static OcclusionMasks constant(int h, int w, float a, float b, float c) {
    OcclusionMasks m{Tensor(3, h, w)};
    std::fill(m.masks.channel(0).begin(), m.masks.channel(0).end(), a);
    std::fill(m.masks.channel(1).begin(), m.masks.channel(1).end(), b);
    std::fill(m.masks.channel(2).begin(), m.masks.channel(2).end(), c);
    return m;
  }
};

struct MotionOutput {
  WarpField warp;
  OcclusionMasks occlusion;
  Tensor deformation;  // 11 x H x W softmax weights
  bool degenerate = false;
};

/// Softmax-weighted blend of the candidates: warp(z) = sum_k w_k(z) * candidate_k(z).
inline WarpField blend_motion(const SparseMotion& motion, const Tensor& weights) {
  const int h = motion.candidates[0].height();
  const int w = motion.candidates[0].width();
  if (weights.channels() != kNumMotions || weights.height() != h || weights.width() != w) {
    throw ShapeError("blend_motion: weights " + weights.shape_string() + " do not match candidates");
  }
  WarpField out(h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      float sx = 0.0f, sy = 0.0f;
      for (int k = 0; k < kNumMotions; ++k) {
        const float p = weights(k, y, x);
        sx += p * motion.candidates[k].x(y, x);
        sy += p * motion.candidates[k].y(y, x);
      }
      out.x(y, x) = sx;
      out.y(y, x) = sy;
    }
  }
  return out;
}

/// Per-head sigmoid followed by a joint three-way channel softmax.
inline OcclusionMasks occlusion_from_logits(const Tensor& logits) {
  if (logits.channels() != 3) throw ShapeError("occlusion logits must have 3 channels, got " + logits.shape_string());
  return {softmax_channels(sigmoid(logits))};
}

/// Post-processing shared by the network path and tests that force head outputs.
inline MotionOutput combine_motion(const SparseMotion& motion, const Tensor& deformation_logits,
                                   const Tensor& occlusion_logits) {
  MotionOutput out;
  out.deformation = softmax_channels(deformation_logits);
  out.warp = blend_motion(motion, out.deformation);
  out.occlusion = occlusion_from_logits(occlusion_logits);
  out.degenerate = motion.degenerate;
  return out;
}

/// UNet over the 47-channel motion input with a 7x7 deformation head (11
/// channels) and three 7x7 single-channel occlusion heads. Parameters live
/// under `<prefix>.unet`, `<prefix>.deformation_head` and
/// `<prefix>.occlusion_head{0,1,2}`.
class MotionEstimator {
 public:
  static constexpr int kHeadKernel = 7;

  static UNetConfig trunk_config() { return {kMotionInputChannels, 64, 5, 3}; }

  static void declare(ArchitectureSpec& spec, const std::string& prefix) {
    const UNetConfig cfg = trunk_config();
    UNetTrunk::declare(spec, prefix + ".unet", cfg);
    Conv2d::declare(spec, prefix + ".deformation_head", kNumMotions, cfg.base_features, kHeadKernel);
    for (int i = 0; i < 3; ++i) {
      Conv2d::declare(spec, prefix + ".occlusion_head" + std::to_string(i), 1, cfg.base_features, kHeadKernel);
    }
  }

  // Layers borrow parameter storage; the store must outlive the module.
  static MotionEstimator build(WeightStore&&, const std::string& prefix) = delete;
  static MotionEstimator build(const WeightStore& store, const std::string& prefix) {
    const UNetConfig cfg = trunk_config();
    MotionEstimator m;
    m.trunk_ = UNetTrunk::build(store, prefix + ".unet", cfg);
    m.deformation_ = Conv2d::bind(store, prefix + ".deformation_head", kNumMotions, cfg.base_features, kHeadKernel);
    for (int i = 0; i < 3; ++i) {
      m.occlusion_[i] =
          Conv2d::bind(store, prefix + ".occlusion_head" + std::to_string(i), 1, cfg.base_features, kHeadKernel);
    }
    return m;
  }

  /// The 47-channel tensor fed to the trunk.
  static Tensor motion_input(const Tensor& reference, const Tensor& target, const KeypointSet& kp_reference,
                             const KeypointSet& kp_target, SparseMotion* motion_out = nullptr) {
    if (reference.channels() != 3 || !reference.same_shape(target)) {
      throw ShapeError("motion estimator: reference " + reference.shape_string() + " and target " +
                       target.shape_string() + " must both be RGB of equal size");
    }
    const int h = reference.height();
    const int w = reference.width();
    SparseMotion motion = sparse_motion(kp_reference, kp_target, h, w);
    const Tensor heat = gaussian_heatmaps(kp_reference, kp_target, h, w);
    const Tensor deformed = deformed_references(reference, motion);
    Tensor input = assemble_motion_input(heat, deformed, target);
    if (motion_out) *motion_out = std::move(motion);
    return input;
  }

  MotionOutput estimate(const Tensor& reference, const Tensor& target, const KeypointSet& kp_reference,
                        const KeypointSet& kp_target) const {
    SparseMotion motion;
    const Tensor input = motion_input(reference, target, kp_reference, kp_target, &motion);
    const Tensor features = trunk_.forward(input);
    Tensor occlusion(3, features.height(), features.width());
    for (int i = 0; i < 3; ++i) {
      const Tensor head = occlusion_[i](features);
      std::copy(head.values().begin(), head.values().end(), occlusion.channel(i).begin());
    }
    return combine_motion(motion, deformation_(features), occlusion);
  }

  double macs(int size) const noexcept {
    double total = trunk_.macs(size, size) + deformation_.macs(size, size);
    for (const auto& head : occlusion_) total += head.macs(size, size);
    return total;
  }

 private:
  UNetTrunk trunk_;
  Conv2d deformation_;
  std::array<Conv2d, 3> occlusion_;
};

}  // namespace gemino
