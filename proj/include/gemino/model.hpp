#pragma once

#include <memory>
#include <string>

#include "gemino/synthesizer.hpp"

namespace gemino {

/// Full receiver-side model: keypoint detector (`kp.*`), motion estimator
/// (`motion.*`) and synthesizer (`synth.*`), sharing one weight store.
class GeminoModel {
 public:
  static constexpr int kDefaultMotionResolution = 64;

  static ArchitectureSpec architecture(const SynthesizerConfig& cfg) {
    ArchitectureSpec spec;
    KeypointDetector::declare(spec, "kp");
    MotionEstimator::declare(spec, "motion");
    Synthesizer::declare(spec, "synth", cfg);
    return spec;
  }

  /// `motion_resolution` other than 64 is a diagnostic configuration that runs
  /// keypoint detection and motion estimation at that size.
  static GeminoModel build(std::shared_ptr<const WeightStore> store, const SynthesizerConfig& cfg,
                           int motion_resolution = kDefaultMotionResolution) {
    if (!store) throw Error("GeminoModel: null weight store");
    if (motion_resolution < 64 || motion_resolution > cfg.output_resolution) {
      throw ShapeError("GeminoModel: motion resolution must lie in [64, output resolution]");
    }
    GeminoModel m;
    m.store_ = std::move(store);
    m.detector_ = KeypointDetector::build(*m.store_, "kp", motion_resolution);
    m.motion_ = MotionEstimator::build(*m.store_, "motion");
    m.synth_ = Synthesizer::build(*m.store_, "synth", cfg);
    m.motion_resolution_ = motion_resolution;
    return m;
  }

  static GeminoModel random(const SynthesizerConfig& cfg, std::uint64_t seed,
                            int motion_resolution = kDefaultMotionResolution) {
    auto store = std::make_shared<const WeightStore>(random_init(architecture(cfg), seed));
    return build(std::move(store), cfg, motion_resolution);
  }

  /// Same weights, different motion operating resolution.
  GeminoModel with_motion_resolution(int motion_resolution) const {
    GeminoModel m = *this;
    m.detector_ = detector_.at_size(motion_resolution);
    m.motion_resolution_ = motion_resolution;
    return m;
  }

  const SynthesizerConfig& config() const noexcept { return synth_.config(); }
  int motion_resolution() const noexcept { return motion_resolution_; }
  const KeypointDetector& detector() const noexcept { return detector_; }
  const MotionEstimator& motion_estimator() const noexcept { return motion_; }
  const Synthesizer& synthesizer() const noexcept { return synth_; }
  const WeightStore& weights() const noexcept { return *store_; }

  Tensor to_motion_resolution(const Tensor& frame) const {
    return resample(frame, motion_resolution_, motion_resolution_);
  }

  KeypointSet keypoints(const Tensor& frame) const { return detector_.detect(to_motion_resolution(frame)); }

  ReferenceEncoding encode_reference(const Tensor& reference) const { return synth_.encode_reference(reference); }

  /// Warp field and masks at the motion resolution.
  MotionOutput estimate_motion(const Tensor& reference, const Tensor& target_lr, const KeypointSet& kp_reference,
                               const KeypointSet& kp_target) const {
    return motion_.estimate(to_motion_resolution(reference), to_motion_resolution(target_lr), kp_reference,
                            kp_target);
  }

  Tensor predict(const Tensor& reference, const Tensor& target_lr, const KeypointSet& kp_reference,
                 const KeypointSet& kp_target, const ReferenceEncoding* cached = nullptr,
                 SynthesisTrace* trace = nullptr) const {
    try {
      const MotionOutput motion = estimate_motion(reference, target_lr, kp_reference, kp_target);
      const auto [warp, masks] = to_bottleneck(motion);
      const ReferenceEncoding local = cached ? ReferenceEncoding{} : synth_.encode_reference(reference);
      return synth_.synthesize(cached ? *cached : local, target_lr, warp, masks, trace);
    } catch (const ShapeError& e) {
      throw ShapeError(std::string("predict: ") + e.what());
    }
  }

  /// Keypoint-only baseline: no low-resolution pathway. The motion estimator
  /// sees a black target, mask C is forced to zero and A, B renormalized.
  Tensor predict_keypoints_only(const Tensor& reference, const KeypointSet& kp_reference,
                                const KeypointSet& kp_target, const ReferenceEncoding* cached = nullptr) const {
    const Tensor blank(3, motion_resolution_, motion_resolution_);
    const MotionOutput motion =
        motion_.estimate(to_motion_resolution(reference), blank, kp_reference, kp_target);
    auto [warp, masks] = to_bottleneck(motion);
    for (int y = 0; y < masks.height(); ++y) {
      for (int x = 0; x < masks.width(); ++x) {
        const float hr = masks.masks(0, y, x) + masks.masks(1, y, x);
        masks.masks(0, y, x) /= hr;
        masks.masks(1, y, x) /= hr;
        masks.masks(2, y, x) = 0.0f;
      }
    }
    const ReferenceEncoding local = cached ? ReferenceEncoding{} : synth_.encode_reference(reference);
    const ReferenceEncoding& enc = cached ? *cached : local;
    const auto b = SynthesizerConfig::kBottleneckSize;
    const Tensor no_lr(config().bottleneck_channels(), b, b);
    return synth_.synthesize_from_features(enc, no_lr, warp, masks);
  }

  /// Keypoints for both frames, then predict.
  Tensor reconstruct(const Tensor& reference, const Tensor& target_lr) const {
    return predict(reference, target_lr, keypoints(reference), keypoints(target_lr));
  }

 private:
  static std::pair<WarpField, OcclusionMasks> to_bottleneck(const MotionOutput& motion) {
    constexpr int b = SynthesizerConfig::kBottleneckSize;
    WarpField warp = resize_warp(motion.warp, b, b);
    OcclusionMasks masks{motion.occlusion.height() == b ? motion.occlusion.masks
                                                        : resample(motion.occlusion.masks, b, b)};
    return {std::move(warp), std::move(masks)};
  }

  std::shared_ptr<const WeightStore> store_;
  KeypointDetector detector_;
  MotionEstimator motion_;
  Synthesizer synth_;
  int motion_resolution_ = kDefaultMotionResolution;
};

/// Analytic convolution multiply-accumulate counts for one reconstructed
/// frame (normalization, pooling and sampling are not counted).
struct CostReport {
  int output_resolution = 0;
  double keypoints_at_64 = 0;        // two keypoint detections
  double motion_at_64 = 0;           // motion estimator
  double keypoints_at_full = 0;
  double motion_at_full = 0;
  double synthesis = 0;              // encoder + refinement + LR stem + decoder

  double motion_stage_at_64() const noexcept { return keypoints_at_64 + motion_at_64; }
  double motion_stage_at_full() const noexcept { return keypoints_at_full + motion_at_full; }
  double motion_stage_ratio() const noexcept { return motion_stage_at_full() / motion_stage_at_64(); }
  double pipeline_multiscale() const noexcept { return motion_stage_at_64() + synthesis; }
  double pipeline_full() const noexcept { return motion_stage_at_full() + synthesis; }
  double pipeline_ratio() const noexcept { return pipeline_full() / pipeline_multiscale(); }
};

namespace detail {

inline double conv_macs(double h, double w, int out_ch, int in_ch, int k) {
  return h * w * out_ch * in_ch * k * k;
}

inline double unet_macs(const UNetConfig& cfg, int size) {
  double total = 0;
  double s = size;
  for (int i = 0; i < cfg.depth; ++i) {
    total += conv_macs(s, s, cfg.encoder_width(i), i == 0 ? cfg.in_channels : cfg.encoder_width(i - 1), cfg.kernel);
    s /= 2;
  }
  for (int j = 0; j < cfg.depth; ++j) {
    s *= 2;
    total += conv_macs(s, s, cfg.decoder_out(j), cfg.decoder_in(j), cfg.kernel);
  }
  return total;
}

inline double keypoint_macs(int size) {
  const UNetConfig cfg = KeypointDetector::trunk_config();
  const int k = KeypointDetector::kHeadKernel;
  return unet_macs(cfg, size) + conv_macs(size, size, kNumKeypoints, cfg.base_features, k) +
         conv_macs(size, size, 4 * kNumKeypoints, cfg.base_features, k);
}

inline double motion_macs(int size) {
  const UNetConfig cfg = MotionEstimator::trunk_config();
  const int k = MotionEstimator::kHeadKernel;
  return unet_macs(cfg, size) + conv_macs(size, size, kNumMotions, cfg.base_features, k) +
         3 * conv_macs(size, size, 1, cfg.base_features, k);
}

inline double synthesis_macs(const SynthesizerConfig& cfg, int lr_size) {
  const int r = cfg.output_resolution;
  const int k = SynthesizerConfig::kStemKernel;
  double total = conv_macs(r, r, cfg.stem_channels, 3, k);
  double s = r;
  for (int i = 0; i < cfg.n_blocks(); ++i) {
    total += conv_macs(s, s, cfg.encoder_width(i + 1), cfg.encoder_width(i), 3);
    s /= 2;
  }
  const int bc = cfg.bottleneck_channels();
  total += 2.0 * 2.0 * cfg.residual_blocks * conv_macs(s, s, bc, bc, 3);
  total += conv_macs(lr_size, lr_size, bc, 3, k);
  for (int j = 0; j < cfg.n_blocks(); ++j) {
    s *= 2;
    total += conv_macs(s, s, cfg.decoder_out(j), cfg.decoder_in(j), 3);
  }
  return total + conv_macs(r, r, 3, cfg.stem_channels, k);
}

}  // namespace detail

/// Cost of the multi-scale layout (motion at 64 x 64) against running the
/// keypoint and motion networks at the output resolution, for an LR input of
/// `lr_size` (defaults to output / 4).
inline CostReport multiscale_cost_report(const SynthesizerConfig& cfg, int lr_size = 0) {
  const int r = cfg.output_resolution;
  if (lr_size <= 0) lr_size = std::max(64, r / 4);
  CostReport rep;
  rep.output_resolution = r;
  rep.keypoints_at_64 = 2 * detail::keypoint_macs(64);
  rep.motion_at_64 = detail::motion_macs(64);
  rep.keypoints_at_full = 2 * detail::keypoint_macs(r);
  rep.motion_at_full = detail::motion_macs(r);
  rep.synthesis = detail::synthesis_macs(cfg, lr_size);
  return rep;
}

}  // namespace gemino
