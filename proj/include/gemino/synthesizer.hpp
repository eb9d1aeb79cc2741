#pragma once

#include <bit>
#include <string>
#include <vector>

#include "gemino/image_ops.hpp"
#include "gemino/motion.hpp"

namespace gemino {

/// Encoder/decoder geometry for one output resolution. The encoder runs
/// log2(R / 64) down blocks so the bottleneck is always 64 x 64.
struct SynthesizerConfig {
  int output_resolution = 1024;
  int stem_channels = 32;
  int max_channels = 256;
  int residual_blocks = 5;
  int skip_blocks = 2;
  static constexpr int kBottleneckSize = 64;
  static constexpr int kStemKernel = 7;

  static SynthesizerConfig for_resolution(int resolution) {
    if (resolution < 128 || resolution > 1024 || !std::has_single_bit(static_cast<unsigned>(resolution))) {
      throw ShapeError("synthesizer: unsupported output resolution " + std::to_string(resolution));
    }
    SynthesizerConfig cfg;
    cfg.output_resolution = resolution;
    cfg.skip_blocks = std::min(2, cfg.n_blocks());
    return cfg;
  }

  int n_blocks() const noexcept {
    return std::countr_zero(static_cast<unsigned>(output_resolution / kBottleneckSize));
  }
  /// Channels entering encoder block i (i = 0 is the stem output); channels
  /// leaving block i are encoder_width(i + 1).
  int encoder_width(int i) const noexcept { return std::min(stem_channels << i, max_channels); }
  int bottleneck_channels() const noexcept { return encoder_width(n_blocks()); }
  bool has_skip(int encoder_block) const noexcept { return encoder_block < skip_blocks; }

  /// Decoder block j mirrors encoder block n_blocks - 1 - j.
  int decoder_skip_channels(int j) const noexcept {
    const int mirror = n_blocks() - 1 - j;
    return has_skip(mirror) ? encoder_width(mirror + 1) : 0;
  }
  int decoder_in(int j) const noexcept {
    return (j == 0 ? bottleneck_channels() : decoder_out(j - 1)) + decoder_skip_channels(j);
  }
  int decoder_out(int j) const noexcept { return encoder_width(n_blocks() - 1 - j); }
};

/// Cached result of encoding a reference frame; reused until the reference changes.
struct ReferenceEncoding {
  Tensor bottleneck;
  std::vector<Tensor> skips;  // skips[i] is the output of encoder block i
};

enum class RefineBranch { warped, unwarped };

/// Intermediate tensors of one synthesis, captured on request.
struct SynthesisTrace {
  Tensor warped_bottleneck;
  Tensor refined_warped;
  Tensor refined_unwarped;
  Tensor lr_features;
  Tensor combined;
};

inline bool is_supported_lr_size(int l) noexcept { return l == 64 || l == 128 || l == 256 || l == 512; }

/// The generative half of the model. Parameters live under `<prefix>.stem`,
/// `.down{i}`, `.res_warped{k}`, `.res_unwarped{k}`, `.lr_stem`, `.up{j}`
/// and `.final`.
class Synthesizer {
 public:
  static void declare(ArchitectureSpec& spec, const std::string& prefix, const SynthesizerConfig& cfg) {
    const int k = SynthesizerConfig::kStemKernel;
    Conv2d::declare(spec, prefix + ".stem", cfg.stem_channels, 3, k);
    for (int i = 0; i < cfg.n_blocks(); ++i) {
      DownBlock::declare(spec, prefix + ".down" + std::to_string(i), cfg.encoder_width(i + 1), cfg.encoder_width(i));
    }
    for (int r = 0; r < cfg.residual_blocks; ++r) {
      ResBlock::declare(spec, prefix + ".res_warped" + std::to_string(r), cfg.bottleneck_channels());
      ResBlock::declare(spec, prefix + ".res_unwarped" + std::to_string(r), cfg.bottleneck_channels());
    }
    Conv2d::declare(spec, prefix + ".lr_stem", cfg.bottleneck_channels(), 3, k);
    for (int j = 0; j < cfg.n_blocks(); ++j) {
      UpBlock::declare(spec, prefix + ".up" + std::to_string(j), cfg.decoder_out(j), cfg.decoder_in(j));
    }
    Conv2d::declare(spec, prefix + ".final", 3, cfg.stem_channels, k);
  }

  // Layers borrow parameter storage; the store must outlive the module.
  static Synthesizer build(WeightStore&&, const std::string& prefix, const SynthesizerConfig& cfg) = delete;
  static Synthesizer build(const WeightStore& store, const std::string& prefix, const SynthesizerConfig& cfg) {
    const int k = SynthesizerConfig::kStemKernel;
    Synthesizer s;
    s.cfg_ = cfg;
    s.stem_ = Conv2d::bind(store, prefix + ".stem", cfg.stem_channels, 3, k);
    for (int i = 0; i < cfg.n_blocks(); ++i) {
      s.down_.push_back(
          DownBlock::bind(store, prefix + ".down" + std::to_string(i), cfg.encoder_width(i + 1), cfg.encoder_width(i)));
    }
    for (int r = 0; r < cfg.residual_blocks; ++r) {
      s.res_warped_.push_back(
          ResBlock::bind(store, prefix + ".res_warped" + std::to_string(r), cfg.bottleneck_channels()));
      s.res_unwarped_.push_back(
          ResBlock::bind(store, prefix + ".res_unwarped" + std::to_string(r), cfg.bottleneck_channels()));
    }
    s.lr_stem_ = Conv2d::bind(store, prefix + ".lr_stem", cfg.bottleneck_channels(), 3, k);
    for (int j = 0; j < cfg.n_blocks(); ++j) {
      s.up_.push_back(UpBlock::bind(store, prefix + ".up" + std::to_string(j), cfg.decoder_out(j), cfg.decoder_in(j)));
    }
    s.final_ = Conv2d::bind(store, prefix + ".final", 3, cfg.stem_channels, k);
    return s;
  }

  const SynthesizerConfig& config() const noexcept { return cfg_; }

  ReferenceEncoding encode_reference(const Tensor& reference) const {
    const int r = cfg_.output_resolution;
    if (reference.channels() != 3 || reference.height() != r || reference.width() != r) {
      throw ShapeError("encode_reference: expected 3x" + std::to_string(r) + "x" + std::to_string(r) + ", got " +
                       reference.shape_string());
    }
    ReferenceEncoding enc;
    Tensor x = stem_(reference);
    for (int i = 0; i < cfg_.n_blocks(); ++i) {
      x = down_[i](x);
      if (cfg_.has_skip(i)) enc.skips.push_back(x);
    }
    enc.bottleneck = std::move(x);
    return enc;
  }

  Tensor lr_features(const Tensor& target_lr) const {
    if (target_lr.channels() != 3 || target_lr.height() != target_lr.width() || !is_supported_lr_size(target_lr.height())) {
      throw ShapeError("lr_features: unsupported low-resolution input " + target_lr.shape_string());
    }
    Tensor features = lr_stem_(target_lr);
    constexpr int b = SynthesizerConfig::kBottleneckSize;
    if (features.height() == b) return features;
    return resize_bilinear(features, b, b);
  }

  Tensor refine(const Tensor& features, RefineBranch branch) const {
    const auto& blocks = branch == RefineBranch::warped ? res_warped_ : res_unwarped_;
    require_bottleneck(features, "refine");
    Tensor x = features;
    for (const auto& block : blocks) x = block(x);
    return x;
  }

  /// A * refine(warp(bottleneck)) + B * refine(bottleneck) + C * lr_features,
  /// all at the 64 x 64 bottleneck. `warp` and `masks` must be 64 x 64.
  Tensor combine(const ReferenceEncoding& reference, const Tensor& lr, const WarpField& warp,
                 const OcclusionMasks& masks, SynthesisTrace* trace = nullptr) const {
    require_bottleneck(reference.bottleneck, "combine");
    require_bottleneck(lr, "combine");
    constexpr int b = SynthesizerConfig::kBottleneckSize;
    if (warp.height() != b || warp.width() != b || masks.height() != b || masks.width() != b) {
      throw ShapeError("combine: warp field and occlusion masks must be 64x64");
    }
    Tensor warped = grid_sample(reference.bottleneck, warp);
    Tensor refined_warped = refine(warped, RefineBranch::warped);
    Tensor refined_unwarped = refine(reference.bottleneck, RefineBranch::unwarped);
    Tensor combined(cfg_.bottleneck_channels(), b, b);
    const std::size_t plane = combined.plane_size();
    const float* ma = masks.masks.channel(0).data();
    const float* mb = masks.masks.channel(1).data();
    const float* mc = masks.masks.channel(2).data();
    for (int c = 0; c < combined.channels(); ++c) {
      const float* rw = refined_warped.channel(c).data();
      const float* ru = refined_unwarped.channel(c).data();
      const float* lf = lr.channel(c).data();
      float* dst = combined.channel(c).data();
      for (std::size_t p = 0; p < plane; ++p) dst[p] = ma[p] * rw[p] + mb[p] * ru[p] + mc[p] * lf[p];
    }
    if (trace) {
      trace->warped_bottleneck = std::move(warped);
      trace->refined_warped = std::move(refined_warped);
      trace->refined_unwarped = std::move(refined_unwarped);
      trace->lr_features = lr;
      trace->combined = combined;
    }
    return combined;
  }

  /// Encoder skips warped into the target frame and weighted by the
  /// high-resolution visibility A + B, each at its own resolution.
  std::vector<Tensor> prepare_skips(const ReferenceEncoding& reference, const WarpField& warp,
                                    const OcclusionMasks& masks) const {
    Tensor visibility(1, masks.height(), masks.width());
    for (int y = 0; y < masks.height(); ++y) {
      for (int x = 0; x < masks.width(); ++x) visibility(0, y, x) = masks.warped(y, x) + masks.unwarped(y, x);
    }
    std::vector<Tensor> out;
    out.reserve(reference.skips.size());
    for (const Tensor& skip : reference.skips) {
      const WarpField field = resize_warp(warp, skip.height(), skip.width());
      Tensor warped = grid_sample(skip, field);
      const Tensor vis = visibility.height() == skip.height() ? visibility
                                                              : resize_bilinear(visibility, skip.height(), skip.width());
      const std::size_t plane = warped.plane_size();
      for (int c = 0; c < warped.channels(); ++c) {
        float* dst = warped.channel(c).data();
        for (std::size_t p = 0; p < plane; ++p) dst[p] *= vis.data()[p];
      }
      out.push_back(std::move(warped));
    }
    return out;
  }

  /// Up blocks with skip concatenation, final 7x7 conv to RGB, clamp to [0, 1].
  Tensor decode(const Tensor& combined, const std::vector<Tensor>& skips) const {
    require_bottleneck(combined, "decode");
    if (skips.size() != static_cast<std::size_t>(cfg_.skip_blocks)) {
      throw ShapeError("decode: expected " + std::to_string(cfg_.skip_blocks) + " skip tensors");
    }
    Tensor x = combined;
    for (int j = 0; j < cfg_.n_blocks(); ++j) {
      const int mirror = cfg_.n_blocks() - 1 - j;
      if (cfg_.has_skip(mirror)) x = concat_channels(x, skips[mirror]);
      x = up_[j](x);
    }
    return clamp_unit(final_(x));
  }

  Tensor synthesize(const ReferenceEncoding& reference, const Tensor& target_lr, const WarpField& warp,
                    const OcclusionMasks& masks, SynthesisTrace* trace = nullptr) const {
    const Tensor lr = lr_features(target_lr);
    return synthesize_from_features(reference, lr, warp, masks, trace);
  }

  Tensor synthesize_from_features(const ReferenceEncoding& reference, const Tensor& lr, const WarpField& warp,
                                  const OcclusionMasks& masks, SynthesisTrace* trace = nullptr) const {
    const Tensor combined = combine(reference, lr, warp, masks, trace);
    return decode(combined, prepare_skips(reference, warp, masks));
  }

  /// Conv multiply-accumulates of one synthesis (encoder included) from an
  /// l x l low-resolution input.
  double macs(int l) const noexcept {
    const int r = cfg_.output_resolution;
    double total = stem_.macs(r, r);
    int s = r;
    for (const auto& block : down_) {
      total += block.conv.macs(s, s);
      s /= 2;
    }
    for (std::size_t i = 0; i < res_warped_.size(); ++i) {
      total += res_warped_[i].conv1.macs(s, s) + res_warped_[i].conv2.macs(s, s);
      total += res_unwarped_[i].conv1.macs(s, s) + res_unwarped_[i].conv2.macs(s, s);
    }
    total += lr_stem_.macs(l, l);
    for (const auto& block : up_) {
      s *= 2;
      total += block.conv.macs(s, s);
    }
    return total + final_.macs(r, r);
  }

 private:
  void require_bottleneck(const Tensor& t, const char* what) const {
    constexpr int b = SynthesizerConfig::kBottleneckSize;
    if (t.channels() != cfg_.bottleneck_channels() || t.height() != b || t.width() != b) {
      throw ShapeError(std::string(what) + ": expected bottleneck " + std::to_string(cfg_.bottleneck_channels()) +
                       "x64x64, got " + t.shape_string());
    }
  }

  SynthesizerConfig cfg_;
  Conv2d stem_;
  std::vector<DownBlock> down_;
  std::vector<ResBlock> res_warped_;
  std::vector<ResBlock> res_unwarped_;
  Conv2d lr_stem_;
  std::vector<UpBlock> up_;
  Conv2d final_;
};

}  // namespace gemino
