#pragma once

#include <string>
#include <vector>

#include "gemino/layers.hpp"

namespace gemino {

/// Shape of an hourglass feature extractor. Encoder block i (0-based) emits
/// base_features * 2^i channels at half the spatial size of its input.
/// Decoder block j mirrors encoder block depth-1-j; each decoder block after
/// the first consumes its predecessor's output concatenated with the mirror
/// encoder block's output. The last decoder block emits base_features.
struct UNetConfig {
  int in_channels = 3;
  int base_features = 64;
  int depth = 5;
  int kernel = 3;

  int encoder_width(int i) const noexcept { return base_features << i; }
  int decoder_out(int j) const noexcept { return j + 1 < depth ? encoder_width(depth - 2 - j) : base_features; }
  int decoder_in(int j) const noexcept {
    return j == 0 ? encoder_width(depth - 1) : decoder_out(j - 1) + encoder_width(depth - 1 - j);
  }
  /// Input height/width must be a multiple of this.
  int spatial_multiple() const noexcept { return 1 << depth; }
};

class UNetTrunk {
 public:
  static void declare(ArchitectureSpec& spec, const std::string& prefix, const UNetConfig& cfg) {
    for (int i = 0; i < cfg.depth; ++i) {
      DownBlock::declare(spec, prefix + ".down" + std::to_string(i), cfg.encoder_width(i),
                         i == 0 ? cfg.in_channels : cfg.encoder_width(i - 1), cfg.kernel);
    }
    for (int j = 0; j < cfg.depth; ++j) {
      UpBlock::declare(spec, prefix + ".up" + std::to_string(j), cfg.decoder_out(j), cfg.decoder_in(j), cfg.kernel);
    }
  }

  // Layers borrow parameter storage; the store must outlive the module.
  static UNetTrunk build(WeightStore&&, const std::string& prefix, const UNetConfig& cfg) = delete;
  static UNetTrunk build(const WeightStore& store, const std::string& prefix, const UNetConfig& cfg) {
    UNetTrunk t;
    t.cfg_ = cfg;
    for (int i = 0; i < cfg.depth; ++i) {
      t.down_.push_back(DownBlock::bind(store, prefix + ".down" + std::to_string(i), cfg.encoder_width(i),
                                        i == 0 ? cfg.in_channels : cfg.encoder_width(i - 1), cfg.kernel));
    }
    for (int j = 0; j < cfg.depth; ++j) {
      t.up_.push_back(
          UpBlock::bind(store, prefix + ".up" + std::to_string(j), cfg.decoder_out(j), cfg.decoder_in(j), cfg.kernel));
    }
    return t;
  }

  const UNetConfig& config() const noexcept { return cfg_; }
  int out_channels() const noexcept { return cfg_.base_features; }

  Tensor forward(const Tensor& x) const {
    const int m = cfg_.spatial_multiple();
    if (x.channels() != cfg_.in_channels || x.height() % m != 0 || x.width() % m != 0 || x.empty()) {
      throw ShapeError("unet: expected " + std::to_string(cfg_.in_channels) + " channels with spatial dims divisible by " +
                       std::to_string(m) + ", got " + x.shape_string());
    }
    std::vector<Tensor> skips;
    skips.reserve(down_.size());
    const Tensor* cur = &x;
    for (const auto& block : down_) {
      skips.push_back(block(*cur));
      cur = &skips.back();
    }
    Tensor out = up_[0](skips.back());
    for (std::size_t j = 1; j < up_.size(); ++j) {
      out = up_[j](concat_channels(out, skips[skips.size() - 1 - j]));
    }
    return out;
  }

  /// Multiply-accumulates of one forward pass on an h x w input.
  double macs(int h, int w) const noexcept {
    double total = 0.0;
    int sh = h;
    int sw = w;
    for (const auto& block : down_) {
      total += block.conv.macs(sh, sw);
      sh /= 2;
      sw /= 2;
    }
    for (const auto& block : up_) {
      sh *= 2;
      sw *= 2;
      total += block.conv.macs(sh, sw);
    }
    return total;
  }

 private:
  UNetConfig cfg_;
  std::vector<DownBlock> down_;
  std::vector<UpBlock> up_;
};

}  // namespace gemino
