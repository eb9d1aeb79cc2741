#pragma once

// Parameterized layers bound to a WeightStore. Every layer has a matching
// `declare` function that registers its parameters in an ArchitectureSpec, so
// random initialization and binding share one naming scheme:
//
//   <prefix>.weight / <prefix>.bias                      convolution
//   <prefix>.mean / .var / .gamma / .beta                batch normalization
//   <prefix>.conv.*, <prefix>.norm.*                     down/up blocks
//   <prefix>.norm1.*, .conv1.*, .norm2.*, .conv2.*       residual blocks
//
// Layers hold spans into the store; the store must outlive them.

#include <string>
#include <vector>

#include "gemino/tensor.hpp"
#include "gemino/weights.hpp"

namespace gemino {

struct Conv2d {
  ConvKernel kernel;
  int padding = 0;

  static void declare(ArchitectureSpec& spec, const std::string& prefix, int out_ch, int in_ch, int k) {
    spec.add(prefix + ".weight", {out_ch, in_ch, k, k}, ParamRole::conv_weight, in_ch * k * k);
    spec.add(prefix + ".bias", {out_ch}, ParamRole::zeros);
  }

  static Conv2d bind(const WeightStore& store, const std::string& prefix, int out_ch, int in_ch, int k) {
    const auto& w = store.require(prefix + ".weight", {out_ch, in_ch, k, k});
    const auto& b = store.require(prefix + ".bias", {out_ch});
    return {{w.values, b.values, out_ch, in_ch, k, k}, (k - 1) / 2};
  }

  int out_channels() const noexcept { return kernel.out_channels; }
  Tensor operator()(const Tensor& x) const { return conv2d(x, kernel, 1, padding); }

  /// Multiply-accumulates for one application on an h x w input.
  double macs(int h, int w) const noexcept {
    return static_cast<double>(h) * w * kernel.out_channels * kernel.in_channels * kernel.kernel_h * kernel.kernel_w;
  }
};

struct BatchNorm {
  BatchNormParams params;

  static void declare(ArchitectureSpec& spec, const std::string& prefix, int ch) {
    spec.add(prefix + ".mean", {ch}, ParamRole::zeros);
    spec.add(prefix + ".var", {ch}, ParamRole::ones);
    spec.add(prefix + ".gamma", {ch}, ParamRole::ones);
    spec.add(prefix + ".beta", {ch}, ParamRole::zeros);
  }

  static BatchNorm bind(const WeightStore& store, const std::string& prefix, int ch) {
    BatchNorm bn;
    bn.params.mean = store.require(prefix + ".mean", {ch}).values;
    bn.params.var = store.require(prefix + ".var", {ch}).values;
    bn.params.gamma = store.require(prefix + ".gamma", {ch}).values;
    bn.params.beta = store.require(prefix + ".beta", {ch}).values;
    return bn;
  }

  void apply_inplace(Tensor& x) const { batchnorm_infer_inplace(x, params); }
};

/// conv 3x3 -> batch norm -> ReLU -> 2x2 average pool.
struct DownBlock {
  Conv2d conv;
  BatchNorm norm;

  static void declare(ArchitectureSpec& spec, const std::string& prefix, int out_ch, int in_ch, int k = 3) {
    Conv2d::declare(spec, prefix + ".conv", out_ch, in_ch, k);
    BatchNorm::declare(spec, prefix + ".norm", out_ch);
  }
  static DownBlock bind(const WeightStore& store, const std::string& prefix, int out_ch, int in_ch, int k = 3) {
    return {Conv2d::bind(store, prefix + ".conv", out_ch, in_ch, k), BatchNorm::bind(store, prefix + ".norm", out_ch)};
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = conv(x);
    norm.apply_inplace(y);
    relu_inplace(y);
    return avgpool2(y);
  }
};

/// 2x bilinear interpolation -> conv 3x3 -> batch norm -> ReLU.
struct UpBlock {
  Conv2d conv;
  BatchNorm norm;

  static void declare(ArchitectureSpec& spec, const std::string& prefix, int out_ch, int in_ch, int k = 3) {
    Conv2d::declare(spec, prefix + ".conv", out_ch, in_ch, k);
    BatchNorm::declare(spec, prefix + ".norm", out_ch);
  }
  static UpBlock bind(const WeightStore& store, const std::string& prefix, int out_ch, int in_ch, int k = 3) {
    return {Conv2d::bind(store, prefix + ".conv", out_ch, in_ch, k), BatchNorm::bind(store, prefix + ".norm", out_ch)};
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = conv(upsample2(x, UpsampleMode::bilinear));
    norm.apply_inplace(y);
    relu_inplace(y);
    return y;
  }
};

/// out = x + conv2(relu(norm2(conv1(relu(norm1(x)))))), shape preserving.
struct ResBlock {
  BatchNorm norm1;
  Conv2d conv1;
  BatchNorm norm2;
  Conv2d conv2;

  static void declare(ArchitectureSpec& spec, const std::string& prefix, int ch, int k = 3) {
    BatchNorm::declare(spec, prefix + ".norm1", ch);
    Conv2d::declare(spec, prefix + ".conv1", ch, ch, k);
    BatchNorm::declare(spec, prefix + ".norm2", ch);
    Conv2d::declare(spec, prefix + ".conv2", ch, ch, k);
  }
  static ResBlock bind(const WeightStore& store, const std::string& prefix, int ch, int k = 3) {
    return {BatchNorm::bind(store, prefix + ".norm1", ch), Conv2d::bind(store, prefix + ".conv1", ch, ch, k),
            BatchNorm::bind(store, prefix + ".norm2", ch), Conv2d::bind(store, prefix + ".conv2", ch, ch, k)};
  }

  Tensor operator()(const Tensor& x) const {
    Tensor y = x;
    norm1.apply_inplace(y);
    relu_inplace(y);
    y = conv1(y);
    norm2.apply_inplace(y);
    relu_inplace(y);
    y = conv2(y);
    auto out = y.values();
    const auto in = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += in[i];
    return y;
  }
};

}  // namespace gemino
