// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "irisdeform/image.hpp"
#include "irisdeform/layers.hpp"

namespace irisdeform::nn {

struct ModelConfig {
  int depth = 4;
  int base_channels = 64;
  int growth = 2;
  int input_channels = 2;
  int output_channels = 1;
  int dense_layers_per_block = 2;
  double leaky_slope = 0.2;
  bool instance_norm = true;
  std::uint64_t seed = 0;

  /// Throws ConfigError on depth < 2, base_channels < 8, odd channel counts.
  void validate() const;
  /// Output channels of encoder stage `level` (1..depth); level 0 is the
  /// decoder's full-resolution width (= base_channels).
  int channels(int level) const;
  int stride_multiple() const { return 1 << depth; }

  std::string to_json() const;
  static ModelConfig from_json(std::string_view text);
  bool operator==(const ModelConfig&) const = default;
};

/// Strided 3x3 convolution in parallel with bilinear halving followed by a
/// 3x3 convolution; each branch yields out/2 maps, concatenated, then
/// (optionally) instance-normalized and leaky-rectified.
template <typename T>
class DownBlock : public Module<T> {
 public:
  DownBlock() = default;
  DownBlock(int in_channels, int out_channels, const ModelConfig& cfg, Rng& rng);
  Var<T> operator()(const Var<T>& x) const;
  void visit_parameters(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  Conv2d<T> strided;
  Conv2d<T> resampled;
  InstanceNorm2d<T> norm;
  bool use_norm = true;
  T slope = T(0.2);
};

/// Sub-pixel convolution branch in parallel with bilinear doubling followed
/// by a 3x3 convolution, then skip concatenation and a densely connected
/// convolution stack (each layer sees the block input and all previous
/// layer outputs).
template <typename T>
class UpBlock : public Module<T> {
 public:
  UpBlock() = default;
  UpBlock(int in_channels, int skip_channels, int out_channels, const ModelConfig& cfg, Rng& rng);
  Var<T> operator()(const Var<T>& x, const Var<T>& skip) const;
  void visit_parameters(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  /// The two upsampling branches alone, before skip concatenation.
  Var<T> upsample(const Var<T>& x) const;

  Conv2d<T> subpixel;
  Conv2d<T> resampled;
  InstanceNorm2d<T> up_norm;
  std::vector<Conv2d<T>> dense;
  std::vector<InstanceNorm2d<T>> dense_norm;
  bool use_norm = true;
  T slope = T(0.2);
};

/// U-Net style deformation model: (image, target mask) -> deformed image.
template <typename T>
class DeformNet : public Module<T> {
 public:
  explicit DeformNet(const ModelConfig& cfg);

  const ModelConfig& config() const { return cfg_; }

  /// input {N, 2, H, W} with H, W divisible by 2^depth; output {N, 1, H, W}
  /// in [0, 1].
  Var<T> forward(const Var<T>& input) const;
  /// Reflect-pads to the next multiple of 2^depth and crops back.
  Var<T> forward_any(const Var<T>& input) const;
  /// Single-image inference with recording disabled.
  Image infer(const Image& image, const Mask& target_mask) const;

  void visit_parameters(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

 private:
  ModelConfig cfg_;
  std::vector<DownBlock<T>> down_;
  std::vector<UpBlock<T>> up_;  // up_[k] maps level k+1 -> level k
  Conv2d<T> head_;
};

/// Stack images and masks into a {N, 2, H, W} input.
template <typename T>
Tensor<T> make_input(const std::vector<const Image*>& images, const std::vector<const Mask*>& masks);

template <typename T>
Tensor<T> image_to_tensor(const Image& image);
template <typename T>
Image tensor_to_image(const Tensor<T>& t, int index = 0);

}  // namespace irisdeform::nn
