// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "irisdeform/ops.hpp"
#include "irisdeform/random.hpp"
#include "irisdeform/tensor.hpp"

namespace irisdeform::nn {

template <typename T>
class Module {
 public:
  using Visitor = std::function<void(const std::string& name, Var<T>& param)>;

  virtual ~Module() = default;
  virtual void visit_parameters(const std::string& prefix, const Visitor& fn) = 0;

  std::vector<std::pair<std::string, Var<T>>> named_parameters();
  std::vector<Var<T>> parameters();
  std::size_t parameter_count();
  void zero_grad();
  void set_requires_grad(bool on);
};

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d() = default;
  /// Kaiming-uniform weights for a leaky activation of slope 0.2, zero bias.
  /// Padding is kernel/2.
  Conv2d(int in_channels, int out_channels, int kernel, int stride, Rng& rng, bool with_bias = true);

  Var<T> operator()(const Var<T>& x) const;
  void visit_parameters(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  int in_channels() const { return weight.shape().c; }
  int out_channels() const { return weight.shape().n; }

  Var<T> weight;
  Var<T> bias;
  int stride = 1;
  int padding = 0;
};

/// Sub-pixel initialization: every group of scale^2 consecutive output
/// kernels starts identical, so the shuffled output begins as a nearest
/// neighbour upsample of one convolution (no initial checkerboard).
template <typename T>
void icnr_init(Conv2d<T>& conv, int scale, Rng& rng);

template <typename T>
class InstanceNorm2d : public Module<T> {
 public:
  InstanceNorm2d() = default;
  explicit InstanceNorm2d(int channels, T eps = T(1e-5));

  Var<T> operator()(const Var<T>& x) const;
  void visit_parameters(const std::string& prefix, const typename Module<T>::Visitor& fn) override;

  Var<T> gamma;
  Var<T> beta;
  T eps = T(1e-5);
};

/// Copy parameter values between modules of identical structure (possibly
/// different scalar types). Throws ShapeError on any name or shape mismatch.
template <typename Dst, typename Src>
void copy_parameters(Module<Src>& src, Module<Dst>& dst) {
  auto from = src.named_parameters();
  auto to = dst.named_parameters();
  if (from.size() != to.size()) throw ShapeError("copy_parameters: parameter count mismatch");
  for (std::size_t i = 0; i < from.size(); ++i) {
    if (from[i].first != to[i].first || from[i].second.shape() != to[i].second.shape())
      throw ShapeError("copy_parameters: mismatch at " + from[i].first);
    to[i].second.mutable_value() = from[i].second.value().template cast<Dst>();
  }
}

}  // namespace irisdeform::nn
