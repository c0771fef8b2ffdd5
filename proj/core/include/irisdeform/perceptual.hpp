// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "irisdeform/layers.hpp"

namespace irisdeform {

/// Frozen seeded feature pyramid: three levels at full, 1/2 and 1/4
/// resolution. Distance is the sum over levels of the mean squared
/// difference between channel-normalized features.
template <typename T>
class PerceptualPyramid : public nn::Module<T> {
 public:
  explicit PerceptualPyramid(std::uint64_t seed = 23, int width = 8);

  std::vector<nn::Var<T>> features(const nn::Var<T>& x) const;
  nn::Var<T> distance(const nn::Var<T>& a, const nn::Var<T>& b) const;

  void visit_parameters(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;

 private:
  nn::Conv2d<T> c1_, c2_, c3_;
};

/// Adapter slot for an external perceptual metric. Must be differentiable
/// in its first argument and return a {1,1,1,1} scalar.
template <typename T>
using PerceptualFn = std::function<nn::Var<T>(const nn::Var<T>& output, const nn::Var<T>& target)>;

}  // namespace irisdeform
