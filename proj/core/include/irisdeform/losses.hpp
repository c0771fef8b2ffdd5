// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <string>
#include <vector>

#include "irisdeform/filter_bank.hpp"
#include "irisdeform/geometry.hpp"
#include "irisdeform/perceptual.hpp"
#include "irisdeform/segmenter.hpp"

namespace irisdeform::loss {

struct LossWeights {
  double mask = 1.0;
  double identity = 1.0;
  double l1 = 1.0;
  double perceptual = 1.0;

  /// Throws ConfigError on negative or all-zero weights.
  void validate() const;
  LossWeights scaled(double s) const { return {mask * s, identity * s, l1 * s, perceptual * s}; }
  bool operator==(const LossWeights&) const = default;
};

template <typename T>
struct LossTerms {
  nn::Var<T> total, mask, identity, l1, perceptual;
};

/// Plain-number view of LossTerms for logging.
struct LossValues {
  double total = 0, mask = 0, identity = 0, l1 = 0, perceptual = 0;
};
template <typename T>
LossValues values_of(const LossTerms<T>& t);

/// Filter bank as convolution weights {k, 1, h_f, w_f}.
template <typename T>
nn::Tensor<T> bank_weights(const FilterBank& bank);

/// Sampling plan for the identity loss. Throws GeometryError when any
/// sample of the annulus falls outside the image.
std::shared_ptr<const geometry::SamplingPlan> identity_plan(const geometry::EyeAnnotation& ann,
                                                            int image_height, int image_width,
                                                            int grid_width, int grid_height);

// All terms take {N, 1, H, W} batches and return {1,1,1,1} scalars.

template <typename T>
nn::Var<T> mask_loss(const nn::Var<T>& output, const nn::Var<T>& target, const Segmenter<T>& seg);

/// Both images are normalized with the target annotation, filtered with
/// every kernel (valid support) and compared by mean absolute error.
template <typename T>
nn::Var<T> identity_loss(const nn::Var<T>& output, const nn::Var<T>& target,
                         const std::vector<std::shared_ptr<const geometry::SamplingPlan>>& plans,
                         const nn::Var<T>& bank_weights);

template <typename T>
nn::Var<T> l1_loss(const nn::Var<T>& output, const nn::Var<T>& target);

template <typename T>
nn::Var<T> perceptual_loss(const nn::Var<T>& output, const nn::Var<T>& target,
                           const PerceptualPyramid<T>& extractor);

/// Frozen evaluators shared by the loss terms.
template <typename T>
struct LossSuite {
  const Segmenter<T>* segmenter = nullptr;
  nn::Var<T> bank;  // {k, 1, h_f, w_f}
  const PerceptualPyramid<T>* perceptual = nullptr;
  PerceptualFn<T> external_perceptual;  // overrides `perceptual` when set
  int grid_width = geometry::kDefaultGridWidth;
  int grid_height = geometry::kDefaultGridHeight;
};

template <typename T>
LossTerms<T> composite_loss(const nn::Var<T>& output, const nn::Var<T>& target,
                            const std::vector<std::shared_ptr<const geometry::SamplingPlan>>& plans,
                            const LossWeights& weights, const LossSuite<T>& suite);

/// Single-image convenience wrapper over composite_loss.
template <typename T>
LossValues composite_loss(const Image& output, const Image& target,
                          const geometry::EyeAnnotation& target_ann, const LossWeights& weights,
                          const LossSuite<T>& suite);

}  // namespace irisdeform::loss
