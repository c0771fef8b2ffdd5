// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/losses.hpp"

#include <cmath>

#include "irisdeform/deform_net.hpp"

namespace irisdeform::loss {
using nn::Var;

void LossWeights::validate() const {
  for (double w : {mask, identity, l1, perceptual})
    if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
  if (mask + identity + l1 + perceptual == 0.0) throw ConfigError("at least one loss weight must be > 0");
}

template <typename T>
LossValues values_of(const LossTerms<T>& t) {
  return {static_cast<double>(t.total.value().item()), static_cast<double>(t.mask.value().item()),
          static_cast<double>(t.identity.value().item()), static_cast<double>(t.l1.value().item()),
          static_cast<double>(t.perceptual.value().item())};
}

template <typename T>
nn::Tensor<T> bank_weights(const FilterBank& bank) {
  bank.validate();
  nn::Tensor<T> w(nn::Shape{bank.size(), 1, bank.height, bank.width});
  for (int k = 0; k < bank.size(); ++k)
    for (int y = 0; y < bank.height; ++y)
      for (int x = 0; x < bank.width; ++x) w.at(k, 0, y, x) = static_cast<T>(bank.at(k, y, x));
  return w;
}

std::shared_ptr<const geometry::SamplingPlan> identity_plan(const geometry::EyeAnnotation& ann,
                                                            int image_height, int image_width,
                                                            int grid_width, int grid_height) {
  ann.validate();
  auto plan = std::make_shared<geometry::SamplingPlan>(
      geometry::make_sampling_plan(ann, image_height, image_width, grid_width, grid_height));
  for (const auto& t : plan->taps)
    if (!t.valid) throw GeometryError("identity loss: iris annulus extends outside the image");
  return plan;
}

template <typename T>
Var<T> mask_loss(const Var<T>& output, const Var<T>& target, const Segmenter<T>& seg) {
  if (output.shape() != target.shape()) throw ShapeError("mask_loss: shapes differ");
  return nn::mean_abs_diff(seg.logits(output), seg.logits(target));
}

template <typename T>
Var<T> identity_loss(const Var<T>& output, const Var<T>& target,
                     const std::vector<std::shared_ptr<const geometry::SamplingPlan>>& plans,
                     const Var<T>& bank) {
  if (output.shape() != target.shape()) throw ShapeError("identity_loss: shapes differ");
  const Var<T> none;
  const Var<T> ro = nn::conv2d(nn::sample_plan(output, plans), bank, none, 1, 0);
  const Var<T> rt = nn::conv2d(nn::sample_plan(target, plans), bank, none, 1, 0);
  return nn::mean_abs_diff(ro, rt);
}

template <typename T>
Var<T> l1_loss(const Var<T>& output, const Var<T>& target) {
  return nn::mean_abs_diff(output, target);
}

template <typename T>
Var<T> perceptual_loss(const Var<T>& output, const Var<T>& target,
                       const PerceptualPyramid<T>& extractor) {
  return extractor.distance(output, target);
}

template <typename T>
LossTerms<T> composite_loss(const Var<T>& output, const Var<T>& target,
                            const std::vector<std::shared_ptr<const geometry::SamplingPlan>>& plans,
                            const LossWeights& weights, const LossSuite<T>& suite) {
  weights.validate();
  if (!suite.segmenter) throw ConfigError("composite_loss: no segmenter");
  if (!suite.bank.defined()) throw ConfigError("composite_loss: no filter bank");
  if (!suite.perceptual && !suite.external_perceptual) throw ConfigError("composite_loss: no perceptual extractor");
  LossTerms<T> t;
  t.mask = mask_loss(output, target, *suite.segmenter);
  t.identity = identity_loss(output, target, plans, suite.bank);
  t.l1 = l1_loss(output, target);
  t.perceptual = suite.external_perceptual ? suite.external_perceptual(output, target)
                                           : perceptual_loss(output, target, *suite.perceptual);
  t.total = nn::weighted_sum<T>({t.mask, t.identity, t.l1, t.perceptual},
                                {static_cast<T>(weights.mask), static_cast<T>(weights.identity),
                                 static_cast<T>(weights.l1), static_cast<T>(weights.perceptual)});
  return t;
}

template <typename T>
LossValues composite_loss(const Image& output, const Image& target,
                          const geometry::EyeAnnotation& target_ann, const LossWeights& weights,
                          const LossSuite<T>& suite) {
  if (!output.same_shape(target)) throw ShapeError("composite_loss: image sizes differ");
  nn::NoGradGuard guard;
  const auto plan =
      identity_plan(target_ann, target.height(), target.width(), suite.grid_width, suite.grid_height);
  return values_of(composite_loss(Var<T>(nn::image_to_tensor<T>(output)),
                                  Var<T>(nn::image_to_tensor<T>(target)), {plan}, weights, suite));
}

#define IRISDEFORM_INSTANTIATE_LOSSES(T)                                                              \
  template LossValues values_of(const LossTerms<T>&);                                                 \
  template nn::Tensor<T> bank_weights<T>(const FilterBank&);                                          \
  template Var<T> mask_loss(const Var<T>&, const Var<T>&, const Segmenter<T>&);                       \
  template Var<T> identity_loss(const Var<T>&, const Var<T>&,                                         \
                                const std::vector<std::shared_ptr<const geometry::SamplingPlan>>&,    \
                                const Var<T>&);                                                       \
  template Var<T> l1_loss(const Var<T>&, const Var<T>&);                                              \
  template Var<T> perceptual_loss(const Var<T>&, const Var<T>&, const PerceptualPyramid<T>&);         \
  template LossTerms<T> composite_loss(const Var<T>&, const Var<T>&,                                  \
                                       const std::vector<std::shared_ptr<const geometry::SamplingPlan>>&, \
                                       const LossWeights&, const LossSuite<T>&);                      \
  template LossValues composite_loss(const Image&, const Image&, const geometry::EyeAnnotation&,      \
                                     const LossWeights&, const LossSuite<T>&);

IRISDEFORM_INSTANTIATE_LOSSES(float)
IRISDEFORM_INSTANTIATE_LOSSES(double)

}  // namespace irisdeform::loss
