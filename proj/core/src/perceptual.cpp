// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/perceptual.hpp"

namespace irisdeform {
using nn::Var;

template <typename T>
PerceptualPyramid<T>::PerceptualPyramid(std::uint64_t seed, int width) {
  Rng rng(seed);
  c1_ = nn::Conv2d<T>(1, width, 3, 1, rng);
  c2_ = nn::Conv2d<T>(width, 2 * width, 3, 2, rng);
  c3_ = nn::Conv2d<T>(2 * width, 4 * width, 3, 2, rng);
  this->set_requires_grad(false);
}

template <typename T>
std::vector<Var<T>> PerceptualPyramid<T>::features(const Var<T>& x) const {
  if (x.shape().c != 1) throw ShapeError("perceptual features expect one channel");
  const T s = T(0.2);
  Var<T> f1 = nn::leaky_relu(c1_(x), s);
  Var<T> f2 = nn::leaky_relu(c2_(f1), s);
  Var<T> f3 = nn::leaky_relu(c3_(f2), s);
  return {f1, f2, f3};
}

template <typename T>
Var<T> PerceptualPyramid<T>::distance(const Var<T>& a, const Var<T>& b) const {
  if (a.shape() != b.shape()) throw ShapeError("perceptual distance: shapes differ");
  const auto fa = features(a), fb = features(b);
  std::vector<Var<T>> terms;
  const T eps = T(1e-10);
  for (std::size_t l = 0; l < fa.size(); ++l)
    terms.push_back(nn::mean_sq_diff(nn::channel_normalize(fa[l], eps), nn::channel_normalize(fb[l], eps)));
  return nn::weighted_sum(terms, std::vector<T>(terms.size(), T(1)));
}

template <typename T>
void PerceptualPyramid<T>::visit_parameters(const std::string& prefix,
                                            const typename nn::Module<T>::Visitor& fn) {
  c1_.visit_parameters(prefix + "c1.", fn);
  c2_.visit_parameters(prefix + "c2.", fn);
  c3_.visit_parameters(prefix + "c3.", fn);
}

template class PerceptualPyramid<float>;
template class PerceptualPyramid<double>;

}  // namespace irisdeform
