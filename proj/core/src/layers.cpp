// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/layers.hpp"

#include <cmath>

namespace irisdeform::nn {

template <typename T>
std::vector<std::pair<std::string, Var<T>>> Module<T>::named_parameters() {
  std::vector<std::pair<std::string, Var<T>>> out;
  visit_parameters("", [&](const std::string& name, Var<T>& p) { out.emplace_back(name, p); });
  return out;
}

template <typename T>
std::vector<Var<T>> Module<T>::parameters() {
  std::vector<Var<T>> out;
  visit_parameters("", [&](const std::string&, Var<T>& p) { out.push_back(p); });
  return out;
}

template <typename T>
std::size_t Module<T>::parameter_count() {
  std::size_t n = 0;
  visit_parameters("", [&](const std::string&, Var<T>& p) { n += p.value().numel(); });
  return n;
}

template <typename T>
void Module<T>::zero_grad() {
  visit_parameters("", [](const std::string&, Var<T>& p) { p.zero_grad(); });
}

template <typename T>
void Module<T>::set_requires_grad(bool on) {
  visit_parameters("", [on](const std::string&, Var<T>& p) { p.node()->requires_grad = on; });
}

template <typename T>
Conv2d<T>::Conv2d(int in_channels, int out_channels, int kernel, int stride_, Rng& rng,
                  bool with_bias)
    : stride(stride_), padding(kernel / 2) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1)
    throw ShapeError("Conv2d: channel counts and kernel must be positive");
  Tensor<T> w(Shape{out_channels, in_channels, kernel, kernel});
  const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  const double bound = std::sqrt(6.0 / ((1.0 + 0.2 * 0.2) * fan_in));
  for (auto& v : w.values()) v = static_cast<T>(rng.uniform(-bound, bound));
  weight = Var<T>(std::move(w), true);
  if (with_bias) bias = Var<T>(Tensor<T>(Shape{1, out_channels, 1, 1}), true);
}

template <typename T>
Var<T> Conv2d<T>::operator()(const Var<T>& x) const {
  return conv2d(x, weight, bias, stride, padding);
}

template <typename T>
void Conv2d<T>::visit_parameters(const std::string& prefix, const typename Module<T>::Visitor& fn) {
  fn(prefix + "weight", weight);
  if (bias.defined()) fn(prefix + "bias", bias);
}

template <typename T>
void icnr_init(Conv2d<T>& conv, int scale_factor, Rng& rng) {
  const Shape s = conv.weight.shape();
  const int group = scale_factor * scale_factor;
  if (s.n % group != 0) throw ShapeError("icnr_init: output channels not divisible by scale^2");
  const double fan_in = static_cast<double>(s.c) * s.h * s.w;
  const double bound = std::sqrt(6.0 / ((1.0 + 0.2 * 0.2) * fan_in));
  Tensor<T>& w = conv.weight.mutable_value();
  const std::size_t per_kernel = static_cast<std::size_t>(s.c) * s.h * s.w;
  for (int base = 0; base < s.n; base += group) {
    std::vector<T> kernel(per_kernel);
    for (auto& v : kernel) v = static_cast<T>(rng.uniform(-bound, bound));
    for (int q = 0; q < group; ++q)
      std::copy(kernel.begin(), kernel.end(), w.data() + (base + q) * per_kernel);
  }
  if (conv.bias.defined()) conv.bias.mutable_value().fill(T{0});
}

template <typename T>
InstanceNorm2d<T>::InstanceNorm2d(int channels, T eps_)
    : gamma(Tensor<T>(Shape{1, channels, 1, 1}, T{1}), true),
      beta(Tensor<T>(Shape{1, channels, 1, 1}, T{0}), true),
      eps(eps_) {}

template <typename T>
Var<T> InstanceNorm2d<T>::operator()(const Var<T>& x) const {
  return instance_norm(x, gamma, beta, eps);
}

template <typename T>
void InstanceNorm2d<T>::visit_parameters(const std::string& prefix,
                                         const typename Module<T>::Visitor& fn) {
  fn(prefix + "gamma", gamma);
  fn(prefix + "beta", beta);
}

template class Module<float>;
template class Module<double>;
template class Conv2d<float>;
template class Conv2d<double>;
template class InstanceNorm2d<float>;
template class InstanceNorm2d<double>;
template void icnr_init(Conv2d<float>&, int, Rng&);
template void icnr_init(Conv2d<double>&, int, Rng&);

}  // namespace irisdeform::nn
