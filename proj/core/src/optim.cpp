// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/optim.hpp"

#include <cmath>

namespace irisdeform::nn {
namespace {

void load_buffers(std::vector<Tensor<float>>& dst, const std::string& prefix,
                  const std::vector<std::pair<std::string, Tensor<float>>>& src, std::size_t offset) {
  for (std::size_t i = 0; i < dst.size(); ++i) {
    const auto& [name, t] = src.at(offset + i);
    if (name != prefix + std::to_string(i) || t.shape() != dst[i].shape())
      throw CheckpointError("optimizer state mismatch at " + name);
    dst[i] = t;
  }
}

}  // namespace

Optimizer::Optimizer(std::vector<Var<float>> params, double lr) : params_(std::move(params)), lr_(lr) {
  if (!(lr > 0.0)) throw ConfigError("learning rate must be > 0");
}

void Optimizer::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

Sgd::Sgd(std::vector<Var<float>> params, double lr, double momentum)
    : Optimizer(std::move(params), lr), momentum_(momentum) {
  for (const auto& p : params_) velocity_.emplace_back(p.shape());
}

void Sgd::step() {
  ++steps_;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    auto& w = params_[i].mutable_value();
    const auto& g = params_[i].grad();
    auto& vel = velocity_[i];
    for (std::size_t j = 0; j < w.numel(); ++j) {
      vel.data()[j] = static_cast<float>(momentum_ * vel.data()[j] + g.data()[j]);
      w.data()[j] -= static_cast<float>(lr_ * vel.data()[j]);
    }
  }
}

std::vector<std::pair<std::string, Tensor<float>>> Sgd::state_tensors() const {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (std::size_t i = 0; i < velocity_.size(); ++i) out.emplace_back("velocity." + std::to_string(i), velocity_[i]);
  return out;
}

void Sgd::load_state(std::int64_t steps, const std::vector<std::pair<std::string, Tensor<float>>>& t) {
  if (t.size() != velocity_.size()) throw CheckpointError("optimizer state size mismatch");
  load_buffers(velocity_, "velocity.", t, 0);
  steps_ = steps;
}

Adam::Adam(std::vector<Var<float>> params, double lr, double beta1, double beta2, double eps)
    : Optimizer(std::move(params), lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape());
    v_.emplace_back(p.shape());
  }
}

void Adam::step() {
  ++steps_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
  const float b1 = static_cast<float>(beta1_), b2 = static_cast<float>(beta2_);
  const float step_size = static_cast<float>(lr_ / c1);
  const float inv_sqrt_c2 = static_cast<float>(1.0 / std::sqrt(c2));
  const float eps = static_cast<float>(eps_);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (!params_[i].has_grad()) continue;
    float* w = params_[i].mutable_value().data();
    const float* g = params_[i].grad().data();
    float* m = m_[i].data();
    float* v = v_[i].data();
    const std::size_t n = m_[i].numel();
    for (std::size_t j = 0; j < n; ++j) {
      m[j] = b1 * m[j] + (1.0f - b1) * g[j];
      v[j] = b2 * v[j] + (1.0f - b2) * g[j] * g[j];
      w[j] -= step_size * m[j] / (std::sqrt(v[j]) * inv_sqrt_c2 + eps);
    }
  }
}

std::vector<std::pair<std::string, Tensor<float>>> Adam::state_tensors() const {
  std::vector<std::pair<std::string, Tensor<float>>> out;
  for (std::size_t i = 0; i < m_.size(); ++i) out.emplace_back("m." + std::to_string(i), m_[i]);
  for (std::size_t i = 0; i < v_.size(); ++i) out.emplace_back("v." + std::to_string(i), v_[i]);
  return out;
}

void Adam::load_state(std::int64_t steps, const std::vector<std::pair<std::string, Tensor<float>>>& t) {
  if (t.size() != m_.size() + v_.size()) throw CheckpointError("optimizer state size mismatch");
  load_buffers(m_, "m.", t, 0);
  load_buffers(v_, "v.", t, m_.size());
  steps_ = steps;
}

}  // namespace irisdeform::nn
