// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "irisdeform/tensor.hpp"

namespace irisdeform::nn {

/// First-order optimizer over a fixed parameter list. Parameters without a
/// gradient are skipped on a step.
class Optimizer {
 public:
  virtual ~Optimizer() = default;
  virtual void step() = 0;
  void zero_grad();
  std::int64_t steps() const { return steps_; }
  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }

  /// Serializable state: step count plus named moment buffers.
  virtual std::vector<std::pair<std::string, Tensor<float>>> state_tensors() const = 0;
  virtual void load_state(std::int64_t steps,
                          const std::vector<std::pair<std::string, Tensor<float>>>& tensors) = 0;

 protected:
  Optimizer(std::vector<Var<float>> params, double lr);
  std::vector<Var<float>> params_;
  double lr_;
  std::int64_t steps_ = 0;
};

class Sgd final : public Optimizer {
 public:
  Sgd(std::vector<Var<float>> params, double lr, double momentum = 0.0);
  void step() override;
  std::vector<std::pair<std::string, Tensor<float>>> state_tensors() const override;
  void load_state(std::int64_t steps,
                  const std::vector<std::pair<std::string, Tensor<float>>>& tensors) override;

 private:
  double momentum_;
  std::vector<Tensor<float>> velocity_;
};

class Adam final : public Optimizer {
 public:
  Adam(std::vector<Var<float>> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8);
  void step() override;
  std::vector<std::pair<std::string, Tensor<float>>> state_tensors() const override;
  void load_state(std::int64_t steps,
                  const std::vector<std::pair<std::string, Tensor<float>>>& tensors) override;

 private:
  double beta1_, beta2_, eps_;
  std::vector<Tensor<float>> m_, v_;
};

}  // namespace irisdeform::nn
