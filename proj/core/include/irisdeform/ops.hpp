// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <memory>
#include <vector>

#include "irisdeform/geometry.hpp"
#include "irisdeform/tensor.hpp"

namespace irisdeform::nn {

// Differentiable operators over NCHW tensors. All ops validate shapes and
// throw ShapeError on mismatch. Scalars are {1,1,1,1} tensors.

/// Square-kernel cross-correlation. weight: {Cout, Cin, k, k};
/// bias: {1, Cout, 1, 1} or undefined. Zero padding.
template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, int stride, int padding);

template <typename T>
Var<T> leaky_relu(const Var<T>& x, T slope);

template <typename T>
Var<T> sigmoid(const Var<T>& x);

/// Per-sample, per-channel normalization with affine {1, C, 1, 1} scale/shift.
template <typename T>
Var<T> instance_norm(const Var<T>& x, const Var<T>& gamma, const Var<T>& beta, T eps);

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& parts);

/// Bilinear resampling with half-pixel centers (align_corners = false).
/// Halving averages each 2x2 block; doubling interpolates.
template <typename T>
Var<T> resize_bilinear(const Var<T>& x, int out_h, int out_w);

/// out[c][s*y+dy][s*x+dx] = in[c*s*s + dy*s + dx][y][x].
template <typename T>
Var<T> pixel_shuffle(const Var<T>& x, int scale);

/// Reflect padding (edge pixel not repeated), and the matching crop.
template <typename T>
Var<T> reflect_pad(const Var<T>& x, int bottom, int right);
template <typename T>
Var<T> crop(const Var<T>& x, int height, int width);

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T>
Var<T> scale(const Var<T>& a, T factor);
template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset);

/// Sum of scalar variables with constant coefficients.
template <typename T>
Var<T> weighted_sum(const std::vector<Var<T>>& scalars, const std::vector<T>& weights);

/// mean(|a - b|) as a scalar.
template <typename T>
Var<T> mean_abs_diff(const Var<T>& a, const Var<T>& b);

/// mean((a - b)^2) as a scalar.
template <typename T>
Var<T> mean_sq_diff(const Var<T>& a, const Var<T>& b);

template <typename T>
Var<T> mean(const Var<T>& x);

/// Binary cross-entropy on logits against {0,1} targets, averaged.
template <typename T>
Var<T> bce_with_logits(const Var<T>& logits, const Tensor<T>& targets);

/// x / sqrt(sum_c x^2 + eps) at every (n, h, w).
template <typename T>
Var<T> channel_normalize(const Var<T>& x, T eps);

/// Gather through per-sample sampling plans: x is {N, 1, H, W}; output is
/// {N, 1, gh, gw}. Samples with invalid taps are 0.
template <typename T>
Var<T> sample_plan(const Var<T>& x, const std::vector<std::shared_ptr<const geometry::SamplingPlan>>& plans);

/// Rows [begin, end) of the batch.
template <typename T>
Var<T> batch_slice(const Var<T>& x, int begin, int end);

}  // namespace irisdeform::nn
