// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "irisdeform/dataset.hpp"
#include "irisdeform/layers.hpp"

namespace irisdeform {

struct SegmenterConfig {
  int width = 12;
  std::uint64_t seed = 11;
  std::string to_json() const;
  static SegmenterConfig from_json(std::string_view text);
  bool operator==(const SegmenterConfig&) const = default;
};

/// Small two-level encoder-decoder producing one iris logit per pixel.
template <typename T>
class Segmenter : public nn::Module<T> {
 public:
  explicit Segmenter(const SegmenterConfig& cfg = {});
  const SegmenterConfig& config() const { return cfg_; }

  /// x: {N, 1, H, W}; any H, W (reflect-padded internally to a multiple of 4).
  nn::Var<T> logits(const nn::Var<T>& x) const;
  Mask segment(const Image& image) const;

  void visit_parameters(const std::string& prefix, const typename nn::Module<T>::Visitor& fn) override;

 private:
  nn::Var<T> forward(const nn::Var<T>& x) const;
  SegmenterConfig cfg_;
  nn::Conv2d<T> in_, down1_, down2_, mid_, up1_, fuse1_, up0_, fuse0_, head_;
};

double mask_iou(const Mask& a, const Mask& b);

struct SegmenterTrainConfig {
  int max_epochs = 40;
  int batch_size = 8;
  double learning_rate = 2e-3;
  double target_iou = 0.95;
  std::uint64_t seed = 11;
  /// Images per epoch drawn from the training records (0 = all).
  int samples_per_epoch = 0;
};

struct SegmenterReport {
  double val_iou = 0.0;
  int epochs = 0;
  std::vector<double> epoch_iou;
};

/// Trains with per-pixel BCE until the mean validation IoU reaches the
/// target, then freezes. Throws TrainingError with the IoU history when the
/// budget runs out first.
std::unique_ptr<Segmenter<float>> prepare_segmenter(const std::vector<dataset::SampleRecord>& train,
                                                    const std::vector<dataset::SampleRecord>& val,
                                                    const SegmenterConfig& cfg,
                                                    const SegmenterTrainConfig& tcfg,
                                                    SegmenterReport* report = nullptr);

double segmenter_iou(const Segmenter<float>& seg, const std::vector<dataset::SampleRecord>& records);

inline constexpr const char* kSegmenterKind = "segmenter";
void save_segmenter(const std::filesystem::path& path, Segmenter<float>& seg, const std::string& meta = "{}");
/// Loaded segmenters are frozen (parameters do not require gradients).
std::unique_ptr<Segmenter<float>> load_segmenter(const std::filesystem::path& path);

}  // namespace irisdeform
