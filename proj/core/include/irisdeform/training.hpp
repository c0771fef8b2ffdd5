// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "irisdeform/dataset.hpp"
#include "irisdeform/deform_net.hpp"
#include "irisdeform/losses.hpp"

namespace irisdeform::train {

enum class OptimizerKind { kAdam, kSgd };

struct TrainConfig {
  std::uint64_t seed = 0;
  int batch_size = 8;
  double learning_rate = 2e-4;
  int max_steps = 1000;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  loss::LossWeights weights;
  nn::ModelConfig model;
  int checkpoint_every = 0;  // 0: only final
  int validate_every = 0;    // 0: never during training
  /// Also train each pair in the reverse direction (target -> source).
  bool bidirectional = true;
  int grid_width = geometry::kDefaultGridWidth;
  int grid_height = geometry::kDefaultGridHeight;
  std::uint64_t perceptual_seed = 23;

  void validate() const;
  std::string to_json() const;
  /// Unknown keys are rejected; missing keys keep defaults.
  static TrainConfig from_json(std::string_view text);
};

/// One training or validation example.
struct Example {
  std::string id;
  const Image* source = nullptr;
  const Mask* target_mask = nullptr;
  const Image* target = nullptr;
  geometry::EyeAnnotation target_ann;
};

/// Loads every referenced image once and expands pairs into examples.
class ExampleSet {
 public:
  ExampleSet(const std::vector<dataset::PairRecord>& pairs, bool bidirectional);
  ExampleSet(const ExampleSet&) = delete;
  ExampleSet& operator=(const ExampleSet&) = delete;
  ExampleSet(ExampleSet&&) = default;
  std::size_t size() const { return examples_.size(); }
  const Example& operator[](std::size_t i) const { return examples_[i]; }
  int height() const { return height_; }
  int width() const { return width_; }

 private:
  std::map<std::string, dataset::LoadedSample> cache_;
  std::vector<Example> examples_;
  int height_ = 0, width_ = 0;
};

/// Frozen evaluators used by the composite loss.
struct LossResources {
  const Segmenter<float>* segmenter = nullptr;
  FilterBank bank;
};

/// Example indices of batch `step` (1-based): a seeded permutation per
/// epoch, read sequentially with wrap-around into the next epoch.
std::vector<std::size_t> batch_indices(std::uint64_t seed, std::size_t dataset_size, int batch_size,
                                       std::int64_t step);

struct StepRecord {
  std::int64_t step = 0;
  loss::LossValues values;
};

struct TrainResult {
  std::filesystem::path final_checkpoint;
  std::filesystem::path best_checkpoint;  // empty when never validated
  double best_val_total = 0.0;
  std::vector<StepRecord> log;
};

struct TrainOptions {
  /// Checkpoint to continue from; the CSV log is truncated to its step.
  std::filesystem::path resume_from;
  /// Called after every step; return false to stop early (no final save).
  std::function<bool(const StepRecord&)> on_step;
};

inline constexpr const char* kMetricsHeader = "step,total,mask,identity,l1,perceptual";

/// Writes metrics.csv, checkpoints.jsonl, ckpt_step<k>.bin, best.bin and
/// final.bin into `run_dir`. Throws TrainingError on a non-finite loss
/// after dumping the batch to nonfinite_step<k>.json.
TrainResult train(const std::vector<dataset::PairRecord>& pairs,
                  const std::vector<dataset::PairRecord>& val_pairs, const TrainConfig& cfg,
                  const LossResources& resources, const std::filesystem::path& run_dir,
                  const TrainOptions& options = {});

/// Mean per-term losses over the validation examples, without touching the
/// weights. Throws TrainingError on an empty set.
loss::LossValues validate(const nn::DeformNet<float>& model, const ExampleSet& val,
                          const loss::LossWeights& weights, const LossResources& resources,
                          int grid_width, int grid_height, int batch_size = 8,
                          std::uint64_t perceptual_seed = 23);

/// Double-precision weighted sum used for logged totals.
double weighted_total(const loss::LossValues& v, const loss::LossWeights& w);

std::vector<StepRecord> read_metrics(const std::filesystem::path& csv);

}  // namespace irisdeform::train
