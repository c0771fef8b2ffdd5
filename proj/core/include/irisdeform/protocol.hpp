// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "irisdeform/dataset.hpp"
#include "irisdeform/deform_net.hpp"
#include "irisdeform/filter_bank.hpp"
#include "irisdeform/iris_code.hpp"
#include "irisdeform/metrics.hpp"
#include "irisdeform/segmenter.hpp"

namespace irisdeform::eval {

/// Deforms a probe so its iris takes the gallery's shape.
class Rectifier {
 public:
  virtual ~Rectifier() = default;
  virtual std::string name() const = 0;
  virtual Image rectify(const std::string& pair_id, const dataset::SampleRecord& probe,
                        const Image& probe_image, const dataset::SampleRecord& gallery,
                        const Mask& gallery_mask) const = 0;
};

class LinearRectifier final : public Rectifier {
 public:
  explicit LinearRectifier(int grid_width = geometry::kDefaultGridWidth,
                           int grid_height = geometry::kDefaultGridHeight)
      : gw_(grid_width), gh_(grid_height) {}
  std::string name() const override { return "linear"; }
  Image rectify(const std::string&, const dataset::SampleRecord& probe, const Image& probe_image,
                const dataset::SampleRecord& gallery, const Mask&) const override;

 private:
  int gw_, gh_;
};

class ModelRectifier final : public Rectifier {
 public:
  explicit ModelRectifier(const nn::DeformNet<float>& model) : model_(model) {}
  std::string name() const override { return "model"; }
  Image rectify(const std::string&, const dataset::SampleRecord&, const Image& probe_image,
                const dataset::SampleRecord&, const Mask& gallery_mask) const override;

 private:
  const nn::DeformNet<float>& model_;
};

/// Reads `<pair_id>.png` from a directory holding an index.json of the form
/// {"pairs": [{"pair_id", "probe", "gallery"}, ...]}.
class ExternalDirRectifier final : public Rectifier {
 public:
  explicit ExternalDirRectifier(std::filesystem::path dir);
  std::string name() const override { return "external-dir"; }
  Image rectify(const std::string& pair_id, const dataset::SampleRecord& probe, const Image&,
                const dataset::SampleRecord& gallery, const Mask&) const override;

 private:
  std::filesystem::path dir_;
  std::map<std::string, std::pair<std::string, std::string>> index_;
};

struct EvalConfig {
  int repeats = 10;
  int pairs_per_subject = 10;
  /// Gallery and probe bins; nullopt picks the lowest and highest
  /// populated curated bins of the manifest.
  std::optional<int> gallery_bin;
  std::optional<int> probe_bin;
  /// Other eyes compared against each gallery frame (0 = all).
  int imposters_per_gallery = 2;
  int max_shift = kDefaultMaxShift;
  int grid_width = geometry::kDefaultGridWidth;
  int grid_height = geometry::kDefaultGridHeight;
  std::uint64_t seed = 0;

  void validate() const;
  std::string to_json() const;
  static EvalConfig from_json(std::string_view text);
};

struct Comparison {
  std::string pair_id;
  std::string gallery_id, probe_id;
  std::string gallery_eye, probe_eye;
  bool genuine = false;
  int repeat = 0;
  double score = 0.0;
};

struct RepeatStats {
  double genuine_mean = 0, imposter_mean = 0, dprime = 0;
  std::size_t n_genuine = 0, n_imposter = 0;
};

struct EvalReport {
  std::string rectifier;
  EvalConfig config;
  int gallery_bin = 0, probe_bin = 0;
  /// Percent differing bits: mean and std across repeats of per-repeat means.
  MeanStd genuine_percent, imposter_percent;
  MeanStd dprime;
  double eer = 0, auc = 0;
  std::vector<RocPoint> roc;
  std::vector<RepeatStats> repeats;
  std::vector<std::string> eyes_used, eyes_skipped, warnings;
  std::vector<Comparison> comparisons;
  /// Construction audit: genuine scores across eyes, imposters within an eye.
  int audit_violations = 0;
  double runtime_seconds = 0;

  std::string to_json(bool include_comparisons = false) const;
  std::string roc_csv() const;
};

/// (probe, gallery) pairs the protocol will rectify, for external tools.
struct ProtocolPair {
  std::string pair_id;
  dataset::SampleRecord probe, gallery;
};
std::vector<ProtocolPair> protocol_pairs(const std::vector<dataset::SampleRecord>& test,
                                         const EvalConfig& cfg);

/// Runs the gallery/probe protocol. Eyes without frames in both bins are
/// skipped with a warning; throws ProtocolError when none remain.
EvalReport run_protocol(const std::vector<dataset::SampleRecord>& test, const Rectifier& rectifier,
                        const FilterBank& bank, const EvalConfig& cfg);

/// Mean IoU between the thresholded segmentation of each generated image
/// and the target mask it was asked to adopt.
double mask_adherence(const nn::DeformNet<float>& model, const Segmenter<float>& seg,
                      const std::vector<dataset::PairRecord>& pairs);

/// 256x256 grayscale plot of the ROC curve (FMR on x, TMR on y).
Image render_roc(const std::vector<RocPoint>& roc, int size = 256);

}  // namespace irisdeform::eval
