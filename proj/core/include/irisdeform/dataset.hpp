// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "irisdeform/geometry.hpp"
#include "irisdeform/image.hpp"

namespace irisdeform::dataset {

inline constexpr double kRatioMin = 0.2;
inline constexpr double kRatioMax = 0.7;
inline constexpr double kBinWidth = 0.1;
inline constexpr int kBinCount = 5;

struct SampleRecord {
  std::string sample_id;
  std::string image_path;
  std::string mask_path;  // empty: rasterize from the annotation
  geometry::EyeAnnotation ann;
  double ratio = 0.0;
  std::optional<int> bin;  // nullopt: out of range

  const std::string& eye_id() const { return ann.eye_id; }
  bool operator==(const SampleRecord&) const = default;
};

struct PairRecord {
  std::string pair_id;
  SampleRecord source;
  SampleRecord target;
  bool operator==(const PairRecord&) const = default;
};

struct SplitSpec {
  std::vector<std::string> train_eyes;
  std::vector<std::string> val_eyes;
  std::vector<std::string> test_eyes;
  bool operator==(const SplitSpec&) const = default;
};

/// [0.2, 0.3) -> 0, ..., [0.6, 0.7] -> 4; anything else nullopt.
std::optional<int> bin_for_ratio(double ratio);

/// Recomputes ratio and bin for every record.
std::vector<SampleRecord> assign_bins(std::vector<SampleRecord> records);

inline constexpr int kDefaultPairCap = 20;

/// Same-eye pairs from each bin to every higher bin, at most `per_pair_cap`
/// per (source bin, target bin, eye), drawn without replacement. Output is
/// ordered by eye, source bin, target bin, then draw order.
std::vector<PairRecord> build_pairs(const std::vector<SampleRecord>& records, int per_pair_cap,
                                    std::uint64_t seed);

/// Eyes are sorted, shuffled, and cut into (train, val, test); val and test
/// get round(n * fraction), train the remainder. Throws SplitError with
/// fewer than 3 eyes or fractions not summing to 1.
SplitSpec split_eye_disjoint(const std::vector<SampleRecord>& records,
                             std::array<double, 3> fractions, std::uint64_t seed);

std::vector<SampleRecord> select_eyes(const std::vector<SampleRecord>& records,
                                      const std::vector<std::string>& eyes);
std::vector<PairRecord> select_eyes(const std::vector<PairRecord>& pairs,
                                    const std::vector<std::string>& eyes);

/// Number of eye ids appearing in more than one partition plus the number
/// of manifest eyes in none.
int split_violations(const SplitSpec& split, const std::vector<SampleRecord>& records);

// JSON-lines manifests. Paths are stored relative to the manifest file's
// directory and resolved back to absolute paths on read.
std::string record_to_json(const SampleRecord& r, const std::filesystem::path& base = {});
SampleRecord record_from_json(std::string_view line, const std::filesystem::path& base = {});
void write_manifest(const std::filesystem::path& path, const std::vector<SampleRecord>& records);
std::vector<SampleRecord> read_manifest(const std::filesystem::path& path);
void write_pairs(const std::filesystem::path& path, const std::vector<PairRecord>& pairs);
std::vector<PairRecord> read_pairs(const std::filesystem::path& path);
void write_split(const std::filesystem::path& path, const SplitSpec& split);
SplitSpec read_split(const std::filesystem::path& path);

struct LoadedSample {
  Image image;
  Mask mask;
};
/// Reads the image and its mask (rasterized when the record has none).
LoadedSample load_sample(const SampleRecord& r);

}  // namespace irisdeform::dataset
