// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <vector>

#include "irisdeform/filter_bank.hpp"
#include "irisdeform/geometry.hpp"
#include "irisdeform/image.hpp"

namespace irisdeform::eval {

/// Binary code of `rows` radial positions x `cols` angular positions x
/// `filters` kernels. Bits are packed per column so that circular column
/// shifts are index offsets.
class IrisCode {
 public:
  IrisCode() = default;
  IrisCode(int rows, int cols, int filters);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  int filters() const { return filters_; }
  bool same_shape(const IrisCode& o) const {
    return rows_ == o.rows_ && cols_ == o.cols_ && filters_ == o.filters_;
  }

  bool bit(int row, int col, int filter) const;
  bool valid(int row, int col, int filter) const;
  void set(int row, int col, int filter, bool bit, bool valid);
  std::size_t valid_count() const;

  const std::uint64_t* bit_words(int col) const { return &bits_[static_cast<std::size_t>(col) * words_]; }
  const std::uint64_t* valid_words(int col) const {
    return &valid_[static_cast<std::size_t>(col) * words_];
  }
  int words_per_column() const { return words_; }

  /// Circular shift of columns: result column c holds this column c - s.
  IrisCode shifted(int s) const;
  IrisCode complemented() const;
  bool operator==(const IrisCode&) const = default;

 private:
  std::size_t slot(int row, int filter) const {
    return static_cast<std::size_t>(row) * filters_ + filter;
  }
  int rows_ = 0, cols_ = 0, filters_ = 0, words_ = 0;
  std::vector<std::uint64_t> bits_, valid_;
};

/// Real-valued filter responses on the normalized grid with circular
/// wrap in angle and valid support in radius: {filters} x (gh - h_f + 1) x gw.
struct FilterResponse {
  int rows = 0, cols = 0, filters = 0;
  std::vector<double> values;
  std::vector<std::uint8_t> valid;
};
FilterResponse filter_normalized(const geometry::NormalizedIris& norm, const FilterBank& bank);

/// bit = response > 0; valid cleared where the kernel window touches an
/// occluded sample.
IrisCode encode_normalized(const geometry::NormalizedIris& norm, const FilterBank& bank);
IrisCode encode_iris(const Image& image, const geometry::EyeAnnotation& ann, const FilterBank& bank,
                     int grid_width = geometry::kDefaultGridWidth,
                     int grid_height = geometry::kDefaultGridHeight);
IrisCode encode_iris(const Image& image, const geometry::EyeAnnotation& ann, const Mask& valid_region,
                     const FilterBank& bank, int grid_width, int grid_height);

inline constexpr int kDefaultMaxShift = 8;

/// Minimum over circular shifts in [-max_shift, max_shift] of the fraction
/// of jointly valid bits that disagree. Throws MetricError when no shift
/// has a jointly valid bit, ShapeError on shape mismatch.
double compare_codes(const IrisCode& a, const IrisCode& b, int max_shift = kDefaultMaxShift);

}  // namespace irisdeform::eval
