// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "irisdeform/image.hpp"

namespace irisdeform::geometry {

inline constexpr int kDefaultGridWidth = 512;
inline constexpr int kDefaultGridHeight = 64;

/// Pupil and iris boundary circles in pixel coordinates. Pixel (x, y) has
/// its center at the integer point (x, y); x grows rightward, y downward.
struct EyeAnnotation {
  double pupil_x = 0.0;
  double pupil_y = 0.0;
  double pupil_r = 0.0;
  double iris_x = 0.0;
  double iris_y = 0.0;
  double iris_r = 0.0;
  std::string eye_id;

  /// Throws GeometryError unless 0 < r_p < r_i and the pupil disk lies
  /// inside the iris disk.
  void validate() const;
  bool valid() const noexcept;

  /// All six circle parameters multiplied by `s` (eye_id kept).
  EyeAnnotation scaled(double s) const;
  /// Concentric-pupil variant of this annotation with r_p = ratio * r_i.
  EyeAnnotation with_ratio(double ratio) const;

  bool operator==(const EyeAnnotation&) const = default;
};

std::string annotation_to_json(const EyeAnnotation& ann);
/// Accepts {eye_id, pupil:{x,y,r}, iris:{x,y,r}}; throws ParseError.
EyeAnnotation annotation_from_json(std::string_view text);

struct Point2 {
  double x = 0.0;
  double y = 0.0;
};

struct PolarCoord {
  double r = 0.0;      // 0 on the pupil boundary, 1 on the iris boundary
  double theta = 0.0;  // [0, 2*pi)
};

/// Cartesian source location of normalized coordinate (r, theta):
/// linear interpolation between the pupil and iris boundary points.
Point2 source_point(const EyeAnnotation& ann, double r, double theta);

/// Inverse of source_point. Returns nullopt when no radial coordinate in
/// [0, 1] reaches (x, y), i.e. the point is outside the closed annulus.
std::optional<PolarCoord> polar_coordinate(const EyeAnnotation& ann, double x, double y);

/// Row-to-radius and column-to-angle conventions of the normalized grid.
inline double row_radius(int row, int grid_height) {
  return static_cast<double>(row) / static_cast<double>(grid_height - 1);
}
double column_angle(int col, int grid_width);

/// Bilinear interpolation footprint of one normalized sample. Weights are
/// all zero and `valid` false when the location is outside the image.
struct SampleTap {
  std::array<std::int32_t, 4> index{};
  std::array<double, 4> weight{};
  bool valid = false;
};

/// Precomputed source footprints for a (grid_height x grid_width)
/// normalization of a (image_height x image_width) frame. The same plan
/// drives `normalize` and the differentiable normalization in the losses.
struct SamplingPlan {
  int image_height = 0;
  int image_width = 0;
  int grid_height = 0;
  int grid_width = 0;
  std::vector<SampleTap> taps;  // row-major over the grid
};

SamplingPlan make_sampling_plan(const EyeAnnotation& ann, int image_height, int image_width,
                                int grid_width, int grid_height);

/// Bilinear footprint at continuous (x, y); in bounds iff
/// 0 <= x <= width-1 and 0 <= y <= height-1.
SampleTap bilinear_tap(double x, double y, int height, int width);

struct NormalizedIris {
  Image pixels;    // grid_height x grid_width
  Mask occlusion;  // 1 where the sample came from inside the image
};

NormalizedIris normalize(const Image& image, const EyeAnnotation& ann,
                         int grid_width = kDefaultGridWidth,
                         int grid_height = kDefaultGridHeight);

/// Occlusion additionally cleared where `valid_region` (same size as the
/// image) is 0 at the nearest pixel, e.g. eyelid-clipped masks.
NormalizedIris normalize(const Image& image, const EyeAnnotation& ann, const Mask& valid_region,
                         int grid_width, int grid_height);

/// Inverse warp onto a (height x width) frame. Pixels outside the closed
/// annulus of `ann` are 0.
Image denormalize(const NormalizedIris& norm, const EyeAnnotation& ann, int height, int width);

/// 1 on pixel centers strictly inside the iris circle and strictly outside
/// the pupil circle.
Mask rasterize_mask(const EyeAnnotation& ann, int height, int width);

double pupil_to_iris_ratio(const EyeAnnotation& ann);

/// Rubber-sheet rectification of `image` (geometry `from`) onto geometry
/// `to`: the target annulus is resampled linearly, the target pupil is
/// filled with the mean source pupil intensity, everything else is copied.
Image linear_rectify(const Image& image, const EyeAnnotation& from, const EyeAnnotation& to,
                     int grid_width = kDefaultGridWidth, int grid_height = kDefaultGridHeight);

}  // namespace irisdeform::geometry
