// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "json.hpp"

namespace irisdeform::geometry {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double wrap_angle(double theta) {
  double t = std::fmod(theta, kTwoPi);
  if (t < 0.0) t += kTwoPi;
  if (t >= kTwoPi) t = 0.0;
  return t;
}

// Bilinear sample of a normalized grid: rows clamp to [0, h-1], columns wrap.
double sample_polar(const Image& grid, double row, double col) {
  const int h = grid.height();
  const int w = grid.width();
  row = std::clamp(row, 0.0, static_cast<double>(h - 1));
  col = std::fmod(col, static_cast<double>(w));
  if (col < 0.0) col += w;
  const int r0 = std::min(static_cast<int>(std::floor(row)), std::max(h - 2, 0));
  const int r1 = std::min(r0 + 1, h - 1);
  const double fr = row - r0;
  const int c0 = static_cast<int>(std::floor(col)) % w;
  const int c1 = (c0 + 1) % w;
  const double fc = col - std::floor(col);
  const double top = (1.0 - fc) * grid(r0, c0) + fc * grid(r0, c1);
  const double bot = (1.0 - fc) * grid(r1, c0) + fc * grid(r1, c1);
  return (1.0 - fr) * top + fr * bot;
}

}  // namespace

void EyeAnnotation::validate() const {
  const auto finite = [](double v) { return std::isfinite(v); };
  if (!(finite(pupil_x) && finite(pupil_y) && finite(pupil_r) && finite(iris_x) &&
        finite(iris_y) && finite(iris_r)))
    throw GeometryError("annotation has non-finite parameters");
  if (!(pupil_r > 0.0)) throw GeometryError("pupil radius must be positive");
  if (!(pupil_r < iris_r)) throw GeometryError("pupil radius must be smaller than iris radius");
  const double d = std::hypot(pupil_x - iris_x, pupil_y - iris_y);
  if (d + pupil_r > iris_r * (1.0 + 1e-12))
    throw GeometryError("pupil disk extends outside the iris disk");
}

bool EyeAnnotation::valid() const noexcept {
  try {
    validate();
    return true;
  } catch (const GeometryError&) {
    return false;
  }
}

EyeAnnotation EyeAnnotation::scaled(double s) const {
  EyeAnnotation a = *this;
  a.pupil_x *= s;
  a.pupil_y *= s;
  a.pupil_r *= s;
  a.iris_x *= s;
  a.iris_y *= s;
  a.iris_r *= s;
  return a;
}

EyeAnnotation EyeAnnotation::with_ratio(double ratio) const {
  if (!(ratio > 0.0 && ratio < 1.0)) throw GeometryError("ratio must lie in (0, 1)");
  EyeAnnotation a = *this;
  a.pupil_x = iris_x;
  a.pupil_y = iris_y;
  a.pupil_r = ratio * iris_r;
  return a;
}

std::string annotation_to_json(const EyeAnnotation& ann) {
  const nlohmann::json j = {
      {"eye_id", ann.eye_id},
      {"pupil", {{"x", ann.pupil_x}, {"y", ann.pupil_y}, {"r", ann.pupil_r}}},
      {"iris", {{"x", ann.iris_x}, {"y", ann.iris_y}, {"r", ann.iris_r}}},
  };
  return j.dump();
}

EyeAnnotation annotation_from_json(std::string_view text) {
  try {
    const auto j = nlohmann::json::parse(text);
    EyeAnnotation a;
    a.eye_id = j.value("eye_id", std::string{});
    a.pupil_x = j.at("pupil").at("x").get<double>();
    a.pupil_y = j.at("pupil").at("y").get<double>();
    a.pupil_r = j.at("pupil").at("r").get<double>();
    a.iris_x = j.at("iris").at("x").get<double>();
    a.iris_y = j.at("iris").at("y").get<double>();
    a.iris_r = j.at("iris").at("r").get<double>();
    return a;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("annotation: ") + e.what());
  }
}

double column_angle(int col, int grid_width) {
  return kTwoPi * static_cast<double>(col) / static_cast<double>(grid_width);
}

Point2 source_point(const EyeAnnotation& ann, double r, double theta) {
  const double c = std::cos(theta);
  const double s = std::sin(theta);
  return {(1.0 - r) * (ann.pupil_x + ann.pupil_r * c) + r * (ann.iris_x + ann.iris_r * c),
          (1.0 - r) * (ann.pupil_y + ann.pupil_r * s) + r * (ann.iris_y + ann.iris_r * s)};
}

std::optional<PolarCoord> polar_coordinate(const EyeAnnotation& ann, double x, double y) {
  // P = c_p + r*d + (r_p + r*dr) * u(theta); solve |q - r d| = r_p + r dr for r.
  const double qx = x - ann.pupil_x;
  const double qy = y - ann.pupil_y;
  const double dx = ann.iris_x - ann.pupil_x;
  const double dy = ann.iris_y - ann.pupil_y;
  const double dr = ann.iris_r - ann.pupil_r;
  const double a = dx * dx + dy * dy - dr * dr;  // <= 0 for a valid annotation
  const double b = qx * dx + qy * dy + ann.pupil_r * dr;
  const double c = qx * qx + qy * qy - ann.pupil_r * ann.pupil_r;
  // a r^2 - 2 b r + c = 0
  double r;
  if (std::abs(a) < 1e-12 * (dr * dr + 1.0)) {
    if (std::abs(b) < 1e-300) return std::nullopt;
    r = c / (2.0 * b);
  } else {
    const double disc = b * b - a * c;
    if (disc < 0.0) return std::nullopt;
    // With a < 0 the root below keeps r_p + r*dr >= 0 on the annulus side.
    const double sq = std::sqrt(disc);
    const double denom = b + sq;
    r = std::abs(denom) > 1e-300 ? c / denom : (b - sq) / a;
  }
  constexpr double kTol = 1e-12;
  if (!(r >= -kTol && r <= 1.0 + kTol)) return std::nullopt;
  r = std::clamp(r, 0.0, 1.0);
  const double ux = qx - r * dx;
  const double uy = qy - r * dy;
  double theta = 0.0;
  if (ux != 0.0 || uy != 0.0) theta = wrap_angle(std::atan2(uy, ux));
  return PolarCoord{r, theta};
}

SampleTap bilinear_tap(double x, double y, int height, int width) {
  SampleTap tap;
  if (!(x >= 0.0 && y >= 0.0 && x <= width - 1 && y <= height - 1)) return tap;
  const int x0 = std::min(static_cast<int>(std::floor(x)), std::max(width - 2, 0));
  const int y0 = std::min(static_cast<int>(std::floor(y)), std::max(height - 2, 0));
  const int x1 = std::min(x0 + 1, width - 1);
  const int y1 = std::min(y0 + 1, height - 1);
  const double fx = x - x0;
  const double fy = y - y0;
  tap.index = {y0 * width + x0, y0 * width + x1, y1 * width + x0, y1 * width + x1};
  tap.weight = {(1.0 - fx) * (1.0 - fy), fx * (1.0 - fy), (1.0 - fx) * fy, fx * fy};
  tap.valid = true;
  return tap;
}

SamplingPlan make_sampling_plan(const EyeAnnotation& ann, int image_height, int image_width,
                                int grid_width, int grid_height) {
  ann.validate();
  if (grid_width < 2 || grid_height < 2) throw ShapeError("normalization grid must be >= 2x2");
  SamplingPlan plan;
  plan.image_height = image_height;
  plan.image_width = image_width;
  plan.grid_height = grid_height;
  plan.grid_width = grid_width;
  plan.taps.resize(static_cast<std::size_t>(grid_height) * grid_width);
  for (int k = 0; k < grid_height; ++k) {
    const double r = row_radius(k, grid_height);
    for (int j = 0; j < grid_width; ++j) {
      const Point2 p = source_point(ann, r, column_angle(j, grid_width));
      plan.taps[static_cast<std::size_t>(k) * grid_width + j] =
          bilinear_tap(p.x, p.y, image_height, image_width);
    }
  }
  return plan;
}

NormalizedIris normalize(const Image& image, const EyeAnnotation& ann, int grid_width,
                         int grid_height) {
  const SamplingPlan plan =
      make_sampling_plan(ann, image.height(), image.width(), grid_width, grid_height);
  NormalizedIris out{Image(grid_height, grid_width), Mask(grid_height, grid_width)};
  const auto src = image.pixels();
  auto dst = out.pixels.pixels();
  auto occ = out.occlusion.pixels();
  for (std::size_t i = 0; i < plan.taps.size(); ++i) {
    const SampleTap& t = plan.taps[i];
    if (!t.valid) continue;
    double v = 0.0;
    for (int q = 0; q < 4; ++q) v += t.weight[q] * src[t.index[q]];
    dst[i] = static_cast<float>(v);
    occ[i] = 1;
  }
  return out;
}

NormalizedIris normalize(const Image& image, const EyeAnnotation& ann, const Mask& valid_region,
                         int grid_width, int grid_height) {
  if (!valid_region.same_shape(image)) throw ShapeError("valid region must match the image");
  NormalizedIris out = normalize(image, ann, grid_width, grid_height);
  for (int k = 0; k < grid_height; ++k) {
    const double r = row_radius(k, grid_height);
    for (int j = 0; j < grid_width; ++j) {
      if (!out.occlusion(k, j)) continue;
      const Point2 p = source_point(ann, r, column_angle(j, grid_width));
      const int px = std::clamp(static_cast<int>(std::lround(p.x)), 0, image.width() - 1);
      const int py = std::clamp(static_cast<int>(std::lround(p.y)), 0, image.height() - 1);
      if (!valid_region(py, px)) out.occlusion(k, j) = 0;
    }
  }
  return out;
}

Image denormalize(const NormalizedIris& norm, const EyeAnnotation& ann, int height, int width) {
  ann.validate();
  const int gh = norm.pixels.height();
  const int gw = norm.pixels.width();
  if (gh < 2 || gw < 2) throw ShapeError("normalized grid must be >= 2x2");
  Image out(height, width, 0.0f);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const auto pc = polar_coordinate(ann, x, y);
      if (!pc) continue;
      const double row = pc->r * (gh - 1);
      const double col = pc->theta * gw / kTwoPi;
      out(y, x) = static_cast<float>(sample_polar(norm.pixels, row, col));
    }
  }
  return out;
}

Mask rasterize_mask(const EyeAnnotation& ann, int height, int width) {
  ann.validate();
  Mask m(height, width, 0);
  const double rp2 = ann.pupil_r * ann.pupil_r;
  const double ri2 = ann.iris_r * ann.iris_r;
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      const double dpx = x - ann.pupil_x, dpy = y - ann.pupil_y;
      const double dix = x - ann.iris_x, diy = y - ann.iris_y;
      if (dix * dix + diy * diy < ri2 && dpx * dpx + dpy * dpy > rp2) m(y, x) = 1;
    }
  }
  return m;
}

double pupil_to_iris_ratio(const EyeAnnotation& ann) {
  ann.validate();
  return ann.pupil_r / ann.iris_r;
}

Image linear_rectify(const Image& image, const EyeAnnotation& from, const EyeAnnotation& to,
                     int grid_width, int grid_height) {
  const NormalizedIris norm = normalize(image, from, grid_width, grid_height);
  to.validate();
  // Mean intensity of the source pupil (pixel centers inside the pupil circle).
  double pupil_sum = 0.0;
  long pupil_n = 0;
  for (int y = 0; y < image.height(); ++y)
    for (int x = 0; x < image.width(); ++x)
      if (std::hypot(x - from.pupil_x, y - from.pupil_y) < from.pupil_r) {
        pupil_sum += image(y, x);
        ++pupil_n;
      }
  const float pupil_fill = pupil_n ? static_cast<float>(pupil_sum / pupil_n) : 0.0f;

  Image out = image;
  const int gh = norm.pixels.height();
  const int gw = norm.pixels.width();
  for (int y = 0; y < image.height(); ++y) {
    for (int x = 0; x < image.width(); ++x) {
      if (const auto pc = polar_coordinate(to, x, y)) {
        out(y, x) = static_cast<float>(
            sample_polar(norm.pixels, pc->r * (gh - 1), pc->theta * gw / kTwoPi));
      } else if (std::hypot(x - to.pupil_x, y - to.pupil_y) < to.pupil_r) {
        out(y, x) = pupil_fill;
      }
    }
  }
  return out;
}

}  // namespace irisdeform::geometry
