// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "irisdeform/error.hpp"

namespace irisdeform {

/// Row-major 2-D grid. Images hold intensities in [0, 1]; masks hold {0, 1}.
template <typename T>
class Grid2D {
 public:
  Grid2D() = default;
  Grid2D(int height, int width, T fill = T{})
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(checked(height, width)), fill) {}

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& at(int y, int x) { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  const T& at(int y, int x) const { return data_[static_cast<std::size_t>(y) * width_ + x]; }
  T& operator()(int y, int x) { return at(y, x); }
  const T& operator()(int y, int x) const { return at(y, x); }

  bool contains(int y, int x) const noexcept {
    return y >= 0 && x >= 0 && y < height_ && x < width_;
  }

  std::span<T> pixels() noexcept { return data_; }
  std::span<const T> pixels() const noexcept { return data_; }

  template <typename U>
  bool same_shape(const Grid2D<U>& other) const noexcept {
    return height_ == other.height() && width_ == other.width();
  }
  bool operator==(const Grid2D&) const = default;

 private:
  static long checked(int h, int w) {
    if (h < 1 || w < 1) throw ShapeError("grid dimensions must be at least 1x1");
    return static_cast<long>(h) * w;
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Image = Grid2D<float>;
using Mask = Grid2D<std::uint8_t>;

// PNG I/O (8-bit grayscale). Images round to the nearest 8-bit level;
// masks are written as {0, 255} and read back with threshold 128.
Image read_image_png(const std::filesystem::path& path);
void write_image_png(const std::filesystem::path& path, const Image& image);
Mask read_mask_png(const std::filesystem::path& path);
void write_mask_png(const std::filesystem::path& path, const Mask& mask);

std::vector<std::uint8_t> encode_png(const Image& image);
std::vector<std::uint8_t> encode_png(const Mask& mask);
Image decode_png_image(std::span<const std::uint8_t> bytes);
Mask decode_png_mask(std::span<const std::uint8_t> bytes);

std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Throws ParseError on characters outside the standard alphabet.
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Quantize to the 8-bit levels a PNG round trip would produce.
Image quantize8(const Image& image);

double mean_abs_diff(const Image& a, const Image& b);
double psnr(const Image& a, const Image& b, const Mask* region = nullptr);

}  // namespace irisdeform
