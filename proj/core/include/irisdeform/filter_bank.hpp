// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace irisdeform {

/// k zero-mean kernels of size h x w, row-major.
struct FilterBank {
  int height = 0;
  int width = 0;
  std::vector<std::vector<double>> kernels;
  std::string name;
  std::string source;

  int size() const { return static_cast<int>(kernels.size()); }
  double at(int k, int y, int x) const { return kernels[k][static_cast<std::size_t>(y) * width + x]; }
  /// Throws ParseError on empty bank or size mismatch.
  void validate() const;
};

/// Little-endian u32 k, h, w followed by k*h*w doubles. Kernel means are
/// subtracted after parsing. Throws ParseError on malformed input.
FilterBank parse_filter_bank(std::span<const std::uint8_t> bytes);
FilterBank load_filter_bank(const std::filesystem::path& path);
std::vector<std::uint8_t> serialize_filter_bank(const FilterBank& bank);
void save_filter_bank(const std::filesystem::path& path, const FilterBank& bank);

/// Seeded bank of smoothed-noise kernels under a Gaussian window, made
/// zero-mean, mutually orthogonal and unit-norm.
FilterBank default_filter_bank(int count = 7, int size = 17, std::uint64_t seed = 7);

}  // namespace irisdeform
