// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/filter_bank.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>

#include "irisdeform/error.hpp"
#include "irisdeform/random.hpp"

namespace irisdeform {
namespace {

std::uint32_t read_u32(std::span<const std::uint8_t> b, std::size_t off) {
  return static_cast<std::uint32_t>(b[off]) | static_cast<std::uint32_t>(b[off + 1]) << 8 |
         static_cast<std::uint32_t>(b[off + 2]) << 16 | static_cast<std::uint32_t>(b[off + 3]) << 24;
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void remove_mean(std::vector<double>& k) {
  const double m = std::accumulate(k.begin(), k.end(), 0.0) / static_cast<double>(k.size());
  for (double& v : k) v -= m;
}

// Kernels already zero-mean to rounding are kept verbatim so that a saved
// bank reloads bit-exactly.
void enforce_zero_mean(std::vector<double>& k) {
  double sum = 0.0, mag = 0.0;
  for (double v : k) {
    sum += v;
    mag += std::abs(v);
  }
  if (std::abs(sum) > 1e-12 * mag) remove_mean(k);
}

}  // namespace

void FilterBank::validate() const {
  if (kernels.empty()) throw ParseError("filter bank is empty");
  if (height < 1 || width < 1) throw ParseError("filter bank kernel size must be positive");
  for (const auto& k : kernels)
    if (k.size() != static_cast<std::size_t>(height) * width)
      throw ParseError("filter bank kernel has wrong element count");
}

FilterBank parse_filter_bank(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 12) throw ParseError("filter bank: header truncated");
  const std::uint32_t k = read_u32(bytes, 0), h = read_u32(bytes, 4), w = read_u32(bytes, 8);
  if (k == 0 || h == 0 || w == 0) throw ParseError("filter bank: zero dimension in header");
  if (k > 4096 || h > 1024 || w > 1024) throw ParseError("filter bank: implausible header");
  const std::size_t n = static_cast<std::size_t>(k) * h * w;
  if (bytes.size() != 12 + 8 * n)
    throw ParseError("filter bank: expected " + std::to_string(12 + 8 * n) + " bytes, got " +
                     std::to_string(bytes.size()));
  FilterBank bank;
  bank.height = static_cast<int>(h);
  bank.width = static_cast<int>(w);
  std::size_t off = 12;
  for (std::uint32_t i = 0; i < k; ++i) {
    std::vector<double> kernel(static_cast<std::size_t>(h) * w);
    for (double& v : kernel) {
      std::uint64_t bits = 0;
      for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[off + b]) << (8 * b);
      std::memcpy(&v, &bits, 8);
      if (!std::isfinite(v)) throw ParseError("filter bank: non-finite coefficient");
      off += 8;
    }
    enforce_zero_mean(kernel);
    bank.kernels.push_back(std::move(kernel));
  }
  return bank;
}

FilterBank load_filter_bank(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  const std::vector<std::uint8_t> bytes(std::istreambuf_iterator<char>(in), {});
  FilterBank bank = parse_filter_bank(bytes);
  bank.name = path.stem().string();
  bank.source = path.string();
  return bank;
}

std::vector<std::uint8_t> serialize_filter_bank(const FilterBank& bank) {
  bank.validate();
  std::vector<std::uint8_t> out;
  put_u32(out, static_cast<std::uint32_t>(bank.size()));
  put_u32(out, static_cast<std::uint32_t>(bank.height));
  put_u32(out, static_cast<std::uint32_t>(bank.width));
  for (const auto& k : bank.kernels)
    for (double v : k) {
      std::uint64_t bits;
      std::memcpy(&bits, &v, 8);
      for (int b = 0; b < 8; ++b) out.push_back(static_cast<std::uint8_t>(bits >> (8 * b)));
    }
  return out;
}

void save_filter_bank(const std::filesystem::path& path, const FilterBank& bank) {
  const auto bytes = serialize_filter_bank(bank);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

FilterBank default_filter_bank(int count, int size, std::uint64_t seed) {
  if (count < 1 || size < 3) throw ConfigError("default_filter_bank: need count >= 1, size >= 3");
  Rng rng(seed);
  FilterBank bank;
  bank.height = bank.width = size;
  bank.name = "default";
  bank.source = "seeded smoothed noise, seed " + std::to_string(seed);
  const double c = (size - 1) / 2.0;
  const double window_sigma = size / 4.0;
  for (int i = 0; i < count; ++i) {
    // Alternate correlation lengths so the bank spans a few scales.
    const double smooth = 1.2 + 0.6 * (i % 3);
    std::vector<double> noise(static_cast<std::size_t>(size) * size);
    for (double& v : noise) v = rng.normal();
    std::vector<double> k(noise.size(), 0.0);
    const int rad = static_cast<int>(std::ceil(2.5 * smooth));
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        double acc = 0.0;
        for (int dy = -rad; dy <= rad; ++dy)
          for (int dx = -rad; dx <= rad; ++dx) {
            const int yy = (y + dy + size) % size, xx = (x + dx + size) % size;
            acc += std::exp(-0.5 * (dx * dx + dy * dy) / (smooth * smooth)) * noise[yy * size + xx];
          }
        const double wy = (y - c) / window_sigma, wx = (x - c) / window_sigma;
        k[y * size + x] = acc * std::exp(-0.5 * (wx * wx + wy * wy));
      }
    remove_mean(k);
    for (const auto& prev : bank.kernels) {
      const double d = std::inner_product(k.begin(), k.end(), prev.begin(), 0.0);
      for (std::size_t j = 0; j < k.size(); ++j) k[j] -= d * prev[j];
    }
    remove_mean(k);
    const double norm = std::sqrt(std::inner_product(k.begin(), k.end(), k.begin(), 0.0));
    for (double& v : k) v /= norm;
    bank.kernels.push_back(std::move(k));
  }
  return bank;
}

}  // namespace irisdeform
