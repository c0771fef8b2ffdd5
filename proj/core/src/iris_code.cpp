// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/iris_code.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>

#include "irisdeform/error.hpp"

namespace irisdeform::eval {

IrisCode::IrisCode(int rows, int cols, int filters)
    : rows_(rows), cols_(cols), filters_(filters), words_((rows * filters + 63) / 64) {
  if (rows < 1 || cols < 1 || filters < 1) throw ShapeError("iris code dimensions must be positive");
  bits_.assign(static_cast<std::size_t>(cols) * words_, 0);
  valid_.assign(bits_.size(), 0);
}

bool IrisCode::bit(int row, int col, int filter) const {
  const std::size_t s = slot(row, filter);
  return (bit_words(col)[s / 64] >> (s % 64)) & 1u;
}

bool IrisCode::valid(int row, int col, int filter) const {
  const std::size_t s = slot(row, filter);
  return (valid_words(col)[s / 64] >> (s % 64)) & 1u;
}

void IrisCode::set(int row, int col, int filter, bool b, bool v) {
  const std::size_t s = slot(row, filter);
  const std::size_t w = static_cast<std::size_t>(col) * words_ + s / 64;
  const std::uint64_t m = std::uint64_t{1} << (s % 64);
  bits_[w] = b ? (bits_[w] | m) : (bits_[w] & ~m);
  valid_[w] = v ? (valid_[w] | m) : (valid_[w] & ~m);
}

std::size_t IrisCode::valid_count() const {
  std::size_t n = 0;
  for (auto w : valid_) n += static_cast<std::size_t>(std::popcount(w));
  return n;
}

IrisCode IrisCode::shifted(int s) const {
  IrisCode out = *this;
  for (int c = 0; c < cols_; ++c) {
    const int src = ((c - s) % cols_ + cols_) % cols_;
    for (int w = 0; w < words_; ++w) {
      out.bits_[static_cast<std::size_t>(c) * words_ + w] = bits_[static_cast<std::size_t>(src) * words_ + w];
      out.valid_[static_cast<std::size_t>(c) * words_ + w] = valid_[static_cast<std::size_t>(src) * words_ + w];
    }
  }
  return out;
}

IrisCode IrisCode::complemented() const {
  IrisCode out = *this;
  const int used = rows_ * filters_;
  for (int c = 0; c < cols_; ++c)
    for (int w = 0; w < words_; ++w) {
      const int bits_here = std::min(64, used - 64 * w);
      const std::uint64_t m = bits_here == 64 ? ~std::uint64_t{0} : ((std::uint64_t{1} << bits_here) - 1);
      auto& word = out.bits_[static_cast<std::size_t>(c) * words_ + w];
      word = ~word & m;
    }
  return out;
}

FilterResponse filter_normalized(const geometry::NormalizedIris& norm, const FilterBank& bank) {
  bank.validate();
  const int gh = norm.pixels.height(), gw = norm.pixels.width();
  if (bank.height > gh) throw ShapeError("filter taller than the normalized grid");
  FilterResponse r;
  r.rows = gh - bank.height + 1;
  r.cols = gw;
  r.filters = bank.size();
  r.values.assign(static_cast<std::size_t>(r.filters) * r.rows * r.cols, 0.0);
  r.valid.assign(static_cast<std::size_t>(r.rows) * r.cols, 1);
  const int cx = bank.width / 2;
  const int ew = gw + bank.width - 1;
  // Rows extended with the circular wrap so the inner loops are contiguous.
  std::vector<double> ext(static_cast<std::size_t>(gh) * ew);
  std::vector<int> occluded(static_cast<std::size_t>(gh) * ew);
  for (int y = 0; y < gh; ++y)
    for (int x = 0; x < ew; ++x) {
      const int src = ((x - cx) % gw + gw) % gw;
      ext[static_cast<std::size_t>(y) * ew + x] = norm.pixels.at(y, src);
      occluded[static_cast<std::size_t>(y) * ew + x] = norm.occlusion.at(y, src) ? 0 : 1;
    }
  // Window validity is shared by all filters: column-then-row box sums.
  std::vector<int> colsum(static_cast<std::size_t>(r.rows) * ew, 0);
  for (int y = 0; y < r.rows; ++y)
    for (int dy = 0; dy < bank.height; ++dy)
      for (int x = 0; x < ew; ++x)
        colsum[static_cast<std::size_t>(y) * ew + x] += occluded[static_cast<std::size_t>(y + dy) * ew + x];
  for (int y = 0; y < r.rows; ++y)
    for (int x = 0; x < r.cols; ++x) {
      int n = 0;
      for (int dx = 0; dx < bank.width; ++dx) n += colsum[static_cast<std::size_t>(y) * ew + x + dx];
      r.valid[static_cast<std::size_t>(y) * r.cols + x] = n == 0;
    }
  for (int k = 0; k < r.filters; ++k)
    for (int y = 0; y < r.rows; ++y) {
      double* out = &r.values[(static_cast<std::size_t>(k) * r.rows + y) * r.cols];
      for (int dy = 0; dy < bank.height; ++dy) {
        const double* row = &ext[static_cast<std::size_t>(y + dy) * ew];
        const double* kr = &bank.kernels[k][static_cast<std::size_t>(dy) * bank.width];
        for (int dx = 0; dx < bank.width; ++dx) {
          const double c = kr[dx];
          const double* src = row + dx;
          for (int x = 0; x < r.cols; ++x) out[x] += c * src[x];
        }
      }
    }
  return r;
}

IrisCode encode_normalized(const geometry::NormalizedIris& norm, const FilterBank& bank) {
  const FilterResponse r = filter_normalized(norm, bank);
  IrisCode code(r.rows, r.cols, r.filters);
  // Responses within rounding of zero (e.g. a zero-mean kernel over a flat
  // patch) count as non-positive.
  double peak = 0.0;
  for (float v : norm.pixels.pixels()) peak = std::max(peak, std::abs(static_cast<double>(v)));
  for (int k = 0; k < r.filters; ++k) {
    double l1 = 0.0;
    for (double w : bank.kernels[k]) l1 += std::abs(w);
    const double floor = 1e-9 * l1 * peak;
    for (int y = 0; y < r.rows; ++y)
      for (int x = 0; x < r.cols; ++x)
        code.set(y, x, k, r.values[(static_cast<std::size_t>(k) * r.rows + y) * r.cols + x] > floor,
                 r.valid[static_cast<std::size_t>(y) * r.cols + x] != 0);
  }
  return code;
}

IrisCode encode_iris(const Image& image, const geometry::EyeAnnotation& ann, const FilterBank& bank,
                     int grid_width, int grid_height) {
  return encode_normalized(geometry::normalize(image, ann, grid_width, grid_height), bank);
}

IrisCode encode_iris(const Image& image, const geometry::EyeAnnotation& ann, const Mask& valid_region,
                     const FilterBank& bank, int grid_width, int grid_height) {
  return encode_normalized(geometry::normalize(image, ann, valid_region, grid_width, grid_height), bank);
}

double compare_codes(const IrisCode& a, const IrisCode& b, int max_shift) {
  if (!a.same_shape(b)) throw ShapeError("compare_codes: code shapes differ");
  if (max_shift < 0) throw MetricError("compare_codes: max_shift must be >= 0");
  const int cols = a.cols(), words = a.words_per_column();
  double best = std::numeric_limits<double>::infinity();
  for (int s = -max_shift; s <= max_shift; ++s) {
    std::size_t differ = 0, joint = 0;
    for (int c = 0; c < cols; ++c) {
      const int cb = ((c + s) % cols + cols) % cols;
      const std::uint64_t* ab = a.bit_words(c);
      const std::uint64_t* av = a.valid_words(c);
      const std::uint64_t* bb = b.bit_words(cb);
      const std::uint64_t* bv = b.valid_words(cb);
      for (int w = 0; w < words; ++w) {
        const std::uint64_t v = av[w] & bv[w];
        joint += static_cast<std::size_t>(std::popcount(v));
        differ += static_cast<std::size_t>(std::popcount((ab[w] ^ bb[w]) & v));
      }
    }
    if (joint > 0) best = std::min(best, static_cast<double>(differ) / static_cast<double>(joint));
  }
  if (!std::isfinite(best)) throw MetricError("compare_codes: no jointly valid bits at any shift");
  return best;
}

}  // namespace irisdeform::eval
