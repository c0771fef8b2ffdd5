// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include "irisdeform/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

namespace irisdeform {
namespace {

// 8-bit gray pixels plus dimensions, decoded through libpng's simplified API
// (errors are reported by return value, so no longjmp crosses C++ frames).
struct Gray8 {
  int height = 0;
  int width = 0;
  std::vector<std::uint8_t> data;
};

Gray8 decode_gray8(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()))
    throw ParseError(std::string("png: ") + img.message);
  img.format = PNG_FORMAT_GRAY;
  if (img.width == 0 || img.height == 0 || img.width > (1u << 15) || img.height > (1u << 15)) {
    png_image_free(&img);
    throw ParseError("png: unsupported image size");
  }
  Gray8 out;
  out.width = static_cast<int>(img.width);
  out.height = static_cast<int>(img.height);
  out.data.resize(PNG_IMAGE_SIZE(img));
  if (!png_image_finish_read(&img, nullptr, out.data.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw ParseError("png: " + msg);
  }
  return out;
}

std::vector<std::uint8_t> encode_gray8(int height, int width, const std::uint8_t* data) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(width);
  img.height = static_cast<png_uint_32>(height);
  img.format = PNG_FORMAT_GRAY;
  png_alloc_size_t size = 0;
  if (!png_image_write_get_memory_size(img, size, 0, data, 0, nullptr))
    throw IoError(std::string("png: ") + img.message);
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, data, 0, nullptr))
    throw IoError(std::string("png: ") + img.message);
  out.resize(size);
  return out;
}

std::uint8_t to_byte(float v) {
  const float c = std::clamp(v, 0.0f, 1.0f);
  return static_cast<std::uint8_t>(std::lround(c * 255.0f));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write to " + path.string());
}

constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

}  // namespace

std::vector<std::uint8_t> encode_png(const Image& image) {
  std::vector<std::uint8_t> bytes(image.size());
  std::transform(image.pixels().begin(), image.pixels().end(), bytes.begin(), to_byte);
  return encode_gray8(image.height(), image.width(), bytes.data());
}

std::vector<std::uint8_t> encode_png(const Mask& mask) {
  std::vector<std::uint8_t> bytes(mask.size());
  std::transform(mask.pixels().begin(), mask.pixels().end(), bytes.begin(),
                 [](std::uint8_t v) { return v ? std::uint8_t{255} : std::uint8_t{0}; });
  return encode_gray8(mask.height(), mask.width(), bytes.data());
}

Image decode_png_image(std::span<const std::uint8_t> bytes) {
  const Gray8 g = decode_gray8(bytes);
  Image img(g.height, g.width);
  std::transform(g.data.begin(), g.data.end(), img.pixels().begin(),
                 [](std::uint8_t v) { return static_cast<float>(v) / 255.0f; });
  return img;
}

Mask decode_png_mask(std::span<const std::uint8_t> bytes) {
  const Gray8 g = decode_gray8(bytes);
  Mask m(g.height, g.width);
  std::transform(g.data.begin(), g.data.end(), m.pixels().begin(),
                 [](std::uint8_t v) { return static_cast<std::uint8_t>(v >= 128 ? 1 : 0); });
  return m;
}

Image read_image_png(const std::filesystem::path& path) { return decode_png_image(read_file(path)); }
Mask read_mask_png(const std::filesystem::path& path) { return decode_png_mask(read_file(path)); }
void write_image_png(const std::filesystem::path& path, const Image& image) {
  write_file(path, encode_png(image));
}
void write_mask_png(const std::filesystem::path& path, const Mask& mask) {
  write_file(path, encode_png(mask));
}

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  std::array<int, 256> lut;
  lut.fill(-1);
  for (int i = 0; i < 64; ++i) lut[static_cast<unsigned char>(kAlphabet[i])] = i;
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  std::uint32_t acc = 0;
  int bits = 0;
  std::size_t padding = 0;
  for (char ch : text) {
    if (ch == '\n' || ch == '\r' || ch == ' ') continue;
    if (ch == '=') {
      ++padding;
      continue;
    }
    if (padding) throw ParseError("base64: data after padding");
    const int v = lut[static_cast<unsigned char>(ch)];
    if (v < 0) throw ParseError("base64: invalid character");
    acc = (acc << 6) | static_cast<std::uint32_t>(v);
    bits += 6;
    if (bits >= 8) {
      bits -= 8;
      out.push_back(static_cast<std::uint8_t>((acc >> bits) & 0xFF));
    }
  }
  if (padding > 2) throw ParseError("base64: bad padding");
  return out;
}

Image quantize8(const Image& image) {
  Image out(image.height(), image.width());
  std::transform(image.pixels().begin(), image.pixels().end(), out.pixels().begin(),
                 [](float v) { return static_cast<float>(to_byte(v)) / 255.0f; });
  return out;
}

double mean_abs_diff(const Image& a, const Image& b) {
  if (!a.same_shape(b)) throw ShapeError("mean_abs_diff: shape mismatch");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(double(a.pixels()[i]) - b.pixels()[i]);
  return acc / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b, const Mask* region) {
  if (!a.same_shape(b)) throw ShapeError("psnr: shape mismatch");
  if (region && !region->same_shape(a)) throw ShapeError("psnr: region shape mismatch");
  double se = 0.0;
  std::size_t n = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (region && !region->pixels()[i]) continue;
    const double d = double(a.pixels()[i]) - b.pixels()[i];
    se += d * d;
    ++n;
  }
  if (n == 0) throw ShapeError("psnr: empty region");
  const double mse = se / static_cast<double>(n);
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / mse);
}

}  // namespace irisdeform
