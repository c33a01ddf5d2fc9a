// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "zoomer/geometry.hpp"

namespace zoomer {

using Rgb = std::array<std::uint8_t, 3>;

// Interleaved 8-bit RGB, row-major, no padding.
class Raster {
 public:
  Raster() = default;
  Raster(int width, int height, Rgb fill = {0, 0, 0});

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return width_ <= 0 || height_ <= 0; }
  Box bounds() const noexcept { return {0, 0, double(width_), double(height_)}; }

  std::uint8_t* pixel(int x, int y) noexcept { return data_.data() + offset(x, y); }
  const std::uint8_t* pixel(int x, int y) const noexcept { return data_.data() + offset(x, y); }
  Rgb at(int x, int y) const noexcept {
    const auto* p = pixel(x, y);
    return {p[0], p[1], p[2]};
  }
  void set(int x, int y, Rgb c) noexcept {
    auto* p = pixel(x, y);
    p[0] = c[0];
    p[1] = c[1];
    p[2] = c[2];
  }

  std::span<std::uint8_t> bytes() noexcept { return data_; }
  std::span<const std::uint8_t> bytes() const noexcept { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::size_t offset(int x, int y) const noexcept {
    return (static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) + static_cast<std::size_t>(x)) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  std::vector<std::uint8_t> data_;
};

Raster crop(const Raster& image, const PixelRect& rect);

// Separable triangle filter whose support widens with the downscale factor
// (bilinear when upscaling, area-weighted tent when shrinking). Sample centres
// are aligned at pixel centres; resizing to the same size is an exact copy.
Raster resize(const Raster& image, int width, int height);

// Dimensions after scaling so the long side equals `long_side`, aspect kept.
std::pair<int, int> fit_long_side(int width, int height, int long_side) noexcept;

// Reads PNG or JPEG (by signature); JPEG EXIF orientation is normalized.
Raster load_image(const std::filesystem::path& path);
Raster decode_image(std::span<const std::uint8_t> bytes);

enum class PngSpeed { Default, Fast };
std::vector<std::uint8_t> encode_png(const Raster& image, PngSpeed speed = PngSpeed::Default);
void save_png(const Raster& image, const std::filesystem::path& path,
              PngSpeed speed = PngSpeed::Default);

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

}  // namespace zoomer
