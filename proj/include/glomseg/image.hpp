#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "glomseg/tensor.hpp"

namespace glomseg {

/// 8-bit raster with interleaved channels, row-major.
template <int Channels>
class Raster {
 public:
  static constexpr int kChannels = Channels;

  Raster() = default;
  Raster(std::int64_t height, std::int64_t width, std::uint8_t fill = 0)
      : height_(height), width_(width),
        data_(static_cast<std::size_t>(height * width * Channels), fill) {}

  std::int64_t height() const { return height_; }
  std::int64_t width() const { return width_; }
  bool empty() const { return data_.empty(); }

  std::uint8_t& at(std::int64_t y, std::int64_t x, int c = 0) {
    return data_[static_cast<std::size_t>((y * width_ + x) * Channels + c)];
  }
  std::uint8_t at(std::int64_t y, std::int64_t x, int c = 0) const {
    return data_[static_cast<std::size_t>((y * width_ + x) * Channels + c)];
  }

  std::span<std::uint8_t> data() { return data_; }
  std::span<const std::uint8_t> data() const { return data_; }

  friend bool operator==(const Raster&, const Raster&) = default;

 private:
  std::int64_t height_ = 0;
  std::int64_t width_ = 0;
  std::vector<std::uint8_t> data_;
};

using RgbImage = Raster<3>;
/// Binary label grid: 0 = background, 1 = glomerulus.
using SegMask = Raster<1>;

class ImageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

RgbImage read_rgb(const std::filesystem::path& path);
void write_png(const std::filesystem::path& path, const RgbImage& image);

/// Reads a single-channel mask. Stored {0,255} (or {0,1}) maps to {0,1};
/// any other value is rejected.
SegMask read_mask(const std::filesystem::path& path);
/// Writes {0,1} labels as an 8-bit PNG with values {0,255}.
void write_mask_png(const std::filesystem::path& path, const SegMask& mask);

/// Throws ImageError if any value is outside {0,1}.
void validate_mask(const SegMask& mask);
std::int64_t count_foreground(const SegMask& mask);

/// Batch of images -> [B, 3, H, W], scaled to [0,1] and normalized with the
/// ImageNet channel statistics.
Tensor images_to_tensor(std::span<const RgbImage> images);
/// Batch of masks -> [B, H, W] class indices stored as doubles.
Tensor masks_to_tensor(std::span<const SegMask> masks);

}  // namespace glomseg
