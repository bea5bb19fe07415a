#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <vector>

#include "glomseg/image.hpp"

namespace glomseg {

/// Geometric (weak) augmentation. Rotations are multiples of 90 degrees so
/// masks are transformed exactly.
struct WeakAugSpec {
  /// Square crop side; 0 keeps the full input.
  std::int64_t crop_size = 0;
  std::vector<int> rotation_choices{0, 90, 180, 270};
  double hflip_prob = 0.5;
  double vflip_prob = 0.5;

  static WeakAugSpec identity() { return {0, {0}, 0.0, 0.0}; }
  void validate() const;
};

/// Photometric (strong) augmentation plus optional CutMix.
struct StrongAugSpec {
  double jitter_brightness = 0.5;
  double jitter_contrast = 0.5;
  double jitter_saturation = 0.5;
  double jitter_hue = 0.25;
  double jitter_prob = 0.8;
  double grayscale_prob = 0.2;
  double blur_prob = 0.5;
  double blur_sigma_lo = 0.1;
  double blur_sigma_hi = 2.0;
  double cutmix_prob = 0.5;
  double cutmix_area_lo = 0.02;
  double cutmix_area_hi = 0.4;

  static StrongAugSpec identity();
  void validate() const;
};

/// Replayable record of a weak transform: crop, then `quarter_turns`
/// counter-clockwise rotations, then horizontal and vertical flips.
struct Geometry {
  std::int64_t in_h = 0, in_w = 0;
  std::int64_t crop_x = 0, crop_y = 0, crop_h = 0, crop_w = 0;
  int quarter_turns = 0;
  bool hflip = false;
  bool vflip = false;

  friend bool operator==(const Geometry&, const Geometry&) = default;
};

/// Half-open pixel rectangle [x0, x1) x [y0, y1).
struct CutMixBox {
  std::int64_t x0 = 0, y0 = 0, x1 = 0, y1 = 0;
  bool contains(std::int64_t y, std::int64_t x) const { return x >= x0 && x < x1 && y >= y0 && y < y1; }
  friend bool operator==(const CutMixBox&, const CutMixBox&) = default;
};

template <int C>
Raster<C> apply_geometry(const Raster<C>& src, const Geometry& g) {
  if (src.height() != g.in_h || src.width() != g.in_w)
    throw std::invalid_argument("geometry recorded for a different input size");
  Raster<C> cur(g.crop_h, g.crop_w);
  for (std::int64_t y = 0; y < g.crop_h; ++y)
    for (std::int64_t x = 0; x < g.crop_w; ++x)
      for (int c = 0; c < C; ++c) cur.at(y, x, c) = src.at(g.crop_y + y, g.crop_x + x, c);
  for (int t = 0; t < g.quarter_turns; ++t) {
    // Counter-clockwise: out(r, c) = in(c, W - 1 - r).
    Raster<C> rot(cur.width(), cur.height());
    for (std::int64_t r = 0; r < rot.height(); ++r)
      for (std::int64_t x = 0; x < rot.width(); ++x)
        for (int c = 0; c < C; ++c) rot.at(r, x, c) = cur.at(x, cur.width() - 1 - r, c);
    cur = std::move(rot);
  }
  if (g.hflip || g.vflip) {
    Raster<C> flipped(cur.height(), cur.width());
    for (std::int64_t y = 0; y < cur.height(); ++y)
      for (std::int64_t x = 0; x < cur.width(); ++x) {
        const std::int64_t sy = g.vflip ? cur.height() - 1 - y : y;
        const std::int64_t sx = g.hflip ? cur.width() - 1 - x : x;
        for (int c = 0; c < C; ++c) flipped.at(y, x, c) = cur.at(sy, sx, c);
      }
    cur = std::move(flipped);
  }
  return cur;
}

struct WeakResult {
  RgbImage image;
  std::optional<SegMask> mask;
  Geometry geometry;
};

/// Draws one geometry from `seed` and applies it to the image and the mask.
WeakResult weak_augment(const RgbImage& image, const SegMask* mask, const WeakAugSpec& spec,
                        std::uint64_t seed);
/// The geometry weak_augment would draw for this input size and seed.
Geometry sample_geometry(std::int64_t height, std::int64_t width, const WeakAugSpec& spec,
                         std::uint64_t seed);

struct StrongResult {
  RgbImage image;
  std::optional<CutMixBox> cutmix_box;
};

/// Photometric pipeline: color jitter (random op order), grayscale, Gaussian
/// blur; then, if CutMix triggers, the box is overwritten with the partner's
/// pixels verbatim. Throws if CutMix triggers without a partner.
StrongResult strong_augment(const RgbImage& image, const StrongAugSpec& spec, std::uint64_t seed,
                            const RgbImage* cutmix_partner = nullptr);

/// Photometric part only (no CutMix); exposed for tests.
RgbImage photometric_augment(const RgbImage& image, const StrongAugSpec& spec, std::uint64_t seed);

struct AugmentedViews {
  RgbImage weak_image;
  RgbImage strong_image_1;
  RgbImage strong_image_2;
  Geometry applied_geometry;
  std::optional<CutMixBox> cutmix_box_1;
  std::optional<CutMixBox> cutmix_box_2;
  std::optional<std::size_t> partner_index;
};

/// Weak view from seeds[0]; each strong view is strong_augment of the weak
/// view with seeds[1] / seeds[2]. `partner` must already be in weak-view
/// space (it is pasted verbatim) and match the weak view's size.
AugmentedViews make_views(const RgbImage& image, const WeakAugSpec& weak, const StrongAugSpec& strong,
                          const std::array<std::uint64_t, 3>& seeds, const RgbImage* partner = nullptr,
                          std::optional<std::size_t> partner_index = std::nullopt);

}  // namespace glomseg
