#include "doctest.h"
#include "glomseg/augmentation.hpp"
#include "support.hpp"

using namespace glomseg;
using glomseg::testing::random_image;
using glomseg::testing::random_mask;

namespace {

StrongAugSpec photometric_only() {
  StrongAugSpec s;
  s.jitter_prob = 1.0;
  s.grayscale_prob = 0.5;
  s.blur_prob = 0.5;
  s.cutmix_prob = 0.0;
  return s;
}

bool spatially_constant(const RgbImage& im) {
  for (std::int64_t y = 0; y < im.height(); ++y)
    for (std::int64_t x = 0; x < im.width(); ++x)
      for (int c = 0; c < 3; ++c)
        if (im.at(y, x, c) != im.at(0, 0, c)) return false;
  return true;
}

}  // namespace

TEST_CASE("identity weak spec returns the input unchanged") {
  Rng rng(1);
  const RgbImage im = random_image(12, 9, rng);
  const SegMask m = random_mask(12, 9, 0.4, rng);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = weak_augment(im, &m, WeakAugSpec::identity(), seed);
    CHECK(r.image == im);
    REQUIRE(r.mask);
    CHECK(*r.mask == m);
  }
}

TEST_CASE("quarter turn moves every mask pixel to its rotated position") {
  // Asymmetric 8x8 pattern: an L shape plus an isolated pixel.
  SegMask m(8, 8);
  for (int y = 0; y < 6; ++y) m.at(y, 1) = 1;
  for (int x = 1; x < 5; ++x) m.at(5, x) = 1;
  m.at(0, 6) = 1;
  WeakAugSpec spec{0, {90}, 0.0, 0.0};
  RgbImage im(8, 8);
  const auto r = weak_augment(im, &m, spec, 3);
  REQUIRE(r.mask);
  CHECK(r.geometry.quarter_turns == 1);
  // Counter-clockwise quarter turn of a W-wide grid: output (r, c) reads input (c, W-1-r).
  for (std::int64_t y = 0; y < 8; ++y)
    for (std::int64_t x = 0; x < 8; ++x) CHECK(r.mask->at(y, x) == m.at(x, 7 - y));
  // The isolated pixel at row 0, column 6 lands at row 1, column 0.
  CHECK(r.mask->at(1, 0) == 1);
}

TEST_CASE("crop size arithmetic and oversize crop") {
  RgbImage im(1024, 1024);
  WeakAugSpec spec;
  spec.crop_size = 512;
  const auto r = weak_augment(im, nullptr, spec, 0);
  CHECK(r.image.height() == 512);
  CHECK(r.image.width() == 512);
  CHECK_FALSE(r.mask.has_value());
  spec.crop_size = 2048;
  CHECK_THROWS(weak_augment(im, nullptr, spec, 0));
}

TEST_CASE("weak spec validation") {
  WeakAugSpec w;
  w.rotation_choices = {45};
  CHECK_THROWS(w.validate());
  w = WeakAugSpec{};
  w.hflip_prob = 1.5;
  CHECK_THROWS(w.validate());
  StrongAugSpec s;
  s.cutmix_area_hi = 1.0;
  CHECK_THROWS(s.validate());
  s = StrongAugSpec{};
  s.jitter_prob = -0.1;
  CHECK_THROWS(s.validate());
}

TEST_CASE("image and mask stay aligned under random geometry") {
  Rng rng(2);
  WeakAugSpec spec;
  for (int t = 0; t < 100; ++t) {
    const auto h = static_cast<std::int64_t>(6 + rng.below(20));
    const auto w = static_cast<std::int64_t>(6 + rng.below(20));
    spec.crop_size = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(std::min(h, w)) + 1));
    const SegMask m = random_mask(h, w, 0.5, rng);
    RgbImage im = random_image(h, w, rng);
    // Overlay: channel 0 carries the mask, so alignment is checkable per pixel.
    for (std::int64_t y = 0; y < h; ++y)
      for (std::int64_t x = 0; x < w; ++x) im.at(y, x, 0) = m.at(y, x) ? 255 : 0;
    const std::uint64_t seed = rng.next();
    const auto r = weak_augment(im, &m, spec, seed);
    REQUIRE(r.mask);
    CHECK(r.mask->height() == r.image.height());
    bool aligned = true;
    for (std::int64_t y = 0; y < r.image.height(); ++y)
      for (std::int64_t x = 0; x < r.image.width(); ++x)
        aligned = aligned && (r.image.at(y, x, 0) == 255) == (r.mask->at(y, x) == 1);
    CHECK(aligned);
    CHECK(apply_geometry(im, r.geometry) == r.image);
    CHECK(r.geometry == sample_geometry(h, w, spec, seed));
  }
}

TEST_CASE("zero strong spec is the identity") {
  Rng rng(3);
  const RgbImage im = random_image(16, 16, rng);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = strong_augment(im, StrongAugSpec::identity(), seed);
    CHECK(r.image == im);
    CHECK_FALSE(r.cutmix_box.has_value());
  }
}

TEST_CASE("spatially constant input stays spatially constant") {
  const RgbImage im(10, 14, 137);
  RgbImage tinted(10, 14);
  for (std::int64_t y = 0; y < 10; ++y)
    for (std::int64_t x = 0; x < 14; ++x) {
      tinted.at(y, x, 0) = 200;
      tinted.at(y, x, 1) = 90;
      tinted.at(y, x, 2) = 160;
    }
  StrongAugSpec spec = photometric_only();
  spec.blur_prob = 1.0;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    CHECK(spatially_constant(strong_augment(im, spec, seed).image));
    CHECK(spatially_constant(strong_augment(tinted, spec, seed).image));
  }
}

TEST_CASE("photometric ops never move an impulse") {
  StrongAugSpec spec = photometric_only();
  spec.blur_prob = 0.0;
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    RgbImage im(9, 9);
    const auto y = static_cast<std::int64_t>(rng.below(9)), x = static_cast<std::int64_t>(rng.below(9));
    for (int c = 0; c < 3; ++c) im.at(y, x, c) = 255;
    const RgbImage out = photometric_augment(im, spec, rng.next());
    // Everything off the impulse must stay one uniform background value.
    const std::int64_t by = y == 0 ? 1 : 0;
    bool uniform = true;
    for (std::int64_t yy = 0; yy < 9; ++yy)
      for (std::int64_t xx = 0; xx < 9; ++xx) {
        if (yy == y && xx == x) continue;
        for (int c = 0; c < 3; ++c) uniform = uniform && out.at(yy, xx, c) == out.at(by, 0, c);
      }
    CHECK(uniform);
  }
}

TEST_CASE("cutmix box holds partner pixels verbatim, the rest is photometric") {
  Rng rng(5);
  StrongAugSpec spec = photometric_only();
  spec.cutmix_prob = 1.0;
  int with_box = 0;
  for (int t = 0; t < 20; ++t) {
    const RgbImage im = random_image(24, 24, rng);
    const RgbImage partner = random_image(24, 24, rng);
    const std::uint64_t seed = rng.next();
    const auto r = strong_augment(im, spec, seed, &partner);
    REQUIRE(r.cutmix_box);
    ++with_box;
    const RgbImage photo = photometric_augment(im, spec, seed);
    const CutMixBox b = *r.cutmix_box;
    CHECK(b.x0 < b.x1);
    CHECK(b.y0 < b.y1);
    const double area = static_cast<double>((b.x1 - b.x0) * (b.y1 - b.y0)) / (24.0 * 24.0);
    CHECK(area <= spec.cutmix_area_hi + 0.1);
    for (std::int64_t y = 0; y < 24; ++y)
      for (std::int64_t x = 0; x < 24; ++x)
        for (int c = 0; c < 3; ++c)
          CHECK(r.image.at(y, x, c) == (b.contains(y, x) ? partner.at(y, x, c) : photo.at(y, x, c)));
  }
  CHECK(with_box == 20);
  CHECK_THROWS(strong_augment(RgbImage(24, 24), spec, 1));
  const RgbImage small(12, 24);
  CHECK_THROWS(strong_augment(RgbImage(24, 24), spec, 1, &small));
}

TEST_CASE("make_views shares one geometry and separates the strong streams") {
  Rng rng(6);
  const RgbImage im = random_image(16, 16, rng);
  const auto same = make_views(im, WeakAugSpec::identity(), StrongAugSpec::identity(), {1, 2, 3});
  CHECK(same.weak_image == im);
  CHECK(same.strong_image_1 == im);
  CHECK(same.strong_image_2 == im);

  StrongAugSpec jitter = StrongAugSpec::identity();
  jitter.jitter_prob = 1.0;
  jitter.jitter_brightness = 0.5;
  int differ = 0;
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto v = make_views(im, WeakAugSpec{}, jitter, {s, 100 + s, 200 + s});
    CHECK(v.applied_geometry == sample_geometry(16, 16, WeakAugSpec{}, s));
    CHECK(v.strong_image_1.height() == v.weak_image.height());
    differ += v.strong_image_1 == v.strong_image_2 ? 0 : 1;
  }
  CHECK(differ >= 19);
  CHECK_THROWS(make_views(im, WeakAugSpec{}, jitter, {1, 5, 5}));
}

TEST_CASE("augmentation is deterministic per seed") {
  Rng rng(7);
  const RgbImage im = random_image(20, 20, rng);
  const RgbImage partner = random_image(20, 20, rng);
  const StrongAugSpec spec;
  const auto a = strong_augment(im, spec, 42, &partner);
  const auto b = strong_augment(im, spec, 42, &partner);
  CHECK(a.image == b.image);
  CHECK(a.cutmix_box == b.cutmix_box);
  CHECK(weak_augment(im, nullptr, WeakAugSpec{}, 9).image == weak_augment(im, nullptr, WeakAugSpec{}, 9).image);
}
