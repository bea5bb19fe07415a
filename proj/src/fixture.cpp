#include "glomseg/fixture.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

#include "glomseg/random.hpp"

namespace glomseg {

namespace {

using Rgb = std::array<double, 3>;

Rgb lerp(const Rgb& a, const Rgb& b, double t) {
  return {a[0] + (b[0] - a[0]) * t, a[1] + (b[1] - a[1]) * t, a[2] + (b[2] - a[2]) * t};
}

// Reference and shifted stain colors for tissue and glomeruli.
constexpr Rgb kTissueRef{0.93, 0.72, 0.82};
constexpr Rgb kTissueShift{0.70, 0.78, 0.93};
constexpr Rgb kGlomRef{0.58, 0.26, 0.55};
constexpr Rgb kGlomShift{0.40, 0.42, 0.25};

// Smooth value noise in [0,1]: a coarse random grid, bilinearly upsampled.
std::vector<double> value_noise(std::int64_t size, std::int64_t cells, Rng& rng) {
  const std::int64_t g = cells + 1;
  std::vector<double> grid(static_cast<std::size_t>(g * g));
  for (auto& v : grid) v = rng.uniform();
  std::vector<double> out(static_cast<std::size_t>(size * size));
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x) {
      const double fy = static_cast<double>(y) * cells / size, fx = static_cast<double>(x) * cells / size;
      const auto y0 = static_cast<std::int64_t>(fy), x0 = static_cast<std::int64_t>(fx);
      const double ty = fy - y0, tx = fx - x0;
      auto at = [&](std::int64_t yy, std::int64_t xx) { return grid[static_cast<std::size_t>(yy * g + xx)]; };
      const double top = at(y0, x0) * (1 - tx) + at(y0, x0 + 1) * tx;
      const double bot = at(y0 + 1, x0) * (1 - tx) + at(y0 + 1, x0 + 1) * tx;
      out[static_cast<std::size_t>(y * size + x)] = top * (1 - ty) + bot * ty;
    }
  return out;
}

struct Blob {
  double cy, cx, ry, rx, angle;
  bool contains(double y, double x) const {
    const double dy = y - cy, dx = x - cx;
    const double c = std::cos(angle), s = std::sin(angle);
    const double u = (dx * c + dy * s) / rx, v = (-dx * s + dy * c) / ry;
    return u * u + v * v <= 1.0;
  }
};

}  // namespace

SyntheticPatch synthesize_patch(std::int64_t size, const FixtureSpec& spec, std::uint64_t seed) {
  if (size < 8) throw std::invalid_argument("fixture image size must be >= 8");
  if (spec.min_objects < 0 || spec.max_objects < spec.min_objects)
    throw std::invalid_argument("fixture object counts must satisfy 0 <= min <= max");
  if (!(spec.stain_lo >= 0 && spec.stain_lo <= spec.stain_hi && spec.stain_hi <= 1))
    throw std::invalid_argument("fixture stain range must lie within [0,1]");
  Rng rng(seed);
  SyntheticPatch p;
  p.stain = rng.uniform(spec.stain_lo, spec.stain_hi);
  const double brightness = 1.0 + 0.15 * p.stain * (2.0 * rng.uniform() - 1.0);
  const Rgb tissue = lerp(kTissueRef, kTissueShift, p.stain);
  const Rgb glom = lerp(kGlomRef, kGlomShift, p.stain);

  const int n_obj = spec.min_objects +
                    static_cast<int>(rng.below(static_cast<std::uint64_t>(spec.max_objects - spec.min_objects + 1)));
  std::vector<Blob> blobs;
  const double s = static_cast<double>(size);
  for (int i = 0; i < n_obj; ++i) {
    const double ry = rng.uniform(spec.radius_lo, spec.radius_hi) * s;
    const double rx = rng.uniform(spec.radius_lo, spec.radius_hi) * s;
    blobs.push_back({rng.uniform(0.1, 0.9) * s, rng.uniform(0.1, 0.9) * s, ry, rx, rng.uniform(0.0, M_PI)});
  }

  const auto coarse = value_noise(size, 4, rng);
  const auto fine = value_noise(size, std::max<std::int64_t>(4, size / 4), rng);
  p.image = RgbImage(size, size);
  p.mask = SegMask(size, size);
  for (std::int64_t y = 0; y < size; ++y)
    for (std::int64_t x = 0; x < size; ++x) {
      const double py = static_cast<double>(y) + 0.5, px = static_cast<double>(x) + 0.5;
      const bool inside = std::any_of(blobs.begin(), blobs.end(), [&](const Blob& b) { return b.contains(py, px); });
      const auto idx = static_cast<std::size_t>(y * size + x);
      const double texture = 0.12 * (coarse[idx] - 0.5) + 0.10 * (fine[idx] - 0.5);
      const Rgb& base = inside ? glom : tissue;
      for (int c = 0; c < 3; ++c) {
        const double v = (base[static_cast<std::size_t>(c)] + texture + 0.03 * rng.normal()) * brightness;
        p.image.at(y, x, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
      }
      p.mask.at(y, x) = inside ? 1 : 0;
    }
  return p;
}

std::string fixture_patch_id(const FixtureSpec& spec, int slide, int k) {
  char buf[96];
  if (spec.n_centers > 0)
    std::snprintf(buf, sizeof buf, "c%d-%s%02d_%03d", slide % spec.n_centers + 1, spec.slide_prefix.c_str(), slide, k);
  else
    std::snprintf(buf, sizeof buf, "%s%02d_%03d", spec.slide_prefix.c_str(), slide, k);
  return buf;
}

ImageSet synthesize_set(const FixtureSpec& spec) {
  if (spec.n_slides < 1 || spec.patches_per_slide < 1)
    throw std::invalid_argument("fixture needs at least one slide and one patch per slide");
  ImageSet set;
  for (int s = 0; s < spec.n_slides; ++s)
    for (int k = 0; k < spec.patches_per_slide; ++k) {
      auto p = synthesize_patch(spec.image_size, spec,
                                derive_seed(spec.seed, {static_cast<std::uint64_t>(s), static_cast<std::uint64_t>(k)}));
      set.ids.push_back(fixture_patch_id(spec, s, k));
      set.images.push_back(std::move(p.image));
      if (spec.with_masks) set.masks.push_back(std::move(p.mask));
    }
  return set;
}

std::string fixture_layout(const FixtureSpec& spec) {
  std::string layout = spec.n_centers > 0 ? "pattern=^((c[0-9]+)-[^_]+)_.*$;wsi=1;center=2"
                                          : "pattern=^([^_]+)_.*$;wsi=1";
  if (!spec.with_masks) layout += ";labeled=false";
  return layout;
}

std::vector<std::string> write_fixture(const std::filesystem::path& root, const FixtureSpec& spec) {
  const ImageSet set = synthesize_set(spec);
  std::filesystem::create_directories(root / "images");
  if (spec.with_masks) std::filesystem::create_directories(root / "masks");
  for (std::size_t i = 0; i < set.size(); ++i) {
    write_png(root / "images" / (set.ids[i] + ".png"), set.images[i]);
    if (spec.with_masks) write_mask_png(root / "masks" / (set.ids[i] + ".png"), set.masks[i]);
  }
  std::ofstream(root / "layout.txt") << fixture_layout(spec) << "\n";
  return set.ids;
}

}  // namespace glomseg
