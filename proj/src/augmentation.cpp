#include "glomseg/augmentation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "glomseg/random.hpp"

namespace glomseg {

namespace {

void check_prob(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0))
    throw std::invalid_argument(std::string(name) + " must lie in [0,1], got " + std::to_string(p));
}

// Float working copy in [0,1], interleaved RGB.
struct FloatImage {
  std::int64_t h, w;
  std::vector<double> px;
};

FloatImage to_float(const RgbImage& img) {
  FloatImage f{img.height(), img.width(), {}};
  f.px.reserve(img.data().size());
  for (auto v : img.data()) f.px.push_back(v / 255.0);
  return f;
}

RgbImage to_u8(const FloatImage& f) {
  RgbImage out(f.h, f.w);
  auto d = out.data();
  for (std::size_t i = 0; i < f.px.size(); ++i)
    d[i] = static_cast<std::uint8_t>(std::lround(std::clamp(f.px[i], 0.0, 1.0) * 255.0));
  return out;
}

double luma(const double* p) { return 0.299 * p[0] + 0.587 * p[1] + 0.114 * p[2]; }

void clip(FloatImage& f) {
  for (auto& v : f.px) v = std::clamp(v, 0.0, 1.0);
}

void adjust_brightness(FloatImage& f, double factor) {
  for (auto& v : f.px) v *= factor;
  clip(f);
}

void adjust_contrast(FloatImage& f, double factor) {
  double mean = 0.0;
  const std::size_t n = f.px.size() / 3;
  for (std::size_t i = 0; i < n; ++i) mean += luma(&f.px[3 * i]);
  mean /= static_cast<double>(std::max<std::size_t>(n, 1));
  for (auto& v : f.px) v = factor * v + (1.0 - factor) * mean;
  clip(f);
}

void adjust_saturation(FloatImage& f, double factor) {
  for (std::size_t i = 0; i + 2 < f.px.size(); i += 3) {
    const double g = luma(&f.px[i]);
    for (int c = 0; c < 3; ++c) f.px[i + c] = factor * f.px[i + c] + (1.0 - factor) * g;
  }
  clip(f);
}

void adjust_hue(FloatImage& f, double shift) {
  for (std::size_t i = 0; i + 2 < f.px.size(); i += 3) {
    double r = f.px[i], g = f.px[i + 1], b = f.px[i + 2];
    const double mx = std::max({r, g, b}), mn = std::min({r, g, b}), d = mx - mn;
    if (d <= 0.0) continue;  // achromatic
    double h;
    if (mx == r) h = std::fmod((g - b) / d, 6.0);
    else if (mx == g) h = (b - r) / d + 2.0;
    else h = (r - g) / d + 4.0;
    h /= 6.0;
    h = h + shift;
    h -= std::floor(h);
    const double s = d / mx, v = mx;
    const double hh = h * 6.0;
    const int sector = static_cast<int>(std::floor(hh)) % 6;
    const double frac = hh - std::floor(hh);
    const double p = v * (1 - s), q = v * (1 - s * frac), t = v * (1 - s * (1 - frac));
    switch (sector) {
      case 0: r = v; g = t; b = p; break;
      case 1: r = q; g = v; b = p; break;
      case 2: r = p; g = v; b = t; break;
      case 3: r = p; g = q; b = v; break;
      case 4: r = t; g = p; b = v; break;
      default: r = v; g = p; b = q; break;
    }
    f.px[i] = r;
    f.px[i + 1] = g;
    f.px[i + 2] = b;
  }
  clip(f);
}

void to_grayscale(FloatImage& f) {
  for (std::size_t i = 0; i + 2 < f.px.size(); i += 3) {
    const double g = luma(&f.px[i]);
    f.px[i] = f.px[i + 1] = f.px[i + 2] = g;
  }
}

// Separable Gaussian with replicated borders.
void gaussian_blur(FloatImage& f, double sigma) {
  const int radius = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) total += (k[static_cast<std::size_t>(i + radius)] = std::exp(-0.5 * i * i / (sigma * sigma)));
  for (auto& v : k) v /= total;
  auto pass = [&](bool horizontal) {
    std::vector<double> out(f.px.size());
    for (std::int64_t y = 0; y < f.h; ++y)
      for (std::int64_t x = 0; x < f.w; ++x)
        for (int c = 0; c < 3; ++c) {
          double acc = 0.0;
          for (int i = -radius; i <= radius; ++i) {
            const std::int64_t sy = horizontal ? y : std::clamp<std::int64_t>(y + i, 0, f.h - 1);
            const std::int64_t sx = horizontal ? std::clamp<std::int64_t>(x + i, 0, f.w - 1) : x;
            acc += k[static_cast<std::size_t>(i + radius)] * f.px[static_cast<std::size_t>((sy * f.w + sx) * 3 + c)];
          }
          out[static_cast<std::size_t>((y * f.w + x) * 3 + c)] = acc;
        }
    f.px = std::move(out);
  };
  pass(true);
  pass(false);
}

CutMixBox sample_box(std::int64_t h, std::int64_t w, const StrongAugSpec& spec, Rng& rng) {
  constexpr double kRatioLo = 0.3, kRatioHi = 1.0 / 0.3;
  const double area = rng.uniform(spec.cutmix_area_lo, spec.cutmix_area_hi) * static_cast<double>(h * w);
  for (int attempt = 0;; ++attempt) {
    const double ratio = rng.uniform(kRatioLo, kRatioHi);
    auto bw = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::sqrt(area / ratio)));
    auto bh = std::max<std::int64_t>(1, static_cast<std::int64_t>(std::sqrt(area * ratio)));
    const auto x0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(w)));
    const auto y0 = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(h)));
    if ((x0 + bw <= w && y0 + bh <= h) || attempt >= 100) {
      bw = std::min(bw, w - x0);
      bh = std::min(bh, h - y0);
      return {x0, y0, x0 + bw, y0 + bh};
    }
  }
}

}  // namespace

void WeakAugSpec::validate() const {
  if (crop_size < 0) throw std::invalid_argument("crop_size must be >= 0");
  if (rotation_choices.empty()) throw std::invalid_argument("rotation_choices must not be empty");
  for (int r : rotation_choices)
    if (r % 90 != 0) throw std::invalid_argument("rotation " + std::to_string(r) + " is not a multiple of 90");
  check_prob(hflip_prob, "hflip_prob");
  check_prob(vflip_prob, "vflip_prob");
}

StrongAugSpec StrongAugSpec::identity() {
  StrongAugSpec s;
  s.jitter_prob = s.grayscale_prob = s.blur_prob = s.cutmix_prob = 0.0;
  return s;
}

void StrongAugSpec::validate() const {
  check_prob(jitter_prob, "jitter_prob");
  check_prob(grayscale_prob, "grayscale_prob");
  check_prob(blur_prob, "blur_prob");
  check_prob(cutmix_prob, "cutmix_prob");
  if (jitter_brightness < 0 || jitter_contrast < 0 || jitter_saturation < 0)
    throw std::invalid_argument("jitter strengths must be non-negative");
  if (jitter_hue < 0 || jitter_hue > 0.5) throw std::invalid_argument("jitter_hue must lie in [0,0.5]");
  if (!(blur_sigma_lo > 0 && blur_sigma_lo <= blur_sigma_hi))
    throw std::invalid_argument("blur sigma range must satisfy 0 < lo <= hi");
  if (!(cutmix_area_lo > 0 && cutmix_area_lo <= cutmix_area_hi && cutmix_area_hi < 1))
    throw std::invalid_argument("cutmix area range must lie within (0,1) with lo <= hi");
}

Geometry sample_geometry(std::int64_t height, std::int64_t width, const WeakAugSpec& spec,
                         std::uint64_t seed) {
  spec.validate();
  const std::int64_t crop = spec.crop_size;
  if (crop > height || crop > width)
    throw std::invalid_argument("crop size " + std::to_string(crop) + " exceeds image " +
                                std::to_string(width) + "x" + std::to_string(height));
  Rng rng(seed);
  Geometry g;
  g.in_h = height;
  g.in_w = width;
  g.crop_h = crop ? crop : height;
  g.crop_w = crop ? crop : width;
  g.crop_y = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(height - g.crop_h + 1)));
  g.crop_x = static_cast<std::int64_t>(rng.below(static_cast<std::uint64_t>(width - g.crop_w + 1)));
  const int deg = spec.rotation_choices[rng.below(spec.rotation_choices.size())];
  g.quarter_turns = ((deg / 90) % 4 + 4) % 4;
  g.hflip = rng.bernoulli(spec.hflip_prob);
  g.vflip = rng.bernoulli(spec.vflip_prob);
  return g;
}

WeakResult weak_augment(const RgbImage& image, const SegMask* mask, const WeakAugSpec& spec,
                        std::uint64_t seed) {
  if (mask && (mask->height() != image.height() || mask->width() != image.width()))
    throw std::invalid_argument("mask and image sizes differ");
  WeakResult out;
  out.geometry = sample_geometry(image.height(), image.width(), spec, seed);
  out.image = apply_geometry(image, out.geometry);
  if (mask) out.mask = apply_geometry(*mask, out.geometry);
  return out;
}

RgbImage photometric_augment(const RgbImage& image, const StrongAugSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  const bool jitter = rng.bernoulli(spec.jitter_prob);
  std::array<int, 4> order{0, 1, 2, 3};
  double factors[4] = {1.0, 1.0, 1.0, 0.0};
  if (jitter) {
    rng.shuffle(std::span<int>(order));
    factors[0] = rng.uniform(std::max(0.0, 1.0 - spec.jitter_brightness), 1.0 + spec.jitter_brightness);
    factors[1] = rng.uniform(std::max(0.0, 1.0 - spec.jitter_contrast), 1.0 + spec.jitter_contrast);
    factors[2] = rng.uniform(std::max(0.0, 1.0 - spec.jitter_saturation), 1.0 + spec.jitter_saturation);
    factors[3] = rng.uniform(-spec.jitter_hue, spec.jitter_hue);
  }
  const bool gray = rng.bernoulli(spec.grayscale_prob);
  const bool blur = rng.bernoulli(spec.blur_prob);
  const double sigma = blur ? rng.uniform(spec.blur_sigma_lo, spec.blur_sigma_hi) : 0.0;
  if (!jitter && !gray && !blur) return image;

  FloatImage f = to_float(image);
  if (jitter)
    for (int op : order) {
      switch (op) {
        case 0: adjust_brightness(f, factors[0]); break;
        case 1: adjust_contrast(f, factors[1]); break;
        case 2: adjust_saturation(f, factors[2]); break;
        default: adjust_hue(f, factors[3]); break;
      }
    }
  if (gray) to_grayscale(f);
  if (blur) gaussian_blur(f, sigma);
  return to_u8(f);
}

StrongResult strong_augment(const RgbImage& image, const StrongAugSpec& spec, std::uint64_t seed,
                            const RgbImage* cutmix_partner) {
  StrongResult out;
  out.image = photometric_augment(image, spec, seed);
  Rng rng(derive_seed(seed, {0xC07u}));
  if (!rng.bernoulli(spec.cutmix_prob)) return out;
  if (!cutmix_partner) throw std::invalid_argument("CutMix triggered without a partner image");
  if (cutmix_partner->height() != image.height() || cutmix_partner->width() != image.width())
    throw std::invalid_argument("CutMix partner size differs from the image");
  const CutMixBox box = sample_box(image.height(), image.width(), spec, rng);
  for (std::int64_t y = box.y0; y < box.y1; ++y)
    for (std::int64_t x = box.x0; x < box.x1; ++x)
      for (int c = 0; c < 3; ++c) out.image.at(y, x, c) = cutmix_partner->at(y, x, c);
  out.cutmix_box = box;
  return out;
}

AugmentedViews make_views(const RgbImage& image, const WeakAugSpec& weak, const StrongAugSpec& strong,
                          const std::array<std::uint64_t, 3>& seeds, const RgbImage* partner,
                          std::optional<std::size_t> partner_index) {
  if (seeds[1] == seeds[2]) throw std::invalid_argument("the two strong streams need distinct seeds");
  AugmentedViews v;
  WeakResult w = weak_augment(image, nullptr, weak, seeds[0]);
  v.weak_image = std::move(w.image);
  v.applied_geometry = w.geometry;
  StrongResult s1 = strong_augment(v.weak_image, strong, seeds[1], partner);
  StrongResult s2 = strong_augment(v.weak_image, strong, seeds[2], partner);
  v.strong_image_1 = std::move(s1.image);
  v.strong_image_2 = std::move(s2.image);
  v.cutmix_box_1 = s1.cutmix_box;
  v.cutmix_box_2 = s2.cutmix_box;
  if (v.cutmix_box_1 || v.cutmix_box_2) v.partner_index = partner_index;
  return v;
}

}  // namespace glomseg
