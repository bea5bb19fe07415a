#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "glomseg/image.hpp"
#include "glomseg/training.hpp"

namespace glomseg {

/// Synthetic glomerulus-like patches: dark elliptical blobs with exact masks
/// on textured tissue noise. `stain_lo..stain_hi` selects how far the colors
/// drift from the reference stain (0 = reference, 1 = strongest shift).
struct FixtureSpec {
  std::int64_t image_size = 64;
  int n_slides = 4;
  int patches_per_slide = 4;
  /// Slides are spread round-robin over this many centers; 0 = no centers.
  int n_centers = 0;
  bool with_masks = true;
  double stain_lo = 0.0;
  double stain_hi = 1.0;
  int min_objects = 1;
  int max_objects = 3;
  /// Blob semi-axes as fractions of the patch side.
  double radius_lo = 0.08;
  double radius_hi = 0.2;
  std::uint64_t seed = 0;
  /// Prefix of slide ids, so several splits can share a directory tree
  /// without colliding.
  std::string slide_prefix = "s";
};

struct SyntheticPatch {
  RgbImage image;
  SegMask mask;
  double stain = 0.0;
};

SyntheticPatch synthesize_patch(std::int64_t size, const FixtureSpec& spec, std::uint64_t seed);

/// Patch id of patch `k` of slide `s`: "<prefix>NN_KKK", or
/// "cC-<prefix>NN_KKK" when centers are enabled.
std::string fixture_patch_id(const FixtureSpec& spec, int slide, int k);

/// In-memory fixture, record order = slide-major.
ImageSet synthesize_set(const FixtureSpec& spec);

/// Layout spec string that build_manifest needs for a fixture directory.
std::string fixture_layout(const FixtureSpec& spec);

/// Writes images/<id>.png (and masks/<id>.png) plus layout.txt under root.
/// Returns the patch ids written.
std::vector<std::string> write_fixture(const std::filesystem::path& root, const FixtureSpec& spec);

}  // namespace glomseg
