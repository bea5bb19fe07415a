#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "glomseg/image.hpp"

namespace glomseg {

enum class DatasetId { kHubmapKidney, kHubmapVasc, kKpmp, kNurture };
enum class ManifestRole { kLabeledTrain, kUnlabeledTrain, kExternalValidation };

std::string_view to_string(DatasetId id);
DatasetId parse_dataset_id(std::string_view text);
std::string_view to_string(ManifestRole role);
ManifestRole parse_manifest_role(std::string_view text);

class CatalogError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A filename did not match the layout convention.
class LayoutError : public CatalogError {
 public:
  using CatalogError::CatalogError;
};

struct PatchRecord {
  std::string patch_id;
  DatasetId dataset_id = DatasetId::kHubmapKidney;
  std::string wsi_id;
  std::optional<std::string> center_id;
  std::filesystem::path image_path;
  std::optional<std::filesystem::path> mask_path;
  std::int64_t width = 0;
  std::int64_t height = 0;
  int magnification = 20;

  bool labeled() const { return mask_path.has_value(); }
  friend bool operator==(const PatchRecord&, const PatchRecord&) = default;
};

struct DatasetManifest {
  std::vector<PatchRecord> records;
  /// patch_id -> fold index in [0, k).
  std::map<std::string, int> fold_assignment;
  ManifestRole role = ManifestRole::kLabeledTrain;

  std::size_t size() const { return records.size(); }
  /// Sorted distinct slide ids.
  std::vector<std::string> wsi_ids() const;
  /// Sorted distinct center ids (records without one are skipped).
  std::vector<std::string> center_ids() const;
  /// Checks the role/mask invariant and that no slide spans two folds.
  void validate() const;
  /// Records whose fold is (or is not) `fold`.
  DatasetManifest select_fold(int fold, bool in_fold) const;

  friend bool operator==(const DatasetManifest&, const DatasetManifest&) = default;
};

/// Filename convention: `pattern` is matched against the image file stem; the
/// capture groups `wsi_group` / `center_group` (0 = none) supply the ids.
/// Masks live in `masks_dir` as `<stem><mask_suffix>.png`.
struct LayoutSpec {
  std::string pattern = "^([^_]+)_.*$";
  int wsi_group = 1;
  int center_group = 0;
  std::string images_dir = "images";
  std::string masks_dir = "masks";
  std::string mask_suffix;
  bool labeled = true;
  int magnification = 20;

  /// Parses "key=value;key=value" with keys pattern, wsi, center, images,
  /// masks, mask_suffix, labeled, magnification.
  static LayoutSpec parse(std::string_view text);
};

DatasetManifest build_manifest(const std::filesystem::path& root, DatasetId dataset,
                               const LayoutSpec& layout);

struct ManifestSummary {
  std::size_t wsis = 0;
  std::size_t tiles = 0;
  std::size_t labeled = 0;
};
ManifestSummary summarize(const DatasetManifest& manifest);

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path, ManifestRole role);

// Run-length encoding ------------------------------------------------------

enum class RleOrder { kColumnMajor, kRowMajor };

/// Space-separated 1-based "start length" pairs.
SegMask decode_rle(std::string_view rle, std::int64_t height, std::int64_t width,
                   RleOrder order = RleOrder::kColumnMajor);
std::string encode_rle(const SegMask& mask, RleOrder order = RleOrder::kColumnMajor);
/// CSV with header `id,rle`; returns id -> encoding.
std::map<std::string, std::string> read_rle_csv(const std::filesystem::path& path);

// Tiling -------------------------------------------------------------------

enum class TileBoundary { kClamp, kDrop };

/// Tile origins along one axis. With clamp, a final origin extent - patch is
/// added when the regular grid leaves the far edge uncovered.
std::vector<std::int64_t> tile_offsets(std::int64_t extent, std::int64_t patch, std::int64_t stride,
                                       TileBoundary boundary);

template <int C>
struct Tile {
  std::int64_t x = 0;
  std::int64_t y = 0;
  Raster<C> patch;
};

template <int C>
Raster<C> crop(const Raster<C>& src, std::int64_t x0, std::int64_t y0, std::int64_t w, std::int64_t h) {
  Raster<C> out(h, w);
  for (std::int64_t y = 0; y < h; ++y)
    for (std::int64_t x = 0; x < w; ++x)
      for (int c = 0; c < C; ++c) out.at(y, x, c) = src.at(y0 + y, x0 + x, c);
  return out;
}

template <int C>
std::vector<Tile<C>> tile_region(const Raster<C>& image, std::int64_t patch, std::int64_t stride,
                                 TileBoundary boundary = TileBoundary::kClamp) {
  if (patch > image.height() || patch > image.width())
    throw std::invalid_argument("patch size " + std::to_string(patch) + " exceeds image " +
                                std::to_string(image.width()) + "x" + std::to_string(image.height()));
  const auto ys = tile_offsets(image.height(), patch, stride, boundary);
  const auto xs = tile_offsets(image.width(), patch, stride, boundary);
  std::vector<Tile<C>> tiles;
  tiles.reserve(xs.size() * ys.size());
  for (auto y : ys)
    for (auto x : xs) tiles.push_back({x, y, crop(image, x, y, patch, patch)});
  return tiles;
}

// Splitting and subsampling --------------------------------------------------

/// Assigns whole slides to k folds of sizes differing by at most one.
DatasetManifest split_folds(const DatasetManifest& manifest, int k, std::uint64_t seed);

struct Fraction {
  std::int64_t num = 1;
  std::int64_t den = 1;
  /// Accepts "a/b" or an integer.
  static Fraction parse(std::string_view text);
  std::string str() const;
  double value() const { return static_cast<double>(num) / static_cast<double>(den); }
};

/// Per-slide stratified sample of floor(fraction * N) records.
DatasetManifest sample_label_fraction(const DatasetManifest& manifest, Fraction fraction,
                                      std::uint64_t seed);

/// n_centers random centers with per_center random records from each.
DatasetManifest sample_centers(const DatasetManifest& manifest, int n_centers, int per_center,
                               std::uint64_t seed);

}  // namespace glomseg
