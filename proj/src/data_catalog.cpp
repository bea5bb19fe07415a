#include "glomseg/data_catalog.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <fstream>
#include <numeric>
#include <regex>
#include <set>
#include <sstream>

#include <json.hpp>

#include "glomseg/random.hpp"

namespace glomseg {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::pair<DatasetId, std::string_view> kDatasetNames[] = {
    {DatasetId::kHubmapKidney, "HUBMAP_KIDNEY"},
    {DatasetId::kHubmapVasc, "HUBMAP_VASC"},
    {DatasetId::kKpmp, "KPMP"},
    {DatasetId::kNurture, "NURTURE"},
};

constexpr std::pair<ManifestRole, std::string_view> kRoleNames[] = {
    {ManifestRole::kLabeledTrain, "LABELED_TRAIN"},
    {ManifestRole::kUnlabeledTrain, "UNLABELED_TRAIN"},
    {ManifestRole::kExternalValidation, "EXTERNAL_VALIDATION"},
};

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".tif" || ext == ".tiff" || ext == ".jpg" || ext == ".jpeg";
}

std::int64_t parse_int(std::string_view tok, std::string_view what) {
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
  if (ec != std::errc() || p != tok.data() + tok.size())
    throw std::invalid_argument("invalid " + std::string(what) + " '" + std::string(tok) + "'");
  return v;
}

DatasetManifest keep_indices(const DatasetManifest& m, const std::vector<std::size_t>& keep) {
  DatasetManifest out;
  out.role = m.role;
  for (auto i : keep) {
    const auto& r = m.records[i];
    out.records.push_back(r);
    if (auto it = m.fold_assignment.find(r.patch_id); it != m.fold_assignment.end())
      out.fold_assignment.insert(*it);
  }
  return out;
}

}  // namespace

std::string_view to_string(DatasetId id) {
  for (auto [k, v] : kDatasetNames)
    if (k == id) return v;
  return "?";
}

namespace {
bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
           return std::toupper(static_cast<unsigned char>(x)) == std::toupper(static_cast<unsigned char>(y));
         });
}
}  // namespace

DatasetId parse_dataset_id(std::string_view text) {
  for (auto [k, v] : kDatasetNames)
    if (iequals(v, text)) return k;
  throw std::invalid_argument("unknown dataset id '" + std::string(text) +
                              "' (expected HUBMAP_KIDNEY, HUBMAP_VASC, KPMP, NURTURE)");
}

std::string_view to_string(ManifestRole role) {
  for (auto [k, v] : kRoleNames)
    if (k == role) return v;
  return "?";
}

ManifestRole parse_manifest_role(std::string_view text) {
  for (auto [k, v] : kRoleNames)
    if (iequals(v, text)) return k;
  throw std::invalid_argument("unknown manifest role '" + std::string(text) +
                              "' (expected LABELED_TRAIN, UNLABELED_TRAIN, EXTERNAL_VALIDATION)");
}

std::vector<std::string> DatasetManifest::wsi_ids() const {
  std::set<std::string> s;
  for (const auto& r : records) s.insert(r.wsi_id);
  return {s.begin(), s.end()};
}

std::vector<std::string> DatasetManifest::center_ids() const {
  std::set<std::string> s;
  for (const auto& r : records)
    if (r.center_id) s.insert(*r.center_id);
  return {s.begin(), s.end()};
}

void DatasetManifest::validate() const {
  const bool needs_mask = role != ManifestRole::kUnlabeledTrain;
  for (const auto& r : records) {
    if (needs_mask && !r.mask_path)
      throw CatalogError("patch " + r.patch_id + " has no mask but the manifest role is " +
                         std::string(to_string(role)));
    if (!needs_mask && r.mask_path)
      throw CatalogError("patch " + r.patch_id + " carries a mask inside an unlabeled manifest");
  }
  std::map<std::string, int> wsi_fold;
  for (const auto& r : records) {
    auto it = fold_assignment.find(r.patch_id);
    if (it == fold_assignment.end()) continue;
    auto [pos, inserted] = wsi_fold.emplace(r.wsi_id, it->second);
    if (!inserted && pos->second != it->second)
      throw CatalogError("slide " + r.wsi_id + " spans folds " + std::to_string(pos->second) +
                         " and " + std::to_string(it->second));
  }
}

DatasetManifest DatasetManifest::select_fold(int fold, bool in_fold) const {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < records.size(); ++i) {
    auto it = fold_assignment.find(records[i].patch_id);
    if (it == fold_assignment.end())
      throw CatalogError("patch " + records[i].patch_id + " has no fold assignment");
    if ((it->second == fold) == in_fold) keep.push_back(i);
  }
  return keep_indices(*this, keep);
}

LayoutSpec LayoutSpec::parse(std::string_view text) {
  LayoutSpec spec;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    std::size_t end = text.find(';', pos);
    if (end == std::string_view::npos) end = text.size();
    std::string_view item = text.substr(pos, end - pos);
    pos = end + 1;
    if (item.empty()) continue;
    const auto eq = item.find('=');
    if (eq == std::string_view::npos)
      throw LayoutError("layout item '" + std::string(item) + "' is not key=value");
    const std::string key(item.substr(0, eq));
    const std::string value(item.substr(eq + 1));
    if (key == "pattern") {
      spec.pattern = value;
    } else if (key == "wsi") {
      spec.wsi_group = static_cast<int>(parse_int(value, "wsi group"));
    } else if (key == "center") {
      spec.center_group = static_cast<int>(parse_int(value, "center group"));
    } else if (key == "images") {
      spec.images_dir = value;
    } else if (key == "masks") {
      spec.masks_dir = value;
    } else if (key == "mask_suffix") {
      spec.mask_suffix = value;
    } else if (key == "labeled") {
      spec.labeled = value == "1" || value == "true";
    } else if (key == "magnification") {
      spec.magnification = static_cast<int>(parse_int(value, "magnification"));
    } else {
      throw LayoutError("unknown layout key '" + key +
                        "' (valid: pattern, wsi, center, images, masks, mask_suffix, labeled, magnification)");
    }
  }
  try {
    std::regex re(spec.pattern);
    const int groups = static_cast<int>(re.mark_count());
    if (spec.wsi_group < 1 || spec.wsi_group > groups || spec.center_group < 0 || spec.center_group > groups)
      throw LayoutError("layout pattern '" + spec.pattern + "' has " + std::to_string(groups) +
                        " groups; wsi/center group index out of range");
  } catch (const std::regex_error& e) {
    throw LayoutError("invalid layout pattern '" + spec.pattern + "': " + e.what());
  }
  return spec;
}

DatasetManifest build_manifest(const fs::path& root, DatasetId dataset, const LayoutSpec& layout) {
  if (!fs::is_directory(root)) throw CatalogError("data root is not a directory: " + root.string());
  DatasetManifest manifest;
  manifest.role = layout.labeled ? ManifestRole::kLabeledTrain : ManifestRole::kUnlabeledTrain;
  const fs::path image_dir = layout.images_dir.empty() ? root : root / layout.images_dir;
  if (!fs::is_directory(image_dir)) return manifest;

  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(image_dir))
    if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path());
  std::sort(files.begin(), files.end());

  const std::regex re(layout.pattern);
  std::vector<PatchRecord> records(files.size());
  std::vector<std::string> errors(files.size());
  for (std::size_t i = 0; i < files.size(); ++i) {
    const std::string stem = files[i].stem().string();
    std::smatch m;
    if (!std::regex_match(stem, m, re))
      throw LayoutError("file " + files[i].string() + " does not match layout pattern '" +
                        layout.pattern + "'");
    PatchRecord& r = records[i];
    r.patch_id = stem;
    r.dataset_id = dataset;
    r.wsi_id = m[static_cast<std::size_t>(layout.wsi_group)].str();
    if (layout.center_group > 0) r.center_id = m[static_cast<std::size_t>(layout.center_group)].str();
    r.image_path = files[i];
    r.magnification = layout.magnification;
    if (layout.labeled) {
      fs::path mask = root / layout.masks_dir / (stem + layout.mask_suffix + ".png");
      if (!fs::exists(mask))
        throw CatalogError("labeled patch " + stem + " (" + files[i].string() + ") has no mask at " +
                           mask.string());
      r.mask_path = mask;
    }
  }

  // Decoding dominates; files are independent.
#pragma omp parallel for schedule(dynamic)
  for (std::size_t i = 0; i < files.size(); ++i) {
    try {
      const RgbImage img = read_rgb(records[i].image_path);
      records[i].width = img.width();
      records[i].height = img.height();
      if (records[i].mask_path) {
        const SegMask mask = read_mask(*records[i].mask_path);
        if (mask.width() != img.width() || mask.height() != img.height())
          errors[i] = "mask " + records[i].mask_path->string() + " is " + std::to_string(mask.width()) +
                      "x" + std::to_string(mask.height()) + " but image is " +
                      std::to_string(img.width()) + "x" + std::to_string(img.height());
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (const auto& e : errors)
    if (!e.empty()) throw CatalogError(e);
  manifest.records = std::move(records);
  return manifest;
}

ManifestSummary summarize(const DatasetManifest& manifest) {
  ManifestSummary s;
  s.wsis = manifest.wsi_ids().size();
  s.tiles = manifest.records.size();
  for (const auto& r : manifest.records) s.labeled += r.labeled() ? 1 : 0;
  return s;
}

void write_manifest(const fs::path& path, const DatasetManifest& manifest) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw CatalogError("cannot write manifest: " + path.string());
  for (const auto& r : manifest.records) {
    json j;
    j["patch_id"] = r.patch_id;
    j["dataset_id"] = std::string(to_string(r.dataset_id));
    j["wsi_id"] = r.wsi_id;
    j["center_id"] = r.center_id ? json(*r.center_id) : json(nullptr);
    j["image_path"] = r.image_path.string();
    j["mask_path"] = r.mask_path ? json(r.mask_path->string()) : json(nullptr);
    j["width"] = r.width;
    j["height"] = r.height;
    j["magnification"] = r.magnification;
    if (auto it = manifest.fold_assignment.find(r.patch_id); it != manifest.fold_assignment.end())
      j["fold"] = it->second;
    out << j.dump() << '\n';
  }
}

DatasetManifest read_manifest(const fs::path& path, ManifestRole role) {
  std::ifstream in(path);
  if (!in) throw CatalogError("cannot read manifest: " + path.string());
  DatasetManifest m;
  m.role = role;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      PatchRecord r;
      r.patch_id = j.at("patch_id").get<std::string>();
      r.dataset_id = parse_dataset_id(j.at("dataset_id").get<std::string>());
      r.wsi_id = j.at("wsi_id").get<std::string>();
      if (j.contains("center_id") && !j["center_id"].is_null()) r.center_id = j["center_id"].get<std::string>();
      r.image_path = j.at("image_path").get<std::string>();
      if (j.contains("mask_path") && !j["mask_path"].is_null()) r.mask_path = fs::path(j["mask_path"].get<std::string>());
      r.width = j.at("width").get<std::int64_t>();
      r.height = j.at("height").get<std::int64_t>();
      r.magnification = j.value("magnification", 20);
      if (j.contains("fold")) m.fold_assignment[r.patch_id] = j["fold"].get<int>();
      m.records.push_back(std::move(r));
    } catch (const std::exception& e) {
      throw CatalogError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  m.validate();
  return m;
}

SegMask decode_rle(std::string_view rle, std::int64_t height, std::int64_t width, RleOrder order) {
  if (height < 0 || width < 0) throw std::invalid_argument("negative mask dimensions");
  SegMask mask(height, width);
  std::vector<std::int64_t> tokens;
  std::istringstream in{std::string(rle)};
  std::string tok;
  while (in >> tok) tokens.push_back(parse_int(tok, "RLE token"));
  if (tokens.size() % 2 != 0)
    throw std::invalid_argument("RLE has an odd number of tokens (" + std::to_string(tokens.size()) + ")");
  const std::int64_t total = height * width;
  for (std::size_t i = 0; i < tokens.size(); i += 2) {
    const std::int64_t start = tokens[i], len = tokens[i + 1];
    if (start < 1 || len < 0)
      throw std::invalid_argument("RLE run (" + std::to_string(start) + ", " + std::to_string(len) +
                                  ") is malformed");
    if (start - 1 + len > total)
      throw std::invalid_argument("RLE run (" + std::to_string(start) + ", " + std::to_string(len) +
                                  ") exceeds " + std::to_string(total) + " pixels");
    for (std::int64_t p = start - 1; p < start - 1 + len; ++p) {
      const std::int64_t y = order == RleOrder::kColumnMajor ? p % height : p / width;
      const std::int64_t x = order == RleOrder::kColumnMajor ? p / height : p % width;
      if (mask.at(y, x)) throw std::invalid_argument("RLE runs overlap at pixel " + std::to_string(p + 1));
      mask.at(y, x) = 1;
    }
  }
  return mask;
}

std::string encode_rle(const SegMask& mask, RleOrder order) {
  const std::int64_t h = mask.height(), w = mask.width(), total = h * w;
  std::string out;
  std::int64_t run_start = -1;
  for (std::int64_t p = 0; p <= total; ++p) {
    bool on = false;
    if (p < total) {
      const std::int64_t y = order == RleOrder::kColumnMajor ? p % h : p / w;
      const std::int64_t x = order == RleOrder::kColumnMajor ? p / h : p % w;
      on = mask.at(y, x) != 0;
    }
    if (on && run_start < 0) run_start = p;
    if (!on && run_start >= 0) {
      if (!out.empty()) out += ' ';
      out += std::to_string(run_start + 1) + ' ' + std::to_string(p - run_start);
      run_start = -1;
    }
  }
  return out;
}

std::map<std::string, std::string> read_rle_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw CatalogError("cannot read RLE csv: " + path.string());
  std::map<std::string, std::string> out;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header) {
      header = false;
      if (line.rfind("id,", 0) == 0) continue;
    }
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) throw CatalogError("RLE csv line without comma: " + line);
    out[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return out;
}

std::vector<std::int64_t> tile_offsets(std::int64_t extent, std::int64_t patch, std::int64_t stride,
                                       TileBoundary boundary) {
  if (stride < 1) throw std::invalid_argument("tile stride must be >= 1");
  if (patch < 1 || patch > extent)
    throw std::invalid_argument("patch size " + std::to_string(patch) + " does not fit extent " +
                                std::to_string(extent));
  std::vector<std::int64_t> out;
  for (std::int64_t o = 0; o + patch <= extent; o += stride) out.push_back(o);
  if (boundary == TileBoundary::kClamp && out.back() + patch < extent) out.push_back(extent - patch);
  return out;
}

DatasetManifest split_folds(const DatasetManifest& manifest, int k, std::uint64_t seed) {
  if (k < 1) throw std::invalid_argument("fold count must be >= 1");
  std::vector<std::string> wsis = manifest.wsi_ids();
  if (static_cast<int>(wsis.size()) < k)
    throw CatalogError("cannot split " + std::to_string(wsis.size()) + " slides into " +
                       std::to_string(k) + " folds");
  Rng rng(seed);
  rng.shuffle(wsis);
  std::map<std::string, int> fold_of;
  for (std::size_t i = 0; i < wsis.size(); ++i) fold_of[wsis[i]] = static_cast<int>(i % static_cast<std::size_t>(k));
  DatasetManifest out = manifest;
  out.fold_assignment.clear();
  for (const auto& r : out.records) out.fold_assignment[r.patch_id] = fold_of.at(r.wsi_id);
  return out;
}

Fraction Fraction::parse(std::string_view text) {
  Fraction f;
  const auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    f.num = parse_int(text, "fraction");
    f.den = 1;
  } else {
    f.num = parse_int(text.substr(0, slash), "fraction numerator");
    f.den = parse_int(text.substr(slash + 1), "fraction denominator");
  }
  if (f.den <= 0) throw std::invalid_argument("fraction denominator must be positive");
  return f;
}

std::string Fraction::str() const {
  return den == 1 ? std::to_string(num) : std::to_string(num) + "/" + std::to_string(den);
}

DatasetManifest sample_label_fraction(const DatasetManifest& manifest, Fraction fraction,
                                      std::uint64_t seed) {
  if (manifest.role != ManifestRole::kLabeledTrain)
    throw CatalogError("label-fraction sampling needs a LABELED_TRAIN manifest");
  if (fraction.den <= 0 || fraction.num <= 0 || fraction.num > fraction.den)
    throw std::invalid_argument("label fraction " + fraction.str() + " outside (0,1]");

  std::map<std::string, std::vector<std::size_t>> by_wsi;
  for (std::size_t i = 0; i < manifest.records.size(); ++i) by_wsi[manifest.records[i].wsi_id].push_back(i);

  const auto total_n = static_cast<std::int64_t>(manifest.records.size());
  const std::int64_t target = total_n * fraction.num / fraction.den;
  struct Quota {
    std::string wsi;
    std::int64_t take;
    std::int64_t remainder;
    std::uint64_t tiebreak;
  };
  Rng rng(seed);
  std::vector<Quota> quotas;
  std::int64_t assigned = 0;
  for (const auto& [wsi, idx] : by_wsi) {
    const auto n = static_cast<std::int64_t>(idx.size());
    quotas.push_back({wsi, n * fraction.num / fraction.den, (n * fraction.num) % fraction.den, rng.next()});
    assigned += quotas.back().take;
  }
  // Largest remainders receive the records lost to per-slide flooring.
  std::vector<std::size_t> order(quotas.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (quotas[a].remainder != quotas[b].remainder) return quotas[a].remainder > quotas[b].remainder;
    return quotas[a].tiebreak < quotas[b].tiebreak;
  });
  for (std::size_t i = 0; assigned < target; ++i, ++assigned) ++quotas[order[i]].take;

  std::vector<std::size_t> keep;
  for (const auto& q : quotas) {
    std::vector<std::size_t> idx = by_wsi[q.wsi];
    rng.shuffle(idx);
    keep.insert(keep.end(), idx.begin(), idx.begin() + q.take);
  }
  std::sort(keep.begin(), keep.end());
  return keep_indices(manifest, keep);
}

DatasetManifest sample_centers(const DatasetManifest& manifest, int n_centers, int per_center,
                               std::uint64_t seed) {
  if (manifest.role != ManifestRole::kUnlabeledTrain)
    throw CatalogError("center sampling needs an UNLABELED_TRAIN manifest");
  if (n_centers < 0 || per_center < 0) throw std::invalid_argument("center counts must be non-negative");
  std::vector<std::string> centers = manifest.center_ids();
  if (static_cast<std::size_t>(n_centers) > centers.size())
    throw CatalogError("requested " + std::to_string(n_centers) + " centers but the manifest has " +
                       std::to_string(centers.size()));
  Rng rng(seed);
  rng.shuffle(centers);
  centers.resize(static_cast<std::size_t>(n_centers));
  std::sort(centers.begin(), centers.end());

  std::vector<std::size_t> keep;
  for (const auto& c : centers) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < manifest.records.size(); ++i)
      if (manifest.records[i].center_id == c) idx.push_back(i);
    if (static_cast<int>(idx.size()) < per_center)
      throw CatalogError("center " + c + " has " + std::to_string(idx.size()) + " patches, fewer than " +
                         std::to_string(per_center));
    rng.shuffle(idx);
    keep.insert(keep.end(), idx.begin(), idx.begin() + per_center);
  }
  std::sort(keep.begin(), keep.end());
  return keep_indices(manifest, keep);
}

}  // namespace glomseg
