#include "glomseg/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

namespace glomseg {

namespace {

constexpr double kMean[3] = {0.485, 0.456, 0.406};
constexpr double kStd[3] = {0.229, 0.224, 0.225};

void ensure_parent(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
}

}  // namespace

RgbImage read_rgb(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ImageError("cannot read image: " + path.string());
  RgbImage img(bgr.rows, bgr.cols);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(y, x, 0) = row[x][2];
      img.at(y, x, 1) = row[x][1];
      img.at(y, x, 2) = row[x][0];
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  cv::Mat bgr(static_cast<int>(image.height()), static_cast<int>(image.width()), CV_8UC3);
  for (int y = 0; y < bgr.rows; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) row[x] = cv::Vec3b(image.at(y, x, 2), image.at(y, x, 1), image.at(y, x, 0));
  }
  ensure_parent(path);
  if (!cv::imwrite(path.string(), bgr)) throw ImageError("cannot write image: " + path.string());
}

SegMask read_mask(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
  if (m.empty()) throw ImageError("cannot read mask: " + path.string());
  SegMask mask(m.rows, m.cols);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      const std::uint8_t v = row[x];
      if (v != 0 && v != 1 && v != 255)
        throw ImageError("mask " + path.string() + " has non-binary value " + std::to_string(v) +
                         " at (" + std::to_string(x) + "," + std::to_string(y) + ")");
      mask.at(y, x) = v ? 1 : 0;
    }
  }
  return mask;
}

void write_mask_png(const std::filesystem::path& path, const SegMask& mask) {
  validate_mask(mask);
  cv::Mat m(static_cast<int>(mask.height()), static_cast<int>(mask.width()), CV_8UC1);
  for (int y = 0; y < m.rows; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) row[x] = mask.at(y, x) ? 255 : 0;
  }
  ensure_parent(path);
  if (!cv::imwrite(path.string(), m)) throw ImageError("cannot write mask: " + path.string());
}

void validate_mask(const SegMask& mask) {
  for (auto v : mask.data())
    if (v > 1) throw ImageError("mask value " + std::to_string(v) + " outside {0,1}");
}

std::int64_t count_foreground(const SegMask& mask) {
  std::int64_t n = 0;
  for (auto v : mask.data()) n += v;
  return n;
}

Tensor images_to_tensor(std::span<const RgbImage> images) {
  if (images.empty()) throw std::invalid_argument("images_to_tensor: empty batch");
  const std::int64_t h = images[0].height(), w = images[0].width();
  const auto b = static_cast<std::int64_t>(images.size());
  Tensor t({b, 3, h, w});
  for (std::int64_t n = 0; n < b; ++n) {
    const auto& img = images[static_cast<std::size_t>(n)];
    if (img.height() != h || img.width() != w)
      throw std::invalid_argument("images_to_tensor: images in a batch must share dimensions");
    for (int c = 0; c < 3; ++c)
      for (std::int64_t y = 0; y < h; ++y)
        for (std::int64_t x = 0; x < w; ++x)
          t.at(n, c, y, x) = (img.at(y, x, c) / 255.0 - kMean[c]) / kStd[c];
  }
  return t;
}

Tensor masks_to_tensor(std::span<const SegMask> masks) {
  if (masks.empty()) throw std::invalid_argument("masks_to_tensor: empty batch");
  const std::int64_t h = masks[0].height(), w = masks[0].width();
  const auto b = static_cast<std::int64_t>(masks.size());
  Tensor t({b, h, w});
  std::size_t i = 0;
  for (const auto& m : masks) {
    if (m.height() != h || m.width() != w)
      throw std::invalid_argument("masks_to_tensor: masks in a batch must share dimensions");
    for (auto v : m.data()) t[i++] = v;
  }
  return t;
}

}  // namespace glomseg
