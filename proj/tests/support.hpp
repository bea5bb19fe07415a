#pragma once

#include <atomic>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <unistd.h>

#include "glomseg/image.hpp"
#include "glomseg/random.hpp"

namespace glomseg::testing {

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    static std::atomic<int> counter{0};
    path_ = std::filesystem::temp_directory_path() /
            ("glomseg_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

 private:
  std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline SegMask random_mask(std::int64_t h, std::int64_t w, double density, Rng& rng) {
  SegMask m(h, w);
  for (auto& v : m.data()) v = rng.bernoulli(density) ? 1 : 0;
  return m;
}

inline RgbImage random_image(std::int64_t h, std::int64_t w, Rng& rng) {
  RgbImage im(h, w);
  for (auto& v : im.data()) v = static_cast<std::uint8_t>(rng.below(256));
  return im;
}

}  // namespace glomseg::testing
