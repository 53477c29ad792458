#pragma once

#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "darth/dataset.hpp"

namespace testutil {

namespace fs = std::filesystem;

inline fs::path data_dir() { return fs::path(DARTH_TEST_DATA); }

/// Fresh scratch directory under the system temp dir, removed on scope exit.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = fs::temp_directory_path() / ("darth_" + tag + "_" + std::to_string(rd()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& name) const { return path_ / name; }

 private:
  fs::path path_;
};

inline darth::Dataset gaussian(std::size_t n, std::size_t dim, std::uint64_t seed, float scale = 1.0f,
                               darth::Role role = darth::Role::base) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> nd(0.0f, scale);
  std::vector<float> v(n * dim);
  for (float& x : v) x = nd(rng);
  return darth::Dataset(dim, std::move(v), role);
}

inline double sq_dist(std::span<const float> a, std::span<const float> b) {
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace testutil
