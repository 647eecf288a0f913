// SPDX-License-Identifier: Apache-2.0
// Shared helpers for the unit tests: fixtures, random inputs, scratch dirs.
#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "json.hpp"
#include "upgan/image.hpp"
#include "upgan/nn/tensor.hpp"

namespace testing {

inline const nlohmann::json& fixtures() {
  static const nlohmann::json doc = [] {
    std::ifstream in(std::string(UPGAN_TEST_DATA) + "/fixtures.json");
    if (!in) throw std::runtime_error("missing tests/data/fixtures.json");
    return nlohmann::json::parse(in);
  }();
  return doc;
}

inline std::filesystem::path data_path(const std::string& rel) { return std::filesystem::path(UPGAN_TEST_DATA) / rel; }

inline upgan::Image random_image(std::mt19937_64& rng, int h, int w, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  upgan::Image img(h, w);
  for (double& v : img.pixels) v = u(rng);
  return img;
}

inline upgan::nn::Tensor random_tensor(std::mt19937_64& rng, upgan::nn::Shape s, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> u(lo, hi);
  upgan::nn::Tensor t(s);
  for (float& v : t.data) v = static_cast<float>(u(rng));
  return t;
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-12) {
  return std::abs(a - b) <= rel * std::max(std::abs(a), std::abs(b)) + abs_floor;
}

/// Fresh directory under the build tree's temp area; removed on destruction.
class ScratchDir {
 public:
  explicit ScratchDir(const std::string& tag) {
    path_ = std::filesystem::temp_directory_path() /
            ("upgan_test_" + tag + "_" + std::to_string(std::random_device{}()));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~ScratchDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

}  // namespace testing
