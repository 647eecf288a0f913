// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace upgan {

/// Single-channel real-valued map stored row-major.
struct Image {
  int height = 0;
  int width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, double fill = 0.0)
      : height(h), width(w), pixels(static_cast<std::size_t>(h) * static_cast<std::size_t>(w), fill) {
    if (h < 0 || w < 0) throw std::invalid_argument("Image: negative dimensions");
  }

  std::size_t size() const { return pixels.size(); }
  bool empty() const { return pixels.empty(); }

  double& operator()(int y, int x) { return pixels[static_cast<std::size_t>(y) * width + x]; }
  double operator()(int y, int x) const { return pixels[static_cast<std::size_t>(y) * width + x]; }

  std::span<double> view() { return pixels; }
  std::span<const double> view() const { return pixels; }

  bool same_shape(const Image& other) const { return height == other.height && width == other.width; }
};

inline void require_same_shape(const Image& a, const Image& b, const char* what) {
  if (!a.same_shape(b)) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch (" + std::to_string(a.height) + "x" +
                                std::to_string(a.width) + " vs " + std::to_string(b.height) + "x" +
                                std::to_string(b.width) + ")");
  }
}

}  // namespace upgan
