// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace upgan::nn {

/// NCHW extents. Parameters reuse the same four slots (out, in, kh, kw).
struct Shape {
  int n = 1;
  int c = 1;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * static_cast<std::size_t>(c) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(w);
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * static_cast<std::size_t>(w); }
  bool operator==(const Shape&) const = default;

  std::string str() const {
    return std::to_string(n) + "x" + std::to_string(c) + "x" + std::to_string(h) + "x" + std::to_string(w);
  }
};

/// Storage is aligned to the SIMD width: Eigen's matrix-vector kernels pick their
/// summation order from the pointer alignment, so malloc-aligned buffers
/// made gradients differ in the last bits from run to run.
using FloatBuffer = std::vector<float, Eigen::aligned_allocator<float>>;

struct Tensor {
  Shape shape;
  FloatBuffer data;

  Tensor() = default;
  explicit Tensor(Shape s, float fill = 0.0f) : shape(s), data(s.numel(), fill) {}

  std::size_t numel() const { return data.size(); }
  float* sample(int i) { return data.data() + static_cast<std::size_t>(i) * shape.c * shape.plane(); }
  const float* sample(int i) const { return data.data() + static_cast<std::size_t>(i) * shape.c * shape.plane(); }
  float* channel(int i, int c) { return sample(i) + static_cast<std::size_t>(c) * shape.plane(); }
  const float* channel(int i, int c) const { return sample(i) + static_cast<std::size_t>(c) * shape.plane(); }
  float& at(int i, int c, int y, int x) {
    return channel(i, c)[static_cast<std::size_t>(y) * shape.w + x];
  }
  float at(int i, int c, int y, int x) const {
    return channel(i, c)[static_cast<std::size_t>(y) * shape.w + x];
  }
};

inline void require_shape(const Tensor& t, const Shape& s, const char* what) {
  if (!(t.shape == s)) {
    throw std::invalid_argument(std::string(what) + ": expected " + s.str() + ", got " + t.shape.str());
  }
}

}  // namespace upgan::nn
