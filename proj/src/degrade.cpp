// SPDX-License-Identifier: Apache-2.0
#include "upgan/degrade.hpp"

#include <fftw3.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>

namespace upgan::degrade {

namespace {

class Plan {
 public:
  Plan(int h, int w, Spectrum& buf, int sign)
      : plan_(fftw_plan_dft_2d(h, w, reinterpret_cast<fftw_complex*>(buf.data()),
                               reinterpret_cast<fftw_complex*>(buf.data()), sign, FFTW_ESTIMATE)) {
    if (!plan_) throw std::runtime_error("fftw: plan creation failed");
  }
  ~Plan() { fftw_destroy_plan(plan_); }
  Plan(const Plan&) = delete;
  Plan& operator=(const Plan&) = delete;
  void run() { fftw_execute(plan_); }

 private:
  fftw_plan plan_;
};

int signed_freq(int idx, int n) { return idx < n / 2 ? idx : idx - n; }

}  // namespace

Spectrum fft2(const Image& img) {
  if (img.empty()) throw std::invalid_argument("fft2: empty image");
  Spectrum buf(img.size());
  for (std::size_t i = 0; i < img.size(); ++i) buf[i] = img.pixels[i];
  Plan(img.height, img.width, buf, FFTW_FORWARD).run();
  return buf;
}

Image ifft2_real(const Spectrum& k, int height, int width) {
  if (k.size() != static_cast<std::size_t>(height) * width) throw std::invalid_argument("ifft2_real: size mismatch");
  Spectrum buf = k;
  Plan(height, width, buf, FFTW_BACKWARD).run();
  Image out(height, width);
  const double scale = 1.0 / static_cast<double>(buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) out.pixels[i] = buf[i].real() * scale;
  return out;
}

std::size_t retained_count(int height, int width, double keep_fraction) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw std::invalid_argument("keep_fraction must lie in (0, 1]");
  }
  const double n = static_cast<double>(height) * width;
  // The small slack keeps exact products (e.g. 0.5 · 16) from rounding up.
  const auto count = static_cast<std::size_t>(std::ceil(keep_fraction * n - 1e-9));
  return std::clamp<std::size_t>(count, 1, static_cast<std::size_t>(n));
}

std::vector<std::uint8_t> central_mask(int height, int width, double keep_fraction, MaskShape shape) {
  const std::size_t keep = retained_count(height, width, keep_fraction);
  const std::size_t n = static_cast<std::size_t>(height) * width;
  struct Key {
    long primary;
    long secondary;
    std::size_t index;
  };
  std::vector<Key> keys(n);
  for (int y = 0; y < height; ++y) {
    const long fy = signed_freq(y, height);
    for (int x = 0; x < width; ++x) {
      const long fx = signed_freq(x, width);
      const std::size_t idx = static_cast<std::size_t>(y) * width + x;
      if (shape == MaskShape::square) {
        keys[idx] = {std::max(std::labs(fy), std::labs(fx)), fy * fy + fx * fx, idx};
      } else {
        keys[idx] = {std::labs(fy) * 2 + (fy < 0 ? 1 : 0), std::labs(fx) * 2 + (fx < 0 ? 1 : 0), idx};
      }
    }
  }
  std::sort(keys.begin(), keys.end(), [](const Key& a, const Key& b) {
    if (a.primary != b.primary) return a.primary < b.primary;
    if (a.secondary != b.secondary) return a.secondary < b.secondary;
    return a.index < b.index;
  });
  std::vector<std::uint8_t> mask(n, 0);
  for (std::size_t i = 0; i < keep; ++i) mask[keys[i].index] = 1;
  return mask;
}

Image undersample_kspace(const Image& img, double keep_fraction, MaskShape shape) {
  if (img.height % 2 != 0 || img.width % 2 != 0) throw std::invalid_argument("undersample_kspace: odd dimensions");
  const auto mask = central_mask(img.height, img.width, keep_fraction, shape);
  Spectrum k = fft2(img);
  for (std::size_t i = 0; i < k.size(); ++i) {
    if (!mask[i]) k[i] = 0.0;
  }
  return ifft2_real(k, img.height, img.width);
}

Image rigid_transform(const Image& img, double angle_rad, double shift_x, double shift_y) {
  Image out(img.height, img.width);
  const double cx = (img.width - 1) / 2.0;
  const double cy = (img.height - 1) / 2.0;
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  auto sample = [&](int y, int x) -> double {
    return (y >= 0 && y < img.height && x >= 0 && x < img.width) ? img(y, x) : 0.0;
  };
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      // Inverse map: source = R^{-1}(p − c − t) + c
      const double dx = x - cx - shift_x;
      const double dy = y - cy - shift_y;
      const double sx = c * dx + s * dy + cx;
      const double sy = -s * dx + c * dy + cy;
      const double fx = std::floor(sx);
      const double fy = std::floor(sy);
      const double wx = sx - fx;
      const double wy = sy - fy;
      const int x0 = static_cast<int>(fx);
      const int y0 = static_cast<int>(fy);
      double v = (1 - wx) * (1 - wy) * sample(y0, x0);
      if (wx > 0) v += wx * (1 - wy) * sample(y0, x0 + 1);
      if (wy > 0) v += (1 - wx) * wy * sample(y0 + 1, x0);
      if (wx > 0 && wy > 0) v += wx * wy * sample(y0 + 1, x0 + 1);
      out(y, x) = v;
    }
  }
  return out;
}

Image simulate_motion(const Image& img, const MotionParams& params, std::uint64_t seed) {
  if (params.segments < 1) throw std::invalid_argument("simulate_motion: segments must be >= 1");
  if (params.max_rotation_deg < 0.0 || params.max_translation_px < 0.0) {
    throw std::invalid_argument("simulate_motion: severity must be nonnegative");
  }
  const int h = img.height;
  const int w = img.width;
  const int segments = std::min(params.segments, h);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(-1.0, 1.0);

  Spectrum out(img.size());
  const Spectrum reference = fft2(img);
  // Acquisition order position p ↔ row index of frequency p − h/2.
  auto row_of = [&](int p) { return (p - h / 2 + h) % h; };
  for (int seg = 0; seg < segments; ++seg) {
    const int begin = seg * h / segments;
    const int end = (seg + 1) * h / segments;
    const bool holds_center = begin <= h / 2 && h / 2 < end;
    const double angle = unit(rng) * params.max_rotation_deg * std::numbers::pi / 180.0;
    const double tx = unit(rng) * params.max_translation_px;
    const double ty = unit(rng) * params.max_translation_px;
    const bool still = holds_center || (angle == 0.0 && tx == 0.0 && ty == 0.0);
    const Spectrum moved = still ? Spectrum{} : fft2(rigid_transform(img, angle, tx, ty));
    const Spectrum& src = still ? reference : moved;
    for (int p = begin; p < end; ++p) {
      const std::size_t row = static_cast<std::size_t>(row_of(p)) * w;
      std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(row), w, out.begin() + static_cast<std::ptrdiff_t>(row));
    }
  }
  return ifft2_real(out, h, w);
}

}  // namespace upgan::degrade
