// SPDX-License-Identifier: Apache-2.0
#include <cmath>
#include <numeric>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "upgan/dataset.hpp"
#include "upgan/degrade.hpp"
#include "upgan/metrics.hpp"

using namespace upgan;
using namespace upgan::degrade;

namespace {

double max_abs_diff(const Image& a, const Image& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.pixels[i] - b.pixels[i]));
  return d;
}

double mse(const Image& a, const Image& b) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += (a.pixels[i] - b.pixels[i]) * (a.pixels[i] - b.pixels[i]);
  return acc / static_cast<double>(a.size());
}

// A slice of the procedural phantom in [0, 1]: structured, zero background.
Image phantom(int size, std::uint64_t seed = 3) {
  PhantomParams p;
  p.subjects = 3;
  p.slices_per_subject = 3;
  p.size = size;
  const Dataset d = procedural_pairs(p, seed);
  return denormalize(d.samples[1].target_b, d.samples[1].b_range);
}

}  // namespace

TEST_CASE("FFT round trip") {
  std::mt19937_64 rng(1);
  for (auto [h, w] : {std::pair{8, 8}, std::pair{16, 10}, std::pair{64, 64}}) {
    const Image x = testing::random_image(rng, h, w);
    CHECK(max_abs_diff(ifft2_real(fft2(x), h, w), x) < 1e-12);
  }
}

TEST_CASE("undersampling identities") {
  std::mt19937_64 rng(2);
  const Image x = testing::random_image(rng, 32, 32);
  CHECK(max_abs_diff(undersample_kspace(x, 1.0), x) < 1e-6);
  CHECK(max_abs_diff(undersample_kspace(x, 1.0, MaskShape::lines), x) < 1e-6);
  const Image flat(32, 32, 0.37);
  for (double f : {0.001, 0.08, 0.5}) {
    CHECK(max_abs_diff(undersample_kspace(flat, f), flat) < 1e-6);
    CHECK(max_abs_diff(undersample_kspace(flat, f, MaskShape::lines), flat) < 1e-6);
  }
}

TEST_CASE("retained coefficient counts") {
  CHECK(retained_count(256, 256, 0.08) == 5243u);
  CHECK(1.0 / 0.08 == doctest::Approx(12.5));
  CHECK(retained_count(4, 4, 0.5) == 8u);
  CHECK(retained_count(64, 64, 1.0) == 4096u);
  for (auto shape : {MaskShape::square, MaskShape::lines}) {
    const auto mask = central_mask(256, 256, 0.08, shape);
    CHECK(std::accumulate(mask.begin(), mask.end(), std::size_t{0}) == 5243u);
    CHECK(mask[0] == 1);  // DC
  }
  CHECK_THROWS_AS(retained_count(8, 8, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(retained_count(8, 8, -0.1), std::invalid_argument);
  CHECK_THROWS_AS(retained_count(8, 8, 1.5), std::invalid_argument);
  CHECK_THROWS_AS(undersample_kspace(Image(7, 8), 0.5), std::invalid_argument);
}

TEST_CASE("square mask keeps the lowest frequencies") {
  const auto mask = central_mask(16, 16, 25.0 / 256.0);  // exactly the 5x5 block |f| <= 2
  for (int y = 0; y < 16; ++y) {
    for (int x = 0; x < 16; ++x) {
      const int fy = y < 8 ? y : y - 16, fx = x < 8 ? x : x - 16;
      CHECK(mask[y * 16 + x] == (std::abs(fy) <= 2 && std::abs(fx) <= 2 ? 1 : 0));
    }
  }
  // Lines: whole rows nearest DC.
  const auto lines = central_mask(16, 16, 48.0 / 256.0, MaskShape::lines);  // rows 0, 1, −1
  for (int y = 0; y < 16; ++y) {
    const bool keep = y == 0 || y == 1 || y == 15;
    for (int x = 0; x < 16; ++x) CHECK(lines[y * 16 + x] == (keep ? 1 : 0));
  }
}

TEST_CASE("undersampling a natural image loses information, deterministically") {
  const Image x = phantom(256);
  const Image y = undersample_kspace(x, 0.08);
  CHECK(mse(x, y) > 0.0);
  CHECK(undersample_kspace(x, 0.08).pixels == y.pixels);
  // Less data, more error.
  CHECK(mse(x, undersample_kspace(x, 0.02)) > mse(x, y));
}

TEST_CASE("rigid transform identity and integer shift") {
  std::mt19937_64 rng(3);
  const Image x = testing::random_image(rng, 12, 10);
  CHECK(rigid_transform(x, 0.0, 0.0, 0.0).pixels == x.pixels);
  const Image s = rigid_transform(x, 0.0, 2.0, -1.0);
  for (int yy = 0; yy < 12; ++yy) {
    for (int xx = 0; xx < 10; ++xx) {
      const int sy = yy + 1, sx = xx - 2;
      const double expect = (sy >= 0 && sy < 12 && sx >= 0 && sx < 10) ? x(sy, sx) : 0.0;
      CHECK(s(yy, xx) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("motion simulation") {
  const Image x = phantom(64);
  MotionParams still;
  still.max_rotation_deg = 0.0;
  still.max_translation_px = 0.0;
  CHECK(max_abs_diff(simulate_motion(x, still, 1), x) < 1e-6);

  const MotionParams defaults;
  CHECK(defaults.segments == 4);
  const Image m1 = simulate_motion(x, defaults, 7);
  CHECK(simulate_motion(x, defaults, 7).pixels == m1.pixels);
  CHECK(simulate_motion(x, defaults, 8).pixels != m1.pixels);
  CHECK(metrics::ssim(m1, x) < 1.0);

  // Ghosting: energy appears well outside the object support.
  double outside = 0.0;
  int count = 0;
  for (int y = 0; y < 64; ++y) {
    for (int c = 0; c < 64; ++c) {
      bool near = false;
      for (int dy = -5; dy <= 5 && !near; ++dy) {
        for (int dx = -5; dx <= 5 && !near; ++dx) {
          const int yy = y + dy, xx = c + dx;
          near = yy >= 0 && yy < 64 && xx >= 0 && xx < 64 && x(yy, xx) > 1e-6;
        }
      }
      if (!near) {
        outside += m1(y, c) * m1(y, c);
        ++count;
      }
    }
  }
  REQUIRE(count > 0);
  CHECK(outside / count > 1e-6);

  MotionParams bad;
  bad.segments = 0;
  CHECK_THROWS_AS(simulate_motion(x, bad, 1), std::invalid_argument);
  bad = defaults;
  bad.max_translation_px = -1.0;
  CHECK_THROWS_AS(simulate_motion(x, bad, 1), std::invalid_argument);
}
