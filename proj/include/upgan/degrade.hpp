// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <complex>
#include <cstdint>
#include <vector>

#include "upgan/image.hpp"

namespace upgan::degrade {

using Spectrum = std::vector<std::complex<double>>;

/// Unnormalized forward 2-D DFT (FFTW layout, DC at index 0).
Spectrum fft2(const Image& img);
/// Inverse of fft2 including the 1/(H·W) factor; returns the real part.
Image ifft2_real(const Spectrum& k, int height, int width);

enum class MaskShape {
  /// Coefficients ordered by Chebyshev distance from DC, i.e. growing
  /// centered squares; ties broken by Euclidean distance then index.
  square,
  /// Whole phase-encode rows nearest DC first, the last row partially filled
  /// from its center outward.
  lines,
};

/// Number of coefficients kept for a fraction: ceil(fraction · H · W).
std::size_t retained_count(int height, int width, double keep_fraction);

/// Keep-mask in FFTW layout with exactly retained_count() ones.
std::vector<std::uint8_t> central_mask(int height, int width, double keep_fraction,
                                       MaskShape shape = MaskShape::square);

/// Zero every coefficient outside the central region, inverse transform and
/// keep the real part. Requires even dimensions and 0 < keep_fraction <= 1.
Image undersample_kspace(const Image& img, double keep_fraction = 0.08, MaskShape shape = MaskShape::square);

struct MotionParams {
  int segments = 4;
  double max_rotation_deg = 5.0;
  double max_translation_px = 3.0;
};

/// Rotation about the image center followed by translation; bilinear
/// resampling with zeros outside the field of view. Identity parameters
/// reproduce the input exactly.
Image rigid_transform(const Image& img, double angle_rad, double shift_x, double shift_y);

/// Phase-encode rows (in acquisition order −H/2 … H/2−1) are split into
/// contiguous segments. Each segment is filled from the spectrum of a rigidly
/// moved copy of the image with rotation in ±max_rotation_deg and
/// translation in ±max_translation_px per axis; the segment holding the
/// k-space center keeps the reference pose. Returns the real part of the
/// inverse transform.
Image simulate_motion(const Image& img, const MotionParams& params, std::uint64_t seed);

}  // namespace upgan::degrade
