// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>

#include "upgan/image.hpp"

namespace upgan::ggd {

/// Shape-parameter bounds enforced by the generator head.
struct BetaClamp {
  double min = 0.2;
  double max = 5.0;
};

/// Default lower bound applied to the scale map inside the loss.
inline constexpr double kAlphaFloor = 1e-3;

/// Per-pixel zero-mean generalized Gaussian residual model predicted by a
/// generator: `mean` is the predicted image, `alpha` the scale map and `beta`
/// the shape map. All three share one shape.
struct GgdPrediction {
  Image mean;
  Image alpha;
  Image beta;

  int height() const { return mean.height; }
  int width() const { return mean.width; }
};

/// Throws std::invalid_argument unless the maps agree in shape, alpha > 0,
/// beta lies inside `clamp` and every value is finite.
void validate(const GgdPrediction& pred, const BetaClamp& clamp = {});

// Scalar kernels. These are what the training graph calls per pixel.

/// Loss contribution of one pixel with residual r = mean − target:
/// (|r|/α)^β − ln(β/α) + ln Γ(1/β). α is lifted to `alpha_floor` if smaller.
double pixel_nll(double residual, double alpha, double beta, double alpha_floor = kAlphaFloor);

struct PixelGrad {
  double d_residual = 0.0;
  double d_alpha = 0.0;
  double d_beta = 0.0;
};

/// Analytic partial derivatives of pixel_nll. Near r = 0 with β < 1 the
/// residual derivative is evaluated at |r| = `residual_eps`.
PixelGrad pixel_nll_grad(double residual, double alpha, double beta, double alpha_floor = kAlphaFloor,
                         double residual_eps = 1e-6);

/// σ = α·sqrt(Γ(3/β) / Γ(1/β)), evaluated in log space.
double sigma(double alpha, double beta);

/// ∂σ/∂α and ∂σ/∂β.
struct SigmaGrad {
  double d_alpha = 0.0;
  double d_beta = 0.0;
};
SigmaGrad sigma_grad(double alpha, double beta);

// Map-level operations.

/// Mean over pixels of pixel_nll. Throws on shape mismatch or non-finite input.
double nll(const GgdPrediction& pred, const Image& target, double alpha_floor = kAlphaFloor);

/// Gradient of nll() with respect to each prediction map (already divided by K).
struct NllGradient {
  Image d_mean;
  Image d_alpha;
  Image d_beta;
};
NllGradient nll_gradient(const GgdPrediction& pred, const Image& target, double alpha_floor = kAlphaFloor);

/// Elementwise standard deviation map. Throws std::domain_error on alpha <= 0
/// or beta <= 0.
Image sigma_map(const Image& alpha, const Image& beta);

/// Draws one residual per pixel: |ε| = α·G^(1/β) with G ~ Gamma(1/β, 1) and a
/// fair random sign. Bit-identical for equal inputs and seed.
Image sample(const Image& alpha, const Image& beta, std::uint64_t seed);

}  // namespace upgan::ggd
