// SPDX-License-Identifier: Apache-2.0
#include "upgan/ggd.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <stdexcept>
#include <string>

#include "upgan/special.hpp"

namespace upgan::ggd {

namespace {

void require_finite(const Image& img, const char* what) {
  for (double v : img.pixels) {
    if (!std::isfinite(v)) throw std::invalid_argument(std::string(what) + ": non-finite value");
  }
}

void require_positive_params(double alpha, double beta) {
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta)) {
    throw std::domain_error("ggd: alpha and beta must be positive and finite");
  }
}

}  // namespace

void validate(const GgdPrediction& pred, const BetaClamp& clamp) {
  require_same_shape(pred.mean, pred.alpha, "GgdPrediction alpha");
  require_same_shape(pred.mean, pred.beta, "GgdPrediction beta");
  require_finite(pred.mean, "GgdPrediction mean");
  for (std::size_t i = 0; i < pred.alpha.size(); ++i) {
    const double a = pred.alpha.pixels[i];
    const double b = pred.beta.pixels[i];
    if (!(a > 0.0) || !std::isfinite(a)) throw std::invalid_argument("GgdPrediction: alpha must be > 0");
    if (!(b >= clamp.min && b <= clamp.max)) {
      throw std::invalid_argument("GgdPrediction: beta outside clamp");
    }
  }
}

double pixel_nll(double residual, double alpha, double beta, double alpha_floor) {
  require_positive_params(alpha, beta);
  const double a = std::max(alpha, alpha_floor);
  const double ratio = std::abs(residual) / a;
  return std::pow(ratio, beta) - std::log(beta / a) + log_gamma(1.0 / beta);
}

PixelGrad pixel_nll_grad(double residual, double alpha, double beta, double alpha_floor, double residual_eps) {
  require_positive_params(alpha, beta);
  const bool floored = alpha < alpha_floor;
  const double a = floored ? alpha_floor : alpha;
  const double abs_r = std::abs(residual);
  const double ratio = abs_r / a;
  const double powered = std::pow(ratio, beta);

  PixelGrad g;
  if (abs_r > 0.0 || beta >= 1.0) {
    const double r_eff = std::max(abs_r, beta < 1.0 ? residual_eps : 0.0);
    const double sign = residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);
    // d/dr (|r|/a)^β = β |r|^(β−1) sign(r) / a^β
    g.d_residual = sign * beta * std::pow(r_eff / a, beta - 1.0) / a;
  }
  if (!floored) g.d_alpha = (1.0 - beta * powered) / a;
  const double log_term = ratio > 0.0 ? powered * std::log(ratio) : 0.0;
  g.d_beta = log_term - 1.0 / beta - digamma(1.0 / beta) / (beta * beta);
  return g;
}

double sigma(double alpha, double beta) {
  require_positive_params(alpha, beta);
  // Direct ratio while Γ(3/β) fits in a double: fewer roundings, so the
  // closed forms (β = 1, 2) come out correctly rounded.
  if (3.0 / beta <= 170.0) return alpha * std::sqrt(std::tgamma(3.0 / beta) / std::tgamma(1.0 / beta));
  return alpha * std::exp(0.5 * (log_gamma(3.0 / beta) - log_gamma(1.0 / beta)));
}

SigmaGrad sigma_grad(double alpha, double beta) {
  const double s = sigma(alpha, beta);
  SigmaGrad g;
  g.d_alpha = s / alpha;
  g.d_beta = s * 0.5 * (digamma(1.0 / beta) - 3.0 * digamma(3.0 / beta)) / (beta * beta);
  return g;
}

double nll(const GgdPrediction& pred, const Image& target, double alpha_floor) {
  require_same_shape(pred.mean, target, "ggd::nll target");
  require_same_shape(pred.mean, pred.alpha, "ggd::nll alpha");
  require_same_shape(pred.mean, pred.beta, "ggd::nll beta");
  if (target.empty()) throw std::invalid_argument("ggd::nll: empty image");
  require_finite(pred.mean, "ggd::nll mean");
  require_finite(target, "ggd::nll target");
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    acc += pixel_nll(pred.mean.pixels[i] - target.pixels[i], pred.alpha.pixels[i], pred.beta.pixels[i],
                     alpha_floor);
  }
  return acc / static_cast<double>(target.size());
}

NllGradient nll_gradient(const GgdPrediction& pred, const Image& target, double alpha_floor) {
  require_same_shape(pred.mean, target, "ggd::nll_gradient target");
  require_same_shape(pred.mean, pred.alpha, "ggd::nll_gradient alpha");
  require_same_shape(pred.mean, pred.beta, "ggd::nll_gradient beta");
  if (target.empty()) throw std::invalid_argument("ggd::nll_gradient: empty image");
  const double inv_k = 1.0 / static_cast<double>(target.size());
  NllGradient out{Image(target.height, target.width), Image(target.height, target.width),
                  Image(target.height, target.width)};
  for (std::size_t i = 0; i < target.size(); ++i) {
    const PixelGrad g = pixel_nll_grad(pred.mean.pixels[i] - target.pixels[i], pred.alpha.pixels[i],
                                       pred.beta.pixels[i], alpha_floor);
    out.d_mean.pixels[i] = g.d_residual * inv_k;
    out.d_alpha.pixels[i] = g.d_alpha * inv_k;
    out.d_beta.pixels[i] = g.d_beta * inv_k;
  }
  return out;
}

Image sigma_map(const Image& alpha, const Image& beta) {
  require_same_shape(alpha, beta, "ggd::sigma_map");
  Image out(alpha.height, alpha.width);
  for (std::size_t i = 0; i < alpha.size(); ++i) out.pixels[i] = sigma(alpha.pixels[i], beta.pixels[i]);
  return out;
}

Image sample(const Image& alpha, const Image& beta, std::uint64_t seed) {
  require_same_shape(alpha, beta, "ggd::sample");
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> coin(0, 1);
  Image out(alpha.height, alpha.width);
  for (std::size_t i = 0; i < alpha.size(); ++i) {
    const double a = alpha.pixels[i];
    const double b = beta.pixels[i];
    require_positive_params(a, b);
    std::gamma_distribution<double> gamma(1.0 / b, 1.0);
    const double magnitude = a * std::pow(gamma(rng), 1.0 / b);
    out.pixels[i] = coin(rng) ? magnitude : -magnitude;
  }
  return out;
}

}  // namespace upgan::ggd
