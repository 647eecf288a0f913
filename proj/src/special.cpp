// SPDX-License-Identifier: Apache-2.0
#include "upgan/special.hpp"

#include <array>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace upgan {

namespace {

constexpr double kLanczosG = 7.0;
constexpr std::array<double, 9> kLanczos = {
    0.99999999999980993,  676.5203681218851,     -1259.1392167224028,
    771.32342877765313,   -176.61502916214059,   12.507343278686905,
    -0.13857109526572012, 9.9843695780195716e-6, 1.5056327351493116e-7};

void check_domain(double x, const char* fn) {
  if (!(x > 0.0) || !std::isfinite(x)) {
    throw std::domain_error(std::string(fn) + ": argument must be positive and finite");
  }
}

}  // namespace

double log_gamma(double x) {
  check_domain(x, "log_gamma");
  double shift = 0.0;
  // Γ(x) = Γ(x + 1) / x
  while (x < 0.5) {
    shift -= std::log(x);
    x += 1.0;
  }
  const double z = x - 1.0;
  double series = kLanczos[0];
  for (std::size_t i = 1; i < kLanczos.size(); ++i) series += kLanczos[i] / (z + static_cast<double>(i));
  const double t = z + kLanczosG + 0.5;
  return shift + 0.5 * std::log(2.0 * std::numbers::pi) + (z + 0.5) * std::log(t) - t + std::log(series);
}

double digamma(double x) {
  check_domain(x, "digamma");
  double acc = 0.0;
  while (x < 10.0) {
    acc -= 1.0 / x;
    x += 1.0;
  }
  const double inv = 1.0 / x;
  const double inv2 = inv * inv;
  // ln x − 1/(2x) − Σ B_2k / (2k x^2k)
  const double tail =
      inv2 * (1.0 / 12.0 -
              inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 * (1.0 / 132.0 - inv2 * (691.0 / 32760.0))))));
  return acc + std::log(x) - 0.5 * inv - tail;
}

}  // namespace upgan
