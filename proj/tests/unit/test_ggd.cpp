// SPDX-License-Identifier: Apache-2.0
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>
#include <numbers>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "upgan/ggd.hpp"
#include "upgan/special.hpp"

using namespace upgan;
using testing::close_rel;

TEST_CASE("log_gamma and digamma match high-precision references") {
  for (const auto& c : testing::fixtures()["special"]) {
    const double x = c["x"];
    CHECK(close_rel(log_gamma(x), c["lgamma"].get<double>(), 1e-13, 1e-14));
    CHECK(close_rel(digamma(x), c["digamma"].get<double>(), 1e-12, 1e-13));
  }
}

TEST_CASE("log_gamma agrees with std::lgamma on a dense grid") {
  for (double x = 0.01; x < 60.0; x *= 1.07) CHECK(close_rel(log_gamma(x), std::lgamma(x), 1e-13, 1e-14));
}

TEST_CASE("special functions reject non-positive and non-finite input") {
  CHECK_THROWS_AS(log_gamma(0.0), std::domain_error);
  CHECK_THROWS_AS(log_gamma(-1.5), std::domain_error);
  CHECK_THROWS_AS(digamma(std::nan("")), std::domain_error);
}

TEST_CASE("pixel_nll matches reference values") {
  for (const auto& c : testing::fixtures()["ggd"]) {
    const double v = ggd::pixel_nll(c["r"], c["alpha"], c["beta"], 1e-9);
    CHECK(close_rel(v, c["nll"].get<double>(), 1e-12, 1e-12));
  }
}

TEST_CASE("pixel_nll is the negative log density minus ln 2") {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> ur(-3.0, 3.0), ua(0.05, 4.0), ub(0.2, 5.0);
  for (int i = 0; i < 500; ++i) {
    const double r = ur(rng), a = ua(rng), b = ub(rng);
    const double pdf = b / (2.0 * a * std::tgamma(1.0 / b)) * std::exp(-std::pow(std::abs(r) / a, b));
    CHECK(close_rel(ggd::pixel_nll(r, a, b, 1e-9), -std::log(pdf) - std::numbers::ln2, 1e-9, 1e-9));
  }
}

TEST_CASE("Gaussian and Laplace special cases") {
  // β = 2: (r/α)^2 − ln(2/α) + ln Γ(1/2)
  CHECK(ggd::pixel_nll(1.0, 1.0, 2.0) == doctest::Approx(1.0 - std::log(2.0) + 0.5 * std::log(std::numbers::pi)));
  // β = 1: |r|/α + ln α
  CHECK(ggd::pixel_nll(-0.5, 2.0, 1.0) == doctest::Approx(0.25 + std::log(2.0)));
}

TEST_CASE("alpha below the floor is lifted and gets no gradient") {
  CHECK(ggd::pixel_nll(0.2, 1e-6, 1.5, 1e-3) == ggd::pixel_nll(0.2, 1e-3, 1.5, 1e-3));
  CHECK(ggd::pixel_nll_grad(0.2, 1e-6, 1.5, 1e-3).d_alpha == 0.0);
}

TEST_CASE("analytic gradients match references and finite differences") {
  for (const auto& c : testing::fixtures()["ggd"]) {
    const double r = c["r"], a = c["alpha"], b = c["beta"];
    const auto g = ggd::pixel_nll_grad(r, a, b, 1e-9);
    if (r != 0.0) CHECK(close_rel(g.d_residual, c["d_r"].get<double>(), 1e-9, 1e-9));
    CHECK(close_rel(g.d_alpha, c["d_alpha"].get<double>(), 1e-9, 1e-9));
    CHECK(close_rel(g.d_beta, c["d_beta"].get<double>(), 1e-9, 1e-9));
    const auto s = ggd::sigma_grad(a, b);
    CHECK(close_rel(ggd::sigma(a, b), c["sigma"].get<double>(), 1e-12));
    CHECK(close_rel(s.d_alpha, c["d_sigma_alpha"].get<double>(), 1e-10, 1e-12));
    CHECK(close_rel(s.d_beta, c["d_sigma_beta"].get<double>(), 1e-9, 1e-12));
  }
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> ur(-2.0, 2.0), ua(0.1, 3.0), ub(0.3, 4.5);
  for (int i = 0; i < 200; ++i) {
    const double r = ur(rng), a = ua(rng), b = ub(rng);
    if (std::abs(r) < 1e-3) continue;
    const double h = 1e-6;
    const auto g = ggd::pixel_nll_grad(r, a, b, 1e-9);
    auto f = [](double rr, double aa, double bb) { return ggd::pixel_nll(rr, aa, bb, 1e-9); };
    CHECK(close_rel(g.d_residual, (f(r + h, a, b) - f(r - h, a, b)) / (2 * h), 1e-5, 1e-7));
    CHECK(close_rel(g.d_alpha, (f(r, a + h, b) - f(r, a - h, b)) / (2 * h), 1e-5, 1e-7));
    CHECK(close_rel(g.d_beta, (f(r, a, b + h) - f(r, a, b - h)) / (2 * h), 1e-5, 1e-7));
  }
}

TEST_CASE("residual gradient stays finite at zero for heavy-tailed shapes") {
  const auto g = ggd::pixel_nll_grad(0.0, 1.0, 0.5);
  CHECK(std::isfinite(g.d_residual));
  CHECK(std::isfinite(ggd::pixel_nll_grad(1e-12, 1.0, 0.5).d_residual));
}

TEST_CASE("sigma closed forms") {
  CHECK(ggd::sigma(1.0, 2.0) == doctest::Approx(1.0 / std::sqrt(2.0)).epsilon(1e-15));
  CHECK(ggd::sigma(1.0, 1.0) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));
  CHECK(ggd::sigma(3.0, 1.7) == doctest::Approx(3.0 * ggd::sigma(1.0, 1.7)).epsilon(1e-14));
}

TEST_CASE("map-level nll averages pixels and its gradient is divided by K") {
  std::mt19937_64 rng(3);
  ggd::GgdPrediction p{testing::random_image(rng, 4, 5), testing::random_image(rng, 4, 5, 0.2, 2.0),
                       testing::random_image(rng, 4, 5, 0.5, 3.0)};
  const Image target = testing::random_image(rng, 4, 5);
  double acc = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    acc += ggd::pixel_nll(p.mean.pixels[i] - target.pixels[i], p.alpha.pixels[i], p.beta.pixels[i]);
  }
  CHECK(ggd::nll(p, target) == doctest::Approx(acc / 20.0).epsilon(1e-14));
  const auto g = ggd::nll_gradient(p, target);
  const auto pg = ggd::pixel_nll_grad(p.mean.pixels[7] - target.pixels[7], p.alpha.pixels[7], p.beta.pixels[7]);
  CHECK(g.d_mean.pixels[7] == doctest::Approx(pg.d_residual / 20.0));
  CHECK(g.d_alpha.pixels[7] == doctest::Approx(pg.d_alpha / 20.0));
  CHECK(g.d_beta.pixels[7] == doctest::Approx(pg.d_beta / 20.0));
}

TEST_CASE("validate rejects broken predictions") {
  ggd::GgdPrediction p{Image(2, 2), Image(2, 2, 1.0), Image(2, 2, 2.0)};
  CHECK_NOTHROW(ggd::validate(p));
  p.alpha.pixels[0] = 0.0;
  CHECK_THROWS_AS(ggd::validate(p), std::invalid_argument);
  p.alpha.pixels[0] = 1.0;
  p.beta.pixels[3] = 9.0;
  CHECK_THROWS_AS(ggd::validate(p), std::invalid_argument);
  p.beta = Image(2, 3, 1.0);
  CHECK_THROWS_AS(ggd::validate(p), std::invalid_argument);
  CHECK_THROWS_AS(ggd::nll(ggd::GgdPrediction{Image(2, 2), Image(2, 2, 1.0), Image(2, 2, 1.0)}, Image(3, 2)),
                  std::invalid_argument);
}

TEST_CASE("sampling is deterministic and matches sigma") {
  const Image alpha(200, 500, 0.8);
  for (double beta : {0.7, 1.0, 2.0, 4.0}) {
    const Image b(200, 500, beta);
    const Image s1 = ggd::sample(alpha, b, 99);
    CHECK(s1.pixels == ggd::sample(alpha, b, 99).pixels);
    double sum = 0.0, sq = 0.0;
    for (double v : s1.pixels) {
      sum += v;
      sq += v * v;
    }
    const double n = static_cast<double>(s1.size());
    const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
    CHECK(sd == doctest::Approx(ggd::sigma(0.8, beta)).epsilon(0.02));
  }
}

TEST_CASE("sample magnitudes follow the GGD law (Kolmogorov-Smirnov)") {
  const double a = 0.8, b = 1.5;
  const Image s = ggd::sample(Image(100, 200, a), Image(100, 200, b), 7);
  std::vector<double> mag;
  int negative = 0;
  for (double v : s.pixels) {
    mag.push_back(std::abs(v));
    negative += v < 0;
  }
  std::sort(mag.begin(), mag.end());
  const double n = static_cast<double>(mag.size());
  double d = 0.0;
  for (std::size_t i = 0; i < mag.size(); ++i) {
    const double cdf = boost::math::gamma_p(1.0 / b, std::pow(mag[i] / a, b));
    d = std::max({d, std::abs(cdf - i / n), std::abs(cdf - (i + 1) / n)});
  }
  CHECK(d < 1.63 / std::sqrt(n));
  CHECK(negative / n == doctest::Approx(0.5).epsilon(0.03));
}
