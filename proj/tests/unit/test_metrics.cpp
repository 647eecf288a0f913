// SPDX-License-Identifier: Apache-2.0
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "doctest.h"
#include "support.hpp"
#include "upgan/evaluate.hpp"
#include "upgan/io.hpp"
#include "upgan/metrics.hpp"

using namespace upgan;
using namespace upgan::metrics;

namespace {

std::pair<Image, Image> load_pair(const std::string& name) {
  const auto t = io::read_tensor(testing::data_path("metrics/" + name));
  REQUIRE(t.dims.size() == 3);
  REQUIRE(t.dims[0] == 2);
  const int h = static_cast<int>(t.dims[1]), w = static_cast<int>(t.dims[2]);
  Image x(h, w), y(h, w);
  const std::size_t n = static_cast<std::size_t>(h) * w;
  for (std::size_t i = 0; i < n; ++i) {
    x.pixels[i] = t.data[i];
    y.pixels[i] = t.data[n + i];
  }
  return {x, y};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / a.size();
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / b.size();
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

TEST_CASE("metrics agree with the reference implementation on frozen pairs") {
  const auto& cases = testing::fixtures()["metrics"];
  REQUIRE(cases.size() == 50);
  for (const auto& c : cases) {
    const auto [x, y] = load_pair(c["file"].get<std::string>());
    const double range = c["data_range"].get<double>();
    SsimOptions opts;
    opts.data_range = range;
    CHECK(std::abs(psnr(x, y, range) - c["psnr"].get<double>()) <= 1e-6);
    CHECK(std::abs(ssim(x, y, opts) - c["ssim"].get<double>()) <= 1e-6);
    CHECK(std::abs(mae(x, y) - c["mae"].get<double>()) <= 1e-6);
  }
}

TEST_CASE("PSNR examples") {
  const Image x(4, 4, 0.5);
  CHECK(std::isinf(psnr(x, x, 1.0)));
  CHECK(psnr(x, Image(4, 4, 0.6), 1.0) == doctest::Approx(20.0).epsilon(1e-12));
  CHECK(psnr(Image(4, 4, 0.0), Image(4, 4, 1.0), 1.0) == doctest::Approx(0.0));
  // More error, lower PSNR.
  double last = std::numeric_limits<double>::infinity();
  for (double e : {0.01, 0.05, 0.1, 0.3}) {
    const double p = psnr(x, Image(4, 4, 0.5 + e), 1.0);
    CHECK(p < last);
    last = p;
  }
  CHECK_THROWS_AS(psnr(x, Image(3, 4), 1.0), std::invalid_argument);
}

TEST_CASE("SSIM examples and symmetry") {
  std::mt19937_64 rng(1);
  for (int i = 0; i < 10; ++i) {
    const Image x = testing::random_image(rng, 20, 24, 0.0, 1.0);
    const Image y = testing::random_image(rng, 20, 24, 0.0, 1.0);
    CHECK(ssim(x, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::abs(ssim(x, y) - ssim(y, x)) <= 1e-12);
    CHECK(ssim(x, y) < 0.5);
  }
  // A binary pattern against its inverse is strongly anti-correlated.
  Image b(32, 32), inv(32, 32);
  for (int r = 0; r < 32; ++r) {
    for (int c = 0; c < 32; ++c) {
      b(r, c) = ((r + c) % 2 == 0) ? 1.0 : 0.0;
      inv(r, c) = 1.0 - b(r, c);
    }
  }
  CHECK(ssim(b, inv) < -0.9);
  CHECK_THROWS_AS(ssim(Image(8, 8), Image(8, 8)), std::invalid_argument);  // smaller than the window
}

TEST_CASE("MAE examples") {
  CHECK(mae(Image(2, 2, 1.0), Image(2, 2, 1.0)) == 0.0);
  CHECK(mae(Image(2, 2, 1.0), Image(2, 2, 0.25)) == 0.75);
  Image a(1, 4, 0.0), b(1, 4, 0.0);
  b.pixels = {1.0, -1.0, 2.0, 0.0};
  CHECK(mae(a, b) == 1.0);
}

TEST_CASE("Spearman correlation") {
  const std::vector<double> a{1, 2, 3, 4, 5, 6};
  std::vector<double> sq;
  for (double v : a) sq.push_back(v * v * v);
  CHECK(*spearman(a, sq) == doctest::Approx(1.0));
  std::vector<double> rev(a.rbegin(), a.rend());
  CHECK(*spearman(a, rev) == doctest::Approx(-1.0));
  CHECK_FALSE(spearman(a, std::vector<double>(6, 2.0)).has_value());
  CHECK(rank_average({3.0, 1.0, 3.0, 2.0}) == std::vector<double>{3.5, 1.0, 3.5, 2.0});

  // Permutation oracle: unrelated inputs give |ρ| of order 1/√K, and the
  // value equals the Pearson correlation of the average ranks.
  std::mt19937_64 rng(2);
  std::normal_distribution<double> n01;
  for (int k : {50, 200, 1000}) {
    std::vector<double> x(k), y(k);
    for (int i = 0; i < k; ++i) {
      x[i] = n01(rng);
      y[i] = std::round(4 * n01(rng)) / 4;  // with ties
    }
    const double rho = *spearman(x, y);
    CHECK(std::abs(rho) < 3.0 / std::sqrt(static_cast<double>(k)));
    CHECK(rho == doctest::Approx(pearson(rank_average(x), rank_average(y))).epsilon(1e-12));
  }

  // Uncertainty correlation uses absolute residuals.
  Image sigma(1, 5), residual(1, 5);
  sigma.pixels = {0.1, 0.2, 0.3, 0.4, 0.5};
  residual.pixels = {0.01, -0.02, 0.03, -0.04, 0.05};
  CHECK(*uncertainty_error_correlation(sigma, residual) == doctest::Approx(1.0));
}

TEST_CASE("Wilcoxon signed-rank agrees with the reference on frozen cases") {
  for (const auto& c : testing::fixtures()["wilcoxon"]) {
    const auto r = wilcoxon_signed_rank(c["a"].get<std::vector<double>>(), c["b"].get<std::vector<double>>());
    CHECK(r.exact);
    CHECK(r.statistic == doctest::Approx(c["statistic"].get<double>()));
    CHECK(std::abs(r.p_value - c["p_value"].get<double>()) <= 1e-9);
  }
}

TEST_CASE("Wilcoxon examples") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> a(20), b(20);
  for (int i = 0; i < 20; ++i) {
    a[i] = u(rng);
    b[i] = a[i] + 0.1 + 0.01 * u(rng);
  }
  CHECK(wilcoxon_signed_rank(a, a).p_value == 1.0);
  CHECK(wilcoxon_signed_rank(a, b).p_value < 0.05);
  CHECK(paired_significance(a, b) == paired_significance(b, a));
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3}, {2, 3, 4}), InsufficientSamples);
  CHECK_THROWS_AS(wilcoxon_signed_rank({1, 2, 3, 4, 5}, {1, 2}), std::invalid_argument);

  // Normal approximation beyond the exact limit stays close to the exact tail.
  std::vector<double> c(80), d(80);
  for (int i = 0; i < 80; ++i) {
    c[i] = u(rng);
    d[i] = c[i] + (u(rng) - 0.3);
  }
  const auto big = wilcoxon_signed_rank(c, d);
  CHECK_FALSE(big.exact);
  CHECK(big.p_value < 0.01);
}

TEST_CASE("summary uses the population deviation") {
  const auto s = summarize({1.0, 2.0, 3.0, 4.0});
  CHECK(s.mean == 2.5);
  CHECK(s.std == doctest::Approx(std::sqrt(1.25)));
}

TEST_CASE("evaluation reports aggregate, round trip and compare") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EvalReport base, other;
  for (EvalReport* r : {&base, &other}) {
    r->label = r == &base ? "base" : "other";
    r->split = "test";
    r->phases = 2;
    r->max_i = 1.0;
  }
  for (int i = 0; i < 12; ++i) {
    ImageRow row;
    row.index = i;
    row.subject = "s00" + std::to_string(i % 3);
    row.slice = i / 3;
    row.psnr = 20 + 5 * u(rng);
    row.ssim = 0.5 + 0.3 * u(rng);
    row.mae = 0.05 * u(rng);
    row.phase_mae = {0.06, row.mae};
    row.phase_uncertainty = {0.1 * u(rng), 0.1 * u(rng)};
    row.phase_correlation = {u(rng), i == 4 ? std::nan("") : u(rng)};
    base.rows.push_back(row);
    row.ssim += 0.01 + 0.001 * i;
    row.mae -= 0.001;
    other.rows.push_back(row);
  }
  aggregate(base);
  aggregate(other);
  CHECK(self_consistency_error(base) == 0.0);
  CHECK(base.mean_residual.size() == 2);
  CHECK(base.mean_correlation.size() == 2);
  CHECK(std::isfinite(base.mean_correlation[1]));

  base.comparisons = compare(base, other);
  REQUIRE(base.comparisons.size() == 3);
  for (const auto& c : base.comparisons) {
    if (c.metric == "ssim") CHECK(c.p_value < 0.01);
  }

  const auto doc = report_to_json(base);
  const EvalReport back = report_from_json(doc);
  CHECK(report_to_json(back).dump() == doc.dump());
  CHECK(back.rows.size() == 12);
  CHECK(std::isnan(back.rows[4].phase_correlation[1]));
  CHECK(self_consistency_error(back) <= 1e-12);

  // Tampering with an aggregate is detected.
  EvalReport bad = base;
  bad.mae.mean += 1e-3;
  CHECK(self_consistency_error(bad) >= 1e-3 * 0.999);

  const std::string csv = report_csv(base);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 13);
  CHECK(csv.find("mae_phase1") != std::string::npos);
}
