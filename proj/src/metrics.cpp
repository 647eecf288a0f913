// SPDX-License-Identifier: Apache-2.0
#include "upgan/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace upgan::metrics {

double psnr(const Image& x, const Image& y, double max_i) {
  require_same_shape(x, y, "psnr");
  if (x.empty()) throw std::invalid_argument("psnr: empty image");
  if (!(max_i > 0.0)) throw std::invalid_argument("psnr: max_i must be positive");
  double se = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x.pixels[i] - y.pixels[i];
    se += d * d;
  }
  const double mse = se / static_cast<double>(x.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 20.0 * std::log10(max_i / std::sqrt(mse));
}

double mae(const Image& x, const Image& y) {
  require_same_shape(x, y, "mae");
  if (x.empty()) throw std::invalid_argument("mae: empty image");
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += std::abs(x.pixels[i] - y.pixels[i]);
  return acc / static_cast<double>(x.size());
}

namespace {

// Valid-region separable filter: output has (h − k + 1) × (w − k + 1) entries.
std::vector<double> filter_valid(const Image& img, const std::vector<double>& kernel) {
  const int k = static_cast<int>(kernel.size());
  const int oh = img.height - k + 1;
  const int ow = img.width - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(img.height) * ow);
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += kernel[i] * img(y, x + i);
      rows[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(oh) * ow);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (int i = 0; i < k; ++i) acc += kernel[i] * rows[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = acc;
    }
  }
  return out;
}

}  // namespace

double ssim(const Image& x, const Image& y, const SsimOptions& opts) {
  require_same_shape(x, y, "ssim");
  if (opts.window < 1 || opts.window % 2 == 0) throw std::invalid_argument("ssim: window must be odd");
  if (x.height < opts.window || x.width < opts.window) {
    throw std::invalid_argument("ssim: image smaller than the " + std::to_string(opts.window) + "-pixel window");
  }
  if (!(opts.data_range > 0.0)) throw std::invalid_argument("ssim: data_range must be positive");

  const int r = opts.window / 2;
  std::vector<double> kernel(opts.window);
  for (int i = -r; i <= r; ++i) kernel[i + r] = std::exp(-0.5 * i * i / (opts.sigma * opts.sigma));
  const double total = std::accumulate(kernel.begin(), kernel.end(), 0.0);
  for (double& v : kernel) v /= total;

  Image xx(x.height, x.width), yy(x.height, x.width), xy(x.height, x.width);
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx.pixels[i] = x.pixels[i] * x.pixels[i];
    yy.pixels[i] = y.pixels[i] * y.pixels[i];
    xy.pixels[i] = x.pixels[i] * y.pixels[i];
  }
  const auto ux = filter_valid(x, kernel);
  const auto uy = filter_valid(y, kernel);
  const auto uxx = filter_valid(xx, kernel);
  const auto uyy = filter_valid(yy, kernel);
  const auto uxy = filter_valid(xy, kernel);

  const double c1 = std::pow(opts.k1 * opts.data_range, 2);
  const double c2 = std::pow(opts.k2 * opts.data_range, 2);
  double acc = 0.0;
  for (std::size_t i = 0; i < ux.size(); ++i) {
    const double vx = uxx[i] - ux[i] * ux[i];
    const double vy = uyy[i] - uy[i] * uy[i];
    const double vxy = uxy[i] - ux[i] * uy[i];
    const double a1 = 2.0 * ux[i] * uy[i] + c1;
    const double a2 = 2.0 * vxy + c2;
    const double b1 = ux[i] * ux[i] + uy[i] * uy[i] + c1;
    const double b2 = vx + vy + c2;
    acc += (a1 * a2) / (b1 * b2);
  }
  return acc / static_cast<double>(ux.size());
}

std::vector<double> rank_average(const std::vector<double>& v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("spearman: length mismatch");
  if (a.size() < 2) return std::nullopt;
  const auto ra = rank_average(a);
  const auto rb = rank_average(b);
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(ra.begin(), ra.end(), 0.0) / n;
  const double mb = std::accumulate(rb.begin(), rb.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < ra.size(); ++i) {
    sab += (ra[i] - ma) * (rb[i] - mb);
    saa += (ra[i] - ma) * (ra[i] - ma);
    sbb += (rb[i] - mb) * (rb[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) return std::nullopt;
  return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

std::optional<double> uncertainty_error_correlation(const Image& sigma, const Image& residual) {
  require_same_shape(sigma, residual, "uncertainty_error_correlation");
  std::vector<double> abs_res(residual.size());
  for (std::size_t i = 0; i < residual.size(); ++i) abs_res[i] = std::abs(residual.pixels[i]);
  return spearman(sigma.pixels, abs_res);
}

WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw std::invalid_argument("wilcoxon: length mismatch");
  if (a.size() < 5) {
    throw InsufficientSamples("wilcoxon: need at least 5 paired scores, got " + std::to_string(a.size()));
  }
  std::vector<double> diff;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    if (d != 0.0) diff.push_back(d);
  }
  WilcoxonResult res;
  res.n_used = static_cast<int>(diff.size());
  if (diff.empty()) return res;

  std::vector<double> mag(diff.size());
  for (std::size_t i = 0; i < diff.size(); ++i) mag[i] = std::abs(diff[i]);
  const auto ranks = rank_average(mag);
  double w_plus = 0.0, w_minus = 0.0;
  for (std::size_t i = 0; i < diff.size(); ++i) (diff[i] > 0 ? w_plus : w_minus) += ranks[i];
  res.statistic = std::min(w_plus, w_minus);
  const int n = res.n_used;

  if (n <= kWilcoxonExactLimit) {
    // Average ranks are multiples of 1/2, so doubled ranks are integers and
    // the null distribution of 2·W+ is a subset-sum count over them.
    std::vector<int> twice(n);
    int total = 0;
    for (int i = 0; i < n; ++i) {
      twice[i] = static_cast<int>(std::lround(2.0 * ranks[i]));
      total += twice[i];
    }
    std::vector<double> count(total + 1, 0.0);
    count[0] = 1.0;
    int reach = 0;
    for (int r : twice) {
      for (int s = reach; s >= 0; --s) {
        if (count[s] != 0.0) count[s + r] += count[s];
      }
      reach += r;
    }
    const int t = static_cast<int>(std::lround(2.0 * res.statistic));
    double tail = 0.0;
    for (int s = 0; s <= t; ++s) tail += count[s];
    res.p_value = std::min(1.0, 2.0 * tail / std::ldexp(1.0, n));
    res.exact = true;
    return res;
  }

  const double nd = n;
  const double mean = nd * (nd + 1.0) / 4.0;
  double var = nd * (nd + 1.0) * (2.0 * nd + 1.0) / 24.0;
  auto sorted = mag;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    var -= (t * t * t - t) / 48.0;
    i = j;
  }
  const double z = (res.statistic - mean) / std::sqrt(var);
  res.p_value = std::min(1.0, std::erfc(std::abs(z) / std::sqrt(2.0)));
  res.exact = false;
  return res;
}

Summary summarize(const std::vector<double>& v) {
  Summary s;
  if (v.empty()) return s;
  const double n = static_cast<double>(v.size());
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / n;
  double acc = 0.0;
  for (double x : v) acc += (x - s.mean) * (x - s.mean);
  s.std = std::sqrt(acc / n);
  return s;
}

}  // namespace upgan::metrics
