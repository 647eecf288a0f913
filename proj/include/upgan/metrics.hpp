// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <optional>
#include <stdexcept>
#include <vector>

#include "upgan/image.hpp"

namespace upgan::metrics {

/// 20·log10(max_i/√MSE). Identical images give +infinity.
double psnr(const Image& x, const Image& y, double max_i);

/// Mean absolute error in the units of the inputs.
double mae(const Image& x, const Image& y);

struct SsimOptions {
  double data_range = 1.0;
  double sigma = 1.5;
  int window = 11;
  double k1 = 0.01;
  double k2 = 0.03;
};

/// Gaussian-window SSIM averaged over positions where the whole window fits
/// inside the image (no padding artifacts). Population moments.
double ssim(const Image& x, const Image& y, const SsimOptions& opts = {});

/// Average ranks (ties share the mean of their positions), 1-based.
std::vector<double> rank_average(const std::vector<double>& v);

/// Spearman rank correlation; nullopt when either input is constant.
std::optional<double> spearman(const std::vector<double>& a, const std::vector<double>& b);

/// Pixelwise Spearman correlation between an uncertainty map and a residual
/// map (absolute values of the residual are taken).
std::optional<double> uncertainty_error_correlation(const Image& sigma, const Image& residual);

class InsufficientSamples : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct WilcoxonResult {
  double statistic = 0.0;  // min(W+, W−)
  double p_value = 1.0;
  int n_used = 0;          // pairs left after dropping zero differences
  bool exact = true;
};

/// Two-sided Wilcoxon signed-rank test on paired scores. Zero differences
/// are dropped; ties get average ranks. The null distribution is enumerated
/// exactly for up to kWilcoxonExactLimit nonzero pairs, normal approximation
/// (tie-corrected variance, no continuity correction) beyond. Requires at
/// least five pairs.
inline constexpr int kWilcoxonExactLimit = 50;
WilcoxonResult wilcoxon_signed_rank(const std::vector<double>& a, const std::vector<double>& b);

inline double paired_significance(const std::vector<double>& a, const std::vector<double>& b) {
  return wilcoxon_signed_rank(a, b).p_value;
}

struct Summary {
  double mean = 0.0;
  double std = 0.0;  // population (ddof = 0)
};
Summary summarize(const std::vector<double>& v);

}  // namespace upgan::metrics
