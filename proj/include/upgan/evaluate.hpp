// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"
#include "upgan/cascade.hpp"
#include "upgan/dataset.hpp"
#include "upgan/metrics.hpp"

namespace upgan {

/// Metrics of one test image. Final-output metrics and per-phase
/// diagnostics are on the original intensity scale of domain B.
struct ImageRow {
  int index = 0;
  std::string subject;
  int slice = 0;
  double psnr = 0.0;
  double ssim = 0.0;
  double mae = 0.0;
  std::vector<double> phase_mae;          // mean |b̂_m − b|
  std::vector<double> phase_uncertainty;  // mean σ_m
  std::vector<double> phase_correlation;  // Spearman(σ_m, |b̂_m − b|); NaN if undefined
};

struct Comparison {
  std::string label;
  std::string metric;
  double p_value = 1.0;
  double statistic = 0.0;
  int n_used = 0;
  bool exact = true;
};

struct EvalReport {
  std::string label;
  std::string split;
  int phases = 0;
  double max_i = 1.0;
  std::vector<ImageRow> rows;
  metrics::Summary psnr, ssim, mae;
  std::vector<double> mean_residual;     // per phase
  std::vector<double> mean_uncertainty;  // per phase
  std::vector<double> mean_correlation;  // per phase, over images where defined
  std::vector<Comparison> comparisons;
  std::string config_hash;
  std::uint64_t seed = 0;
};

/// Runs the cascade over a split and fills rows and aggregates.
EvalReport evaluate(const Cascade& model, const Dataset& data, Split split);

/// Recomputes every aggregate from the rows.
void aggregate(EvalReport& report);

/// Largest absolute difference between stored aggregates and a fresh
/// recomputation from the rows.
double self_consistency_error(const EvalReport& report);

/// Paired Wilcoxon tests of `other` against `base` on SSIM, PSNR and MAE;
/// rows must come from the same split in the same order.
std::vector<Comparison> compare(const EvalReport& base, const EvalReport& other);

nlohmann::ordered_json report_to_json(const EvalReport& report);
EvalReport report_from_json(const nlohmann::ordered_json& doc);
/// One line per image; per-phase columns are suffixed with the phase index.
std::string report_csv(const EvalReport& report);

/// Per-phase panel for one image. Top row: input a and target b; then one
/// row per phase with prediction, |residual|, α, β and σ. Columns share a
/// display range across phases so phases can be compared by eye.
Image phase_panel(const CascadeState& state, const PairedSample& sample, int tile_gap = 2);

struct Curve {
  std::string name;
  std::vector<double> x;
  std::vector<double> y;
};
/// Line plot rasterized into a grayscale image (axes, points, polyline).
Image plot_curves(const std::vector<Curve>& curves, int width = 320, int height = 240);

}  // namespace upgan
