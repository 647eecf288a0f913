// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "upgan/config.hpp"
#include "upgan/evaluate.hpp"
#include "upgan/trainer.hpp"

namespace upgan {

/// Builds the paired dataset an experiment describes. The manifest records
/// the config hash.
Dataset build_dataset(const ExperimentConfig& cfg);

/// Trains from scratch, loads the best-validation weights and evaluates.
struct RunOutcome {
  TrainState state;
  EvalReport report;
};
RunOutcome train_and_evaluate(const TrainConfig& cfg, const Dataset& data, Split split,
                              const TrainHooks& hooks = {});

struct SweepPoint {
  int level = 0;
  bool ok = true;
  std::string error;
  std::vector<std::uint64_t> seeds;
  std::vector<double> mae, ssim, psnr;  // test-set means, one per seed
  double median_mae = 0.0, median_ssim = 0.0, median_psnr = 0.0;
};

struct SweepResult {
  std::vector<SweepPoint> points;
  /// Median MAE never increases from one completed level to the next.
  bool mae_non_increasing = true;
};

double median(std::vector<double> v);

/// One train + test evaluation per (level, seed). A failing level is
/// recorded and the sweep moves on.
SweepResult run_sweep(const TrainConfig& cfg, const Dataset& data, const std::vector<int>& levels,
                      const std::vector<std::uint64_t>& seeds,
                      const std::function<void(int level, std::uint64_t seed)>& on_run = {});

nlohmann::ordered_json sweep_to_json(const SweepResult& sweep);

}  // namespace upgan
