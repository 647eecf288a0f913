// SPDX-License-Identifier: Apache-2.0
#include "upgan/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace upgan {

Dataset build_dataset(const ExperimentConfig& cfg) {
  Dataset data;
  switch (cfg.task) {
    case Task::procedural:
      data = procedural_pairs(cfg.data.procedural, cfg.seed);
      break;
    case Task::undersample: {
      DegradationSpec spec;
      spec.kind = DegradationSpec::Kind::undersample;
      spec.keep_fraction = cfg.data.keep_fraction;
      spec.mask = cfg.data.mask;
      data = ingest_degraded(cfg.data.clean_dir, spec, cfg.data.ingest, cfg.seed);
      break;
    }
    case Task::motion: {
      DegradationSpec spec;
      spec.kind = DegradationSpec::Kind::motion;
      spec.motion = cfg.data.motion;
      data = ingest_degraded(cfg.data.clean_dir, spec, cfg.data.ingest, cfg.seed);
      break;
    }
    case Task::paired_dirs:
      data = ingest_paired(cfg.data.input_dir, cfg.data.target_dir, cfg.data.ingest, cfg.seed);
      break;
  }
  data.manifest.config_hash = experiment_hash(cfg);
  return data;
}

RunOutcome train_and_evaluate(const TrainConfig& cfg, const Dataset& data, Split split, const TrainHooks& hooks) {
  RunOutcome out{TrainState::create(cfg), {}};
  train(data, out.state, hooks);
  restore_best(out.state);
  out.report = evaluate(out.state.model, data, split);
  out.report.seed = cfg.seed;
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

SweepResult run_sweep(const TrainConfig& cfg, const Dataset& data, const std::vector<int>& levels,
                      const std::vector<std::uint64_t>& seeds,
                      const std::function<void(int, std::uint64_t)>& on_run) {
  SweepResult result;
  for (int level : levels) {
    SweepPoint point;
    point.level = level;
    try {
      for (std::uint64_t seed : seeds) {
        if (on_run) on_run(level, seed);
        const Dataset subset = subset_supervision(data, level, seed);
        TrainConfig run_cfg = cfg;
        run_cfg.seed = seed;
        const RunOutcome run = train_and_evaluate(run_cfg, subset, Split::test);
        point.seeds.push_back(seed);
        point.mae.push_back(run.report.mae.mean);
        point.ssim.push_back(run.report.ssim.mean);
        point.psnr.push_back(run.report.psnr.mean);
      }
      point.median_mae = median(point.mae);
      point.median_ssim = median(point.ssim);
      point.median_psnr = median(point.psnr);
    } catch (const std::exception& e) {
      point.ok = false;
      point.error = e.what();
    }
    result.points.push_back(std::move(point));
  }
  std::vector<const SweepPoint*> done;
  for (const auto& p : result.points) {
    if (p.ok) done.push_back(&p);
  }
  std::sort(done.begin(), done.end(), [](const SweepPoint* a, const SweepPoint* b) { return a->level < b->level; });
  for (std::size_t i = 1; i < done.size(); ++i) {
    if (done[i]->median_mae > done[i - 1]->median_mae) result.mae_non_increasing = false;
  }
  return result;
}

nlohmann::ordered_json sweep_to_json(const SweepResult& sweep) {
  using ojson = nlohmann::ordered_json;
  ojson points = ojson::array();
  for (const auto& p : sweep.points) {
    ojson j = {{"level", p.level}, {"ok", p.ok}};
    if (!p.ok) {
      j["error"] = p.error;
    } else {
      j["seeds"] = p.seeds;
      j["mae"] = p.mae;
      j["ssim"] = p.ssim;
      j["psnr"] = p.psnr;
      j["median_mae"] = p.median_mae;
      j["median_ssim"] = p.median_ssim;
      j["median_psnr"] = std::isfinite(p.median_psnr) ? ojson(p.median_psnr) : ojson("inf");
    }
    points.push_back(j);
  }
  return {{"schema", "upgan.sweep"},
          {"schema_version", 1},
          {"points", points},
          {"trend", {{"metric", "median_mae"}, {"non_increasing", sweep.mae_non_increasing}}}};
}

}  // namespace upgan
