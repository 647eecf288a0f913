// SPDX-License-Identifier: Apache-2.0
// Command-line front end: generate-data, train, eval, sweep-supervision.

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "upgan/checkpoint.hpp"
#include "upgan/config.hpp"
#include "upgan/experiment.hpp"
#include "upgan/io.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

namespace {

enum Exit { kOk = 0, kUsage = 1, kConfig = 2, kData = 3, kTraining = 4 };

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
};

struct Context {
  upgan::ExperimentConfig cfg;
  std::string hash;
  fs::path out;
};

Context resolve(const Common& common) {
  Context ctx;
  if (!common.config.empty()) {
    ctx.cfg = upgan::load_experiment(common.config);
  } else {
    ctx.cfg = upgan::parse_experiment(nlohmann::json{{"schema_version", upgan::ExperimentConfig::kSchemaVersion}});
  }
  if (common.seed) {
    ctx.cfg.seed = *common.seed;
    ctx.cfg.train.seed = *common.seed;
  }
  if (!common.out.empty()) ctx.cfg.output_dir = common.out;
  ctx.hash = upgan::experiment_hash(ctx.cfg);
  ctx.out = ctx.cfg.output_dir;
  fs::create_directories(ctx.out);
  return ctx;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_resolved_config(const Context& ctx) {
  ojson doc = ojson::parse(upgan::to_json(ctx.cfg).dump());
  write_text(ctx.out / "config.resolved.json", doc.dump(2) + "\n");
}

upgan::Dataset load_or_build(const Context& ctx, const std::string& manifest) {
  if (!manifest.empty()) return upgan::load_dataset(manifest);
  return upgan::build_dataset(ctx.cfg);
}

std::string fmt(const std::vector<double>& v) {
  std::ostringstream s;
  s.precision(5);
  for (std::size_t i = 0; i < v.size(); ++i) s << (i ? " " : "") << v[i];
  return s.str();
}

ojson step_json(const upgan::StepRecord& r) {
  return {{"stage", upgan::stage_name(r.stage)},
          {"phase", r.phase},
          {"epoch", r.epoch},
          {"step", r.step},
          {"global_step", r.global_step},
          {"lr", r.lr},
          {"d_loss", r.d_loss},
          {"g_total", r.g_total},
          {"adversarial", r.adversarial},
          {"fidelity", r.fidelity},
          {"g_grad_norm", r.g_grad_norm},
          {"d_grad_norm", r.d_grad_norm}};
}

// Keeps header and records logged before `global_step` so a resumed run
// continues the log where its checkpoint left off.
void truncate_log(const fs::path& path, std::int64_t global_step) {
  std::ifstream in(path);
  if (!in) return;
  std::string line, kept;
  while (std::getline(in, line)) {
    const auto j = ojson::parse(line, nullptr, false);
    if (j.is_discarded()) continue;
    if (j.contains("global_step") && j.at("global_step").get<std::int64_t>() >= global_step) continue;
    kept += line + "\n";
  }
  in.close();
  write_text(path, kept);
}

int cmd_generate(const Common& common) {
  const Context ctx = resolve(common);
  const upgan::Dataset data = upgan::build_dataset(ctx.cfg);
  upgan::save_dataset(ctx.out, data);
  write_resolved_config(ctx);
  const auto& s = data.manifest.splits;
  std::cout << "wrote " << data.samples.size() << " pairs from " << data.manifest.subjects.size() << " subjects ("
            << s.train.size() << "/" << s.val.size() << "/" << s.test.size() << " train/val/test) to "
            << (ctx.out / "manifest.json").string() << "\n";
  return kOk;
}

int cmd_train(const Common& common, const std::string& manifest, const std::string& ablation,
              const std::string& resume) {
  Context ctx = resolve(common);
  if (!ablation.empty()) {
    if (ablation != "no-guidance") throw upgan::ConfigError("unknown ablation '" + ablation + "'");
    ctx.cfg.train.model.guidance = upgan::Guidance::none;
    ctx.cfg.train.model.learned_fusion = false;
    ctx.hash = upgan::experiment_hash(ctx.cfg);
  }
  write_resolved_config(ctx);

  fs::path manifest_path = manifest;
  if (manifest_path.empty()) {
    manifest_path = ctx.out / "data" / "manifest.json";
    if (!fs::exists(manifest_path)) upgan::save_dataset(ctx.out / "data", upgan::build_dataset(ctx.cfg));
  }
  const upgan::Dataset data = upgan::load_dataset(manifest_path);

  upgan::TrainState state;
  const fs::path log_path = ctx.out / "train_log.jsonl";
  const std::string train_hash = upgan::config_hash(upgan::train_config_to_json(ctx.cfg.train));
  if (!resume.empty()) {
    state = upgan::load_checkpoint(resume);
    const std::string stored = upgan::config_hash(upgan::train_config_to_json(state.config));
    if (stored != train_hash) {
      throw upgan::ConfigError("checkpoint " + resume + " was trained with a different model/train config (" + stored +
                               " vs " + train_hash + ")");
    }
    truncate_log(log_path, state.progress.global_step);
    std::cerr << "resuming at " << upgan::stage_name(state.progress.stage) << " phase " << state.progress.phase
              << " epoch " << state.progress.epoch << "\n";
  } else {
    state = upgan::TrainState::create(ctx.cfg.train);
    const ojson header = {{"schema", "upgan.train_log"},
                          {"schema_version", 1},
                          {"config_hash", ctx.hash},
                          {"seed", ctx.cfg.seed},
                          {"manifest", fs::absolute(manifest_path).string()}};
    write_text(log_path, header.dump() + "\n");
  }

  std::ofstream log(log_path, std::ios::app);
  const fs::path ckpt = ctx.out / "checkpoints";
  const ojson extra = {{"config_hash", ctx.hash},
                       {"seed", ctx.cfg.seed},
                       {"manifest", fs::absolute(manifest_path).string()},
                       {"label", ablation.empty() ? "upgan" : "upgan-" + ablation}};
  const auto t0 = std::chrono::steady_clock::now();
  upgan::TrainHooks hooks;
  hooks.on_step = [&](const upgan::TrainState&, const upgan::StepRecord& r) { log << step_json(r).dump() << "\n"; };
  hooks.on_epoch_end = [&](const upgan::TrainState& s, const upgan::EpochRecord& e) {
    log.flush();
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cerr << upgan::stage_name(e.stage) << (e.phase >= 0 ? " phase " + std::to_string(e.phase) : std::string())
              << " epoch " << e.epoch << ": val MAE " << fmt(e.val_mae) << (e.improved ? " *" : "") << " ["
              << static_cast<int>(secs) << "s]\n";
    upgan::save_checkpoint(ckpt / "latest", s, extra);
    if (e.improved) upgan::save_checkpoint(ckpt / "best", s, extra);
    const bool phase_done = e.stage == upgan::Stage::init && s.progress.initialized == e.phase + 1 &&
                            (s.progress.stage != upgan::Stage::init || s.progress.phase != e.phase);
    if (phase_done) upgan::save_checkpoint(ckpt / ("phase" + std::to_string(e.phase)), s, extra);
  };
  upgan::train(data, state, hooks);
  upgan::save_checkpoint(ckpt / "final", state, extra);
  std::cout << "training finished; best val MAE " << state.best_val_mae << "; checkpoints in " << ckpt.string()
            << "\n";
  return kOk;
}

int cmd_eval(const Common& common, const std::vector<std::string>& checkpoints, const std::string& manifest,
             const std::string& weights) {
  const Context ctx = resolve(common);
  if (checkpoints.empty()) throw upgan::ConfigError("eval needs at least one --checkpoint");
  std::vector<upgan::EvalReport> reports;
  std::vector<upgan::TrainState> states;
  std::optional<upgan::Dataset> data;
  for (const auto& path : checkpoints) {
    upgan::TrainState state = upgan::load_checkpoint(path);
    const ojson extra = ojson::parse(upgan::checkpoint_extra(path).dump());
    if (!common.config.empty()) {
      // A config given alongside a checkpoint must describe the same
      // architecture, or the weights would be read against the wrong layout.
      const auto model_json = [](const upgan::CascadeConfig& m) {
        upgan::TrainConfig t;
        t.model = m;
        t.model.guidance = upgan::Guidance::uncertainty;
        return upgan::train_config_to_json(t).at("model");
      };
      if (model_json(state.config.model) != model_json(ctx.cfg.train.model)) {
        throw upgan::ConfigError("checkpoint " + path + " does not match the architecture in " + common.config);
      }
    }
    if (weights == "best" && !upgan::restore_best(state)) {
      std::cerr << "note: " << path << " has no best-validation weights; using its current weights\n";
    }
    if (!data) {
      std::string m = manifest;
      if (m.empty() && extra.contains("manifest")) m = extra.at("manifest").get<std::string>();
      if (m.empty()) throw upgan::DataError("no dataset manifest given or recorded in " + path);
      data = upgan::load_dataset(m);
    }
    upgan::EvalReport report = upgan::evaluate(state.model, *data, ctx.cfg.eval.split);
    report.label = extra.value("label", fs::path(path).filename().string());
    if (std::count_if(reports.begin(), reports.end(), [&](const auto& r) { return r.label == report.label; })) {
      report.label += "#" + std::to_string(reports.size());
    }
    report.config_hash = extra.value("config_hash", std::string());
    report.seed = extra.value("seed", std::uint64_t{0});
    reports.push_back(std::move(report));
    states.push_back(std::move(state));
  }
  for (std::size_t i = 1; i < reports.size(); ++i) {
    try {
      for (auto& c : upgan::compare(reports[0], reports[i])) reports[0].comparisons.push_back(c);
    } catch (const upgan::metrics::InsufficientSamples& e) {
      std::cerr << "note: no significance test for " << reports[i].label << ": " << e.what() << "\n";
    }
  }

  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::string stem = i == 0 ? "report" : "report_" + std::to_string(i);
    ojson doc = upgan::report_to_json(reports[i]);
    doc["eval_config_hash"] = ctx.hash;
    write_text(ctx.out / (stem + ".json"), doc.dump(2) + "\n");
    write_text(ctx.out / (stem + ".csv"), upgan::report_csv(reports[i]));
  }

  if (ctx.cfg.eval.figures) {
    const fs::path fig = ctx.out / "figures";
    fs::create_directories(fig);
    const auto pool = data->select(ctx.cfg.eval.split);
    const int n = std::min<int>(ctx.cfg.eval.max_figures, static_cast<int>(pool.size()));
    for (int i = 0; i < n; ++i) {
      const upgan::CascadeState st = upgan::upgan_forward(pool[i]->input_a, states[0].model);
      const upgan::Image panel = upgan::phase_panel(st, *pool[i]);
      upgan::io::write_pgm(fig / ("panel_" + pool[i]->subject_id + "_" + std::to_string(pool[i]->slice_index) + ".pgm"),
                           panel, 0.0, 1.0);
    }
  }

  const auto& r = reports[0];
  std::cout << r.label << " on " << r.split << " (" << r.rows.size() << " images): SSIM " << r.ssim.mean << " ± "
            << r.ssim.std << ", PSNR " << r.psnr.mean << " ± " << r.psnr.std << ", MAE " << r.mae.mean << " ± "
            << r.mae.std << "\n  per-phase mean residual " << fmt(r.mean_residual) << "\n  per-phase mean uncertainty "
            << fmt(r.mean_uncertainty) << "\n  per-phase sigma/|residual| correlation " << fmt(r.mean_correlation)
            << "\n";
  for (const auto& c : r.comparisons) std::cout << "  " << c.label << " [" << c.metric << "] p = " << c.p_value << "\n";
  return kOk;
}

int cmd_sweep(const Common& common, const std::string& manifest, const std::vector<int>& cli_levels) {
  const Context ctx = resolve(common);
  write_resolved_config(ctx);
  const upgan::Dataset data = load_or_build(ctx, manifest);
  const std::vector<int> levels = cli_levels.empty() ? ctx.cfg.sweep.levels : cli_levels;
  const upgan::SweepResult sweep =
      upgan::run_sweep(ctx.cfg.train, data, levels, ctx.cfg.sweep.seeds, [](int level, std::uint64_t seed) {
        std::cerr << "sweep: level " << level << " seed " << seed << "\n";
      });
  ojson doc = upgan::sweep_to_json(sweep);
  doc["config_hash"] = ctx.hash;
  doc["seed"] = ctx.cfg.seed;
  write_text(ctx.out / "sweep.json", doc.dump(2) + "\n");

  std::ostringstream csv;
  csv << "level,ok,median_mae,median_ssim,median_psnr\n";
  std::vector<upgan::Curve> curves(3);
  curves[0].name = "mae";
  curves[1].name = "ssim";
  curves[2].name = "psnr";
  for (const auto& p : sweep.points) {
    csv << p.level << ',' << (p.ok ? 1 : 0) << ',' << p.median_mae << ',' << p.median_ssim << ',' << p.median_psnr
        << '\n';
    if (!p.ok) {
      std::cerr << "sweep: level " << p.level << " failed: " << p.error << "\n";
      continue;
    }
    curves[0].x.push_back(p.level);
    curves[0].y.push_back(p.median_mae);
    curves[1].x.push_back(p.level);
    curves[1].y.push_back(p.median_ssim);
    curves[2].x.push_back(p.level);
    curves[2].y.push_back(p.median_psnr);
  }
  write_text(ctx.out / "sweep.csv", csv.str());
  for (const auto& c : curves) upgan::io::write_pgm(ctx.out / ("curve_" + c.name + ".pgm"), upgan::plot_curves({c}), 0.0, 1.0);
  std::cout << "sweep over " << levels.size() << " levels; median MAE non-increasing: "
            << (sweep.mae_non_increasing ? "yes" : "no") << "\n";
  for (const auto& p : sweep.points) {
    if (!p.ok) return kTraining;
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  if (const char* backend = std::getenv("UPGAN_BACKEND"); backend && std::string(backend) != "cpu") {
    std::cerr << "error: UPGAN_BACKEND=" << backend << " is not available in this build (only 'cpu')\n";
    return kConfig;
  }

  CLI::App app{"Cascaded GAN image translation with per-pixel uncertainty feeding each refinement phase"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", common.config, "experiment config (JSON)")->check(CLI::ExistingFile);
    sub->add_option("--seed", common.seed, "override the config seed");
    sub->add_option("--out", common.out, "output directory (overrides output_dir)");
  };

  auto* gen = app.add_subcommand("generate-data", "build a paired dataset and write its manifest");
  add_common(gen);

  std::string manifest, ablation, resume, weights = "best";
  std::vector<std::string> checkpoints;
  std::vector<int> levels;

  auto* tr = app.add_subcommand("train", "progressive training with per-epoch checkpoints");
  add_common(tr);
  tr->add_option("--data", manifest, "dataset manifest (default: generate into <out>/data)");
  tr->add_option("--ablation", ablation, "'no-guidance' trains the cascade without uncertainty weighting");
  tr->add_option("--resume", resume, "checkpoint directory to continue from");

  auto* ev = app.add_subcommand("eval", "metrics, per-phase diagnostics and figures for checkpoints");
  add_common(ev);
  ev->add_option("--checkpoint", checkpoints, "checkpoint directory; repeat to compare models")->required();
  ev->add_option("--data", manifest, "dataset manifest (default: the one recorded in the checkpoint)");
  ev->add_option("--weights", weights, "'best' (validation-selected) or 'current'")
      ->check(CLI::IsMember({"best", "current"}));

  auto* sw = app.add_subcommand("sweep-supervision", "train and test at several supervision levels");
  add_common(sw);
  sw->add_option("--data", manifest, "dataset manifest (default: built from the config)");
  sw->add_option("--levels", levels, "training-subject counts (default: sweep.levels)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (*gen) return cmd_generate(common);
    if (*tr) return cmd_train(common, manifest, ablation, resume);
    if (*ev) return cmd_eval(common, checkpoints, manifest, weights);
    if (*sw) return cmd_sweep(common, manifest, levels);
  } catch (const upgan::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const upgan::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const upgan::io::FormatError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const upgan::CheckpointError& e) {
    std::cerr << "checkpoint error: " << e.what() << "\n";
    return kData;
  } catch (const upgan::TrainingError& e) {
    std::cerr << "training error: " << e.what() << "\n";
    return kTraining;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  }
  return kUsage;
}
