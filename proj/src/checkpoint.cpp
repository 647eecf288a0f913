// SPDX-License-Identifier: Apache-2.0
#include "upgan/checkpoint.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include "upgan/config.hpp"
#include "upgan/io.hpp"

namespace upgan {

namespace {

using json = nlohmann::json;

constexpr int kCheckpointVersion = 1;

io::TensorFile flatten(const std::vector<nn::Tensor>& tensors) {
  io::TensorFile f;
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.numel();
  f.dims = {static_cast<std::uint32_t>(n)};
  f.data.reserve(n);
  for (const auto& t : tensors) f.data.insert(f.data.end(), t.data.begin(), t.data.end());
  return f;
}

std::vector<nn::Tensor> values(const nn::ParameterList& params) {
  std::vector<nn::Tensor> out;
  for (const auto& p : params.items()) out.push_back(p.var->value);
  return out;
}

// Copies a flat container back into tensors whose shapes are already set.
void unflatten(const std::filesystem::path& file, std::vector<nn::Tensor*> targets) {
  const io::TensorFile f = io::read_tensor(file);
  std::size_t n = 0;
  for (const auto* t : targets) n += t->numel();
  if (f.dims.size() != 1 || f.data.size() != n) {
    throw CheckpointError(file.string() + ": holds " + std::to_string(f.data.size()) + " values, layout expects " +
                          std::to_string(n));
  }
  std::size_t pos = 0;
  for (auto* t : targets) {
    std::copy_n(f.data.begin() + static_cast<std::ptrdiff_t>(pos), t->numel(), t->data.begin());
    pos += t->numel();
  }
}

std::vector<nn::Tensor*> value_ptrs(nn::ParameterList& params) {
  std::vector<nn::Tensor*> out;
  for (auto& p : params.items()) out.push_back(&p.var->value);
  return out;
}

std::vector<nn::Tensor*> ptrs(std::vector<nn::Tensor>& v) {
  std::vector<nn::Tensor*> out;
  for (auto& t : v) out.push_back(&t);
  return out;
}

json layout(const nn::ParameterList& params) {
  json out = json::array();
  for (const auto& p : params.items()) {
    const auto& s = p.var->value.shape;
    out.push_back({{"name", p.name}, {"shape", {s.n, s.c, s.h, s.w}}});
  }
  return out;
}

Stage stage_from(const std::string& s) {
  if (s == "init") return Stage::init;
  if (s == "finetune") return Stage::finetune;
  if (s == "done") return Stage::done;
  throw CheckpointError("unknown stage '" + s + "'");
}

json epoch_json(const EpochRecord& e) {
  return {{"stage", stage_name(e.stage)}, {"phase", e.phase},     {"epoch", e.epoch},
          {"global_step", e.global_step}, {"val_mae", e.val_mae}, {"improved", e.improved}};
}

json read_state(const std::filesystem::path& dir) {
  std::ifstream in(dir / "state.json");
  if (!in) throw CheckpointError("no state.json in " + dir.string());
  try {
    json doc = json::parse(in);
    if (doc.at("schema").get<std::string>() != "upgan.checkpoint") throw CheckpointError("not a checkpoint");
    if (doc.at("schema_version").get<int>() != kCheckpointVersion) {
      throw CheckpointError("unsupported checkpoint schema_version");
    }
    return doc;
  } catch (const json::exception& e) {
    throw CheckpointError(dir.string() + "/state.json: " + e.what());
  }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& dir, const TrainState& state, const json& extra) {
  namespace fs = std::filesystem;
  const fs::path tmp = dir.string() + ".partial";
  fs::remove_all(tmp);
  fs::create_directories(tmp);

  json layouts = json::object();
  json adam = json::array();
  for (int m = 0; m < state.model.phases(); ++m) {
    const auto g = "g" + std::to_string(m);
    const auto d = "d" + std::to_string(m);
    const auto& gp = state.model.generator(m).params();
    const auto& dp = state.model.discriminator(m).params();
    io::write_tensor(tmp / (g + ".upg"), flatten(values(gp)));
    io::write_tensor(tmp / (d + ".upg"), flatten(values(dp)));
    io::write_tensor(tmp / (g + ".adam_m.upg"), flatten(state.g_opt[m].first_moments()));
    io::write_tensor(tmp / (g + ".adam_v.upg"), flatten(state.g_opt[m].second_moments()));
    io::write_tensor(tmp / (d + ".adam_m.upg"), flatten(state.d_opt[m].first_moments()));
    io::write_tensor(tmp / (d + ".adam_v.upg"), flatten(state.d_opt[m].second_moments()));
    layouts[g] = layout(gp);
    layouts[d] = layout(dp);
    adam.push_back({{"g_steps", state.g_opt[m].steps()}, {"d_steps", state.d_opt[m].steps()}});
  }
  if (!state.best_weights.empty()) io::write_tensor(tmp / "best.upg", flatten(state.best_weights));

  std::ostringstream rng;
  rng << state.rng;
  json epochs = json::array();
  for (const auto& e : state.epochs) epochs.push_back(epoch_json(e));
  const json config = train_config_to_json(state.config);
  const auto& p = state.progress;
  json doc = {{"schema", "upgan.checkpoint"},
              {"schema_version", kCheckpointVersion},
              {"config_hash", config_hash(config)},
              {"seed", state.config.seed},
              {"config", config},
              {"progress",
               {{"stage", stage_name(p.stage)},
                {"phase", p.phase},
                {"epoch", p.epoch},
                {"step", p.step},
                {"global_step", p.global_step},
                {"initialized", p.initialized}}},
              {"rng", rng.str()},
              {"best_val_mae", std::isfinite(state.best_val_mae) ? json(state.best_val_mae) : json(nullptr)},
              {"has_best", !state.best_weights.empty()},
              {"adam", adam},
              {"layout", layouts},
              {"epochs", epochs},
              {"extra", extra}};
  {
    std::ofstream out(tmp / "state.json", std::ios::trunc);
    if (!out) throw CheckpointError("cannot write " + (tmp / "state.json").string());
    out << doc.dump(2) << '\n';
  }
  fs::remove_all(dir);
  fs::rename(tmp, dir);
}

TrainState load_checkpoint(const std::filesystem::path& dir) {
  const json doc = read_state(dir);
  try {
    TrainState state = TrainState::create(train_config_from_json(doc.at("config")));
    const json& layouts = doc.at("layout");
    for (int m = 0; m < state.model.phases(); ++m) {
      const auto g = "g" + std::to_string(m);
      const auto d = "d" + std::to_string(m);
      auto& gp = state.model.generator(m).params();
      auto& dp = state.model.discriminator(m).params();
      if (layouts.at(g) != layout(gp) || layouts.at(d) != layout(dp)) {
        throw CheckpointError("parameter layout of phase " + std::to_string(m) + " does not match its config");
      }
      unflatten(dir / (g + ".upg"), value_ptrs(gp));
      unflatten(dir / (d + ".upg"), value_ptrs(dp));
      unflatten(dir / (g + ".adam_m.upg"), ptrs(state.g_opt[m].first_moments()));
      unflatten(dir / (g + ".adam_v.upg"), ptrs(state.g_opt[m].second_moments()));
      unflatten(dir / (d + ".adam_m.upg"), ptrs(state.d_opt[m].first_moments()));
      unflatten(dir / (d + ".adam_v.upg"), ptrs(state.d_opt[m].second_moments()));
      state.g_opt[m].set_steps(doc.at("adam").at(m).at("g_steps").get<std::int64_t>());
      state.d_opt[m].set_steps(doc.at("adam").at(m).at("d_steps").get<std::int64_t>());
    }
    const json& p = doc.at("progress");
    state.progress.stage = stage_from(p.at("stage").get<std::string>());
    state.progress.phase = p.at("phase").get<int>();
    state.progress.epoch = p.at("epoch").get<int>();
    state.progress.step = p.at("step").get<std::int64_t>();
    state.progress.global_step = p.at("global_step").get<std::int64_t>();
    state.progress.initialized = p.at("initialized").get<int>();
    std::istringstream rng(doc.at("rng").get<std::string>());
    rng >> state.rng;
    if (!rng) throw CheckpointError("corrupt RNG state");
    if (!doc.at("best_val_mae").is_null()) state.best_val_mae = doc.at("best_val_mae").get<double>();
    if (doc.at("has_best").get<bool>()) {
      state.best_weights = generator_weights(state.model);
      unflatten(dir / "best.upg", ptrs(state.best_weights));
    }
    for (const auto& e : doc.at("epochs")) {
      EpochRecord r;
      r.stage = stage_from(e.at("stage").get<std::string>());
      r.phase = e.at("phase").get<int>();
      r.epoch = e.at("epoch").get<int>();
      r.global_step = e.at("global_step").get<std::int64_t>();
      r.val_mae = e.at("val_mae").get<std::vector<double>>();
      r.improved = e.at("improved").get<bool>();
      state.epochs.push_back(std::move(r));
    }
    return state;
  } catch (const json::exception& e) {
    throw CheckpointError(dir.string() + ": " + e.what());
  } catch (const io::FormatError& e) {
    throw CheckpointError(e.what());
  } catch (const ConfigError& e) {
    throw CheckpointError(dir.string() + ": bad config: " + e.what());
  }
}

json checkpoint_extra(const std::filesystem::path& dir) { return read_state(dir).at("extra"); }

}  // namespace upgan
