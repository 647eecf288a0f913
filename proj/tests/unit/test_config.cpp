// SPDX-License-Identifier: Apache-2.0
#include <fstream>

#include "doctest.h"
#include "support.hpp"
#include "upgan/config.hpp"

using namespace upgan;
using nlohmann::json;

namespace {

json minimal() { return json{{"schema_version", 1}, {"task", "procedural"}}; }

std::string error_of(const json& doc) {
  try {
    parse_experiment(doc);
  } catch (const ConfigError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("defaults fill in missing keys") {
  const ExperimentConfig cfg = parse_experiment(minimal());
  CHECK(cfg.task == Task::procedural);
  CHECK(cfg.train.model.phases == TrainConfig{}.model.phases);
  CHECK(cfg.train.grad_clip == 10.0);
  CHECK(cfg.train.model.feature_gain == 0.0);
  CHECK(cfg.sweep.levels == std::vector<int>{3, 6, 10});
  CHECK(cfg.eval.split == Split::test);
}

TEST_CASE("unknown keys and bad values name their path") {
  json doc = minimal();
  doc["train"] = {{"epochs_init", 2}, {"learning_rate", 0.1}};
  CHECK(error_of(doc).find("train.learning_rate") != std::string::npos);

  doc = minimal();
  doc["model"] = {{"generator", {{"widht", 8}}}};
  CHECK(error_of(doc).find("model.generator.widht") != std::string::npos);

  doc = minimal();
  doc["extra"] = 1;
  CHECK(error_of(doc).find("extra") != std::string::npos);

  doc = minimal();
  doc["train"] = {{"batch_size", "eight"}};
  CHECK(error_of(doc).find("train.batch_size") != std::string::npos);

  doc = minimal();
  doc["task"] = "denoise";
  CHECK(error_of(doc).find("denoise") != std::string::npos);

  doc = minimal();
  doc["train"] = {{"grad_clip", -1.0}};
  CHECK_FALSE(error_of(doc).empty());

  doc = minimal();
  doc["train"] = {{"lr_init", 0.001}, {"lr_finetune", 0.01}};
  CHECK(error_of(doc).find("lr_finetune") != std::string::npos);

  doc = minimal();
  doc["task"] = "undersample";
  CHECK(error_of(doc).find("clean_dir") != std::string::npos);
}

TEST_CASE("schema version is checked") {
  json doc = minimal();
  doc.erase("schema_version");
  CHECK(error_of(doc).find("schema_version") != std::string::npos);
  doc["schema_version"] = 2;
  CHECK(error_of(doc).find("schema_version") != std::string::npos);
}

TEST_CASE("round trip through the full document") {
  testing::ScratchDir dir("config");
  const auto desk = load_experiment(std::filesystem::path(UPGAN_TEST_DATA) / ".." / ".." / "configs" / "desk.json");
  CHECK(desk.train.model.phases == 2);
  CHECK(desk.train.epochs_init == 8);
  CHECK(desk.data.procedural.subjects == 16);
  // Relative paths resolve against the config's directory.
  CHECK(desk.output_dir.is_absolute() == std::filesystem::path(UPGAN_TEST_DATA).is_absolute());

  json full = to_json(desk);
  full["train"]["grad_clip"] = 2.5;
  full["model"]["feature_gain"] = 16.0;
  const ExperimentConfig back = parse_experiment(full);
  CHECK(back.train.grad_clip == 2.5);
  CHECK(back.train.model.feature_gain == 16.0);
  CHECK(to_json(back) == full);
  CHECK(config_hash(to_json(back)) == config_hash(full));

  // The training subset alone round trips as well.
  const TrainConfig t = train_config_from_json(train_config_to_json(back.train));
  CHECK(train_config_to_json(t) == train_config_to_json(back.train));

  CHECK_THROWS_AS(load_experiment(dir.path() / "missing.json"), ConfigError);
  std::ofstream(dir.path() / "broken.json") << "{ \"schema_version\": 1,";
  CHECK_THROWS_AS(load_experiment(dir.path() / "broken.json"), ConfigError);
}

TEST_CASE("config hash is stable and sensitive") {
  const json a = to_json(parse_experiment(minimal()));
  json reordered = json::object();
  std::vector<std::string> keys;
  for (auto it = a.begin(); it != a.end(); ++it) keys.push_back(it.key());
  for (auto it = keys.rbegin(); it != keys.rend(); ++it) reordered[*it] = a.at(*it);
  CHECK(config_hash(a) == config_hash(reordered));
  CHECK(config_hash(a).size() == 16);
  json b = a;
  b["train"]["lr_init"] = 0.003;
  CHECK(config_hash(a) != config_hash(b));
  b = a;
  b["seed"] = 1;
  CHECK(config_hash(a) != config_hash(b));
}

TEST_CASE("experiment identity ignores the output directory") {
  ExperimentConfig a = parse_experiment(minimal());
  ExperimentConfig b = a;
  b.output_dir = "elsewhere";
  CHECK(experiment_hash(a) == experiment_hash(b));
  b.seed = 9;
  CHECK(experiment_hash(a) != experiment_hash(b));
}
