// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"
#include "upgan/dataset.hpp"
#include "upgan/trainer.hpp"

namespace upgan {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Task { procedural, undersample, motion, paired_dirs };
const char* task_name(Task t);

struct DataConfig {
  PhantomParams procedural{};
  std::filesystem::path clean_dir;   // undersample / motion
  std::filesystem::path input_dir;   // paired-dirs
  std::filesystem::path target_dir;  // paired-dirs
  IngestOptions ingest{};
  double keep_fraction = 0.08;
  degrade::MaskShape mask = degrade::MaskShape::square;
  degrade::MotionParams motion{};
};

struct EvalConfig {
  Split split = Split::test;
  bool figures = true;
  int max_figures = 4;  // test images that get a per-phase panel
};

struct SweepConfig {
  std::vector<int> levels{3, 6, 10};
  std::vector<std::uint64_t> seeds{0, 1, 2};
};

struct ExperimentConfig {
  static constexpr int kSchemaVersion = 1;

  Task task = Task::procedural;
  std::uint64_t seed = 0;
  std::filesystem::path output_dir = "runs/default";
  DataConfig data{};
  TrainConfig train{};
  EvalConfig eval{};
  SweepConfig sweep{};
};

/// Parses and validates a config document. Every object is closed: unknown
/// keys raise ConfigError naming the offending path. Missing keys keep their
/// defaults. Relative paths resolve against `base_dir`.
ExperimentConfig parse_experiment(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Full document with every field spelled out (defaults included).
nlohmann::json to_json(const ExperimentConfig& cfg);

nlohmann::json train_config_to_json(const TrainConfig& cfg);
TrainConfig train_config_from_json(const nlohmann::json& doc);

/// 16 hex digits of FNV-1a over the compact, key-sorted serialization.
std::string config_hash(const nlohmann::json& doc);

/// Identity of an experiment: the hash of its full document minus
/// output_dir, so the same run written elsewhere keeps its hash.
std::string experiment_hash(const ExperimentConfig& cfg);

}  // namespace upgan
