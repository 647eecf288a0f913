// SPDX-License-Identifier: Apache-2.0
#include "upgan/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>

namespace upgan {

namespace {

using json = nlohmann::json;

// Reads keys out of one JSON object and complains about anything left over.
class Section {
 public:
  Section(const json& doc, std::string path) : doc_(doc), path_(std::move(path)) {
    if (!doc_.is_object()) throw ConfigError(where() + " must be an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!doc_.contains(key)) return;
    try {
      out = doc_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where(key) + " has the wrong type");
    }
  }

  void get_path(const char* key, std::filesystem::path& out, const std::filesystem::path& base) {
    std::string s;
    get(key, s);
    if (!s.empty()) out = base.empty() || std::filesystem::path(s).is_absolute() ? std::filesystem::path(s) : base / s;
  }

  bool has(const char* key) const { return doc_.contains(key); }

  Section child(const char* key) {
    seen_.insert(key);
    static const json empty = json::object();
    return Section(doc_.contains(key) ? doc_.at(key) : empty, where(key));
  }

  void finish() const {
    for (const auto& [key, value] : doc_.items()) {
      if (!seen_.count(key)) throw ConfigError("unknown key " + where(key));
    }
  }

  std::string where(const std::string& key = {}) const {
    const std::string p = key.empty() ? path_ : path_ + "." + key;
    return p.empty() ? "<root>" : p;
  }

 private:
  const json& doc_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Enum>
Enum parse_enum(const std::string& value, const std::vector<std::pair<std::string, Enum>>& options,
                const std::string& where) {
  std::string allowed;
  for (const auto& [name, e] : options) {
    if (name == value) return e;
    allowed += (allowed.empty() ? "" : ", ") + name;
  }
  throw ConfigError(where + ": '" + value + "' is not one of " + allowed);
}

const std::vector<std::pair<std::string, Task>> kTasks = {{"procedural", Task::procedural},
                                                          {"undersample", Task::undersample},
                                                          {"motion", Task::motion},
                                                          {"paired-dirs", Task::paired_dirs}};
const std::vector<std::pair<std::string, Guidance>> kGuidance = {{"uncertainty", Guidance::uncertainty},
                                                                 {"none", Guidance::none}};
const std::vector<std::pair<std::string, degrade::MaskShape>> kMasks = {{"square", degrade::MaskShape::square},
                                                                        {"lines", degrade::MaskShape::lines}};
const std::vector<std::pair<std::string, Split>> kSplits = {
    {"train", Split::train}, {"val", Split::val}, {"test", Split::test}};

void read_model(Section s, CascadeConfig& m) {
  s.get("phases", m.phases);
  std::string guidance = m.guidance == Guidance::none ? "none" : "uncertainty";
  s.get("guidance", guidance);
  m.guidance = parse_enum(guidance, kGuidance, s.where("guidance"));
  s.get("learned_fusion", m.learned_fusion);
  s.get("feature_gain", m.feature_gain);
  s.get("conditional_discriminator", m.conditional_discriminator);
  {
    Section g = s.child("generator");
    g.get("base_width", m.generator.base_width);
    g.get("depth", m.generator.depth);
    g.get("beta_min", m.generator.beta_clamp.min);
    g.get("beta_max", m.generator.beta_clamp.max);
    g.get("alpha_floor", m.generator.alpha_floor);
    g.get("leaky_slope", m.generator.leaky_slope);
    g.finish();
  }
  {
    Section d = s.child("discriminator");
    d.get("layers", m.discriminator.layers);
    d.get("base_width", m.discriminator.base_width);
    d.get("leaky_slope", m.discriminator.leaky_slope);
    d.finish();
  }
  s.finish();
}

void read_train(Section s, TrainConfig& t) {
  s.get("epochs_init", t.epochs_init);
  s.get("epochs_finetune", t.epochs_finetune);
  s.get("lr_init", t.lr_init);
  s.get("lr_finetune", t.lr_finetune);
  s.get("adam_beta1", t.adam_beta1);
  s.get("adam_beta2", t.adam_beta2);
  s.get("adam_eps", t.adam_eps);
  s.get("batch_size", t.batch_size);
  s.get("anneal_period", t.anneal_period);
  s.get("lambda1", t.weights.lambda1);
  s.get("lambda2", t.weights.lambda2);
  s.get("freeze_discriminators", t.freeze_discriminators);
  s.get("grad_clip", t.grad_clip);
  s.finish();
}

json model_json(const CascadeConfig& m) {
  return {{"phases", m.phases},
          {"guidance", m.guidance == Guidance::none ? "none" : "uncertainty"},
          {"learned_fusion", m.learned_fusion},
          {"feature_gain", m.feature_gain},
          {"conditional_discriminator", m.conditional_discriminator},
          {"generator",
           {{"base_width", m.generator.base_width},
            {"depth", m.generator.depth},
            {"beta_min", m.generator.beta_clamp.min},
            {"beta_max", m.generator.beta_clamp.max},
            {"alpha_floor", m.generator.alpha_floor},
            {"leaky_slope", m.generator.leaky_slope}}},
          {"discriminator",
           {{"layers", m.discriminator.layers},
            {"base_width", m.discriminator.base_width},
            {"leaky_slope", m.discriminator.leaky_slope}}}};
}

json train_json(const TrainConfig& t) {
  return {{"epochs_init", t.epochs_init},
          {"epochs_finetune", t.epochs_finetune},
          {"lr_init", t.lr_init},
          {"lr_finetune", t.lr_finetune},
          {"adam_beta1", t.adam_beta1},
          {"adam_beta2", t.adam_beta2},
          {"adam_eps", t.adam_eps},
          {"batch_size", t.batch_size},
          {"anneal_period", t.anneal_period},
          {"lambda1", t.weights.lambda1},
          {"lambda2", t.weights.lambda2},
          {"freeze_discriminators", t.freeze_discriminators},
          {"grad_clip", t.grad_clip}};
}

void validate_train(const TrainConfig& t) {
  try {
    t.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(e.what());
  }
}

}  // namespace

const char* task_name(Task t) {
  for (const auto& [name, e] : kTasks) {
    if (e == t) return name.c_str();
  }
  return "?";
}

ExperimentConfig parse_experiment(const json& doc, const std::filesystem::path& base_dir) {
  ExperimentConfig cfg;
  Section root(doc, "");
  int version = 0;
  root.get("schema_version", version);
  if (!root.has("schema_version")) throw ConfigError("missing schema_version");
  if (version != ExperimentConfig::kSchemaVersion) {
    throw ConfigError("unsupported schema_version " + std::to_string(version) + " (expected " +
                      std::to_string(ExperimentConfig::kSchemaVersion) + ")");
  }
  std::string task = "procedural";
  root.get("task", task);
  cfg.task = parse_enum(task, kTasks, "task");
  root.get("seed", cfg.seed);
  root.get_path("output_dir", cfg.output_dir, base_dir);

  {
    Section d = root.child("data");
    {
      Section p = d.child("procedural");
      p.get("subjects", cfg.data.procedural.subjects);
      p.get("slices_per_subject", cfg.data.procedural.slices_per_subject);
      p.get("size", cfg.data.procedural.size);
      p.get("blur_sigma", cfg.data.procedural.blur_sigma);
      p.get("gamma", cfg.data.procedural.gamma);
      p.finish();
    }
    d.get_path("clean_dir", cfg.data.clean_dir, base_dir);
    d.get_path("input_dir", cfg.data.input_dir, base_dir);
    d.get_path("target_dir", cfg.data.target_dir, base_dir);
    d.get("size", cfg.data.ingest.size);
    d.get("downsample", cfg.data.ingest.downsample);
    d.get("intensity_range", cfg.data.ingest.intensity_range);
    {
      Section u = d.child("undersample");
      u.get("keep_fraction", cfg.data.keep_fraction);
      std::string mask = "square";
      u.get("mask", mask);
      cfg.data.mask = parse_enum(mask, kMasks, u.where("mask"));
      u.finish();
    }
    {
      Section m = d.child("motion");
      m.get("segments", cfg.data.motion.segments);
      m.get("max_rotation_deg", cfg.data.motion.max_rotation_deg);
      m.get("max_translation_px", cfg.data.motion.max_translation_px);
      m.finish();
    }
    d.finish();
  }
  read_model(root.child("model"), cfg.train.model);
  read_train(root.child("train"), cfg.train);
  {
    Section e = root.child("eval");
    std::string split = split_name(cfg.eval.split);
    e.get("split", split);
    cfg.eval.split = parse_enum(split, kSplits, e.where("split"));
    e.get("figures", cfg.eval.figures);
    e.get("max_figures", cfg.eval.max_figures);
    e.finish();
  }
  {
    Section s = root.child("sweep");
    s.get("levels", cfg.sweep.levels);
    s.get("seeds", cfg.sweep.seeds);
    s.finish();
  }
  root.finish();

  cfg.train.seed = cfg.seed;
  validate_train(cfg.train);
  auto require_dir = [](const std::filesystem::path& p, const char* key) {
    if (p.empty()) throw ConfigError(std::string("data.") + key + " is required for this task");
    if (!std::filesystem::is_directory(p)) throw ConfigError(std::string("data.") + key + ": no such directory " + p.string());
  };
  if (cfg.task == Task::undersample || cfg.task == Task::motion) require_dir(cfg.data.clean_dir, "clean_dir");
  if (cfg.task == Task::paired_dirs) {
    require_dir(cfg.data.input_dir, "input_dir");
    require_dir(cfg.data.target_dir, "target_dir");
  }
  if (cfg.task == Task::undersample && (!(cfg.data.keep_fraction > 0.0) || cfg.data.keep_fraction > 1.0)) {
    throw ConfigError("data.undersample.keep_fraction must lie in (0, 1]");
  }
  if (cfg.data.ingest.size < 8 || cfg.data.ingest.downsample < 1) throw ConfigError("data.size/downsample out of range");
  if (cfg.sweep.levels.empty() || cfg.sweep.seeds.empty()) throw ConfigError("sweep.levels and sweep.seeds must be non-empty");
  if (cfg.eval.max_figures < 0) throw ConfigError("eval.max_figures must be >= 0");
  return cfg;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_experiment(doc, path.parent_path());
}

json to_json(const ExperimentConfig& cfg) {
  const auto& d = cfg.data;
  json levels = cfg.sweep.levels;
  json seeds = cfg.sweep.seeds;
  return {{"schema_version", ExperimentConfig::kSchemaVersion},
          {"task", task_name(cfg.task)},
          {"seed", cfg.seed},
          {"output_dir", cfg.output_dir.string()},
          {"data",
           {{"procedural",
             {{"subjects", d.procedural.subjects},
              {"slices_per_subject", d.procedural.slices_per_subject},
              {"size", d.procedural.size},
              {"blur_sigma", d.procedural.blur_sigma},
              {"gamma", d.procedural.gamma}}},
            {"clean_dir", d.clean_dir.string()},
            {"input_dir", d.input_dir.string()},
            {"target_dir", d.target_dir.string()},
            {"size", d.ingest.size},
            {"downsample", d.ingest.downsample},
            {"intensity_range", d.ingest.intensity_range},
            {"undersample", {{"keep_fraction", d.keep_fraction}, {"mask", d.mask == degrade::MaskShape::lines ? "lines" : "square"}}},
            {"motion",
             {{"segments", d.motion.segments},
              {"max_rotation_deg", d.motion.max_rotation_deg},
              {"max_translation_px", d.motion.max_translation_px}}}}},
          {"model", model_json(cfg.train.model)},
          {"train", train_json(cfg.train)},
          {"eval", {{"split", split_name(cfg.eval.split)}, {"figures", cfg.eval.figures}, {"max_figures", cfg.eval.max_figures}}},
          {"sweep", {{"levels", levels}, {"seeds", seeds}}}};
}

json train_config_to_json(const TrainConfig& cfg) {
  return {{"seed", cfg.seed}, {"model", model_json(cfg.model)}, {"train", train_json(cfg)}};
}

TrainConfig train_config_from_json(const json& doc) {
  TrainConfig cfg;
  Section root(doc, "");
  root.get("seed", cfg.seed);
  read_model(root.child("model"), cfg.model);
  read_train(root.child("train"), cfg);
  root.finish();
  validate_train(cfg);
  return cfg;
}

std::string config_hash(const json& doc) {
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string experiment_hash(const ExperimentConfig& cfg) {
  json doc = to_json(cfg);
  doc.erase("output_dir");
  return config_hash(doc);
}

}  // namespace upgan
