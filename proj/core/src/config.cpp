#include "fslab/config.hpp"

#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace fslab {

using nlohmann::json;

int StageEpochs::of(Stage stage) const {
  switch (stage) {
    case Stage::kSpatial: return spatial;
    case Stage::kTemporal: return temporal;
    case Stage::kJoint: return joint;
  }
  return 0;
}

void RunConfig::validate() const {
  if (bpm_n < 0) throw ConfigError("bpm_n must be >= 0");
  if (input_size < 32 || input_size % 32 != 0) {
    throw ConfigError("input_size must be a positive multiple of 32");
  }
  if (multi_scale.empty()) throw ConfigError("multi_scale must not be empty");
  for (double s : multi_scale) {
    if (!(s > 0.0)) throw ConfigError("multi_scale entries must be positive");
  }
  if (!(optimizer.lr > 0.0)) throw ConfigError("optimizer.lr must be positive");
  if (optimizer.momentum < 0.0 || optimizer.momentum >= 1.0) {
    throw ConfigError("optimizer.momentum must lie in [0, 1)");
  }
  if (optimizer.weight_decay < 0.0) throw ConfigError("optimizer.weight_decay must be >= 0");
  if (!(optimizer.lr_decay_factor > 0.0) || optimizer.lr_decay_factor > 1.0) {
    throw ConfigError("optimizer.lr_decay_factor must lie in (0, 1]");
  }
  if (optimizer.clip_norm < 0.0) throw ConfigError("optimizer.clip_norm must be >= 0");
  if (optimizer.lr_decay_every_epochs < 1) {
    throw ConfigError("optimizer.lr_decay_every_epochs must be >= 1");
  }
  if (epochs.spatial < 0 || epochs.temporal < 0 || epochs.joint < 0) {
    throw ConfigError("epochs must be >= 0");
  }
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

NetworkConfig RunConfig::network() const {
  NetworkConfig n;
  n.backbone = backbone == BackbonePreset::kToy ? BackboneConfig::toy()
                                                : BackboneConfig::resnet50_like();
  n.rcam_mode = rcam_mode;
  n.bpm.units = bpm_n;
  n.bpm.mode = bpm_mode;
  n.bpm.share_allocator = share_allocator;
  n.merge_branch = merge_branch;
  n.seed = seed;
  return n;
}

namespace {

json to_json(const RunConfig& c) {
  json j;
  j["backbone"] = to_string(c.backbone);
  j["rcam_mode"] = to_string(c.rcam_mode);
  j["bpm_n"] = c.bpm_n;
  j["bpm_mode"] = to_string(c.bpm_mode);
  j["share_allocator"] = c.share_allocator;
  j["merge_branch"] = c.merge_branch;
  j["prediction_head"] = to_string(c.prediction_head);
  j["input_size"] = c.input_size;
  j["multi_scale"] = c.multi_scale;
  j["optimizer"] = {{"lr", c.optimizer.lr},
                    {"momentum", c.optimizer.momentum},
                    {"weight_decay", c.optimizer.weight_decay},
                    {"lr_decay_factor", c.optimizer.lr_decay_factor},
                    {"lr_decay_every_epochs", c.optimizer.lr_decay_every_epochs},
                    {"clip_norm", c.optimizer.clip_norm}};
  j["epochs"] = {{"spatial", c.epochs.spatial},
                 {"temporal", c.epochs.temporal},
                 {"joint", c.epochs.joint}};
  j["batch_size"] = c.batch_size;
  j["loss_reduction"] = c.loss_reduction == ag::Reduction::kSum ? "sum" : "mean";
  j["seed"] = c.seed;
  j["corpus"] = c.corpus.string();
  j["output_dir"] = c.output_dir.string();
  return j;
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    if (!known.contains(key)) throw ConfigError("unknown config key '" + where + key + "'");
  }
}

template <typename T>
void read(const json& j, const char* key, T& out) {
  if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string to_json_string(const RunConfig& config) { return to_json(config).dump(2); }

RunConfig parse_run_config(const std::string& json_text) {
  RunConfig c;
  try {
    const json j = json::parse(json_text);
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    reject_unknown(j,
                   {"backbone", "rcam_mode", "bpm_n", "bpm_mode", "share_allocator", "merge_branch",
                    "prediction_head", "input_size", "multi_scale", "optimizer", "epochs",
                    "batch_size", "loss_reduction", "seed", "corpus", "output_dir"},
                   "");
    if (j.contains("backbone")) c.backbone = backbone_preset_from_string(j["backbone"]);
    if (j.contains("rcam_mode")) c.rcam_mode = rcam_mode_from_string(j["rcam_mode"]);
    read(j, "bpm_n", c.bpm_n);
    if (j.contains("bpm_mode")) c.bpm_mode = bpm_mode_from_string(j["bpm_mode"]);
    read(j, "share_allocator", c.share_allocator);
    read(j, "merge_branch", c.merge_branch);
    if (j.contains("prediction_head")) {
      c.prediction_head = prediction_head_from_string(j["prediction_head"]);
    }
    read(j, "input_size", c.input_size);
    read(j, "multi_scale", c.multi_scale);
    if (j.contains("optimizer")) {
      const json& o = j["optimizer"];
      reject_unknown(o, {"lr", "momentum", "weight_decay", "lr_decay_factor", "lr_decay_every_epochs",
                      "clip_norm"},
                     "optimizer.");
      read(o, "lr", c.optimizer.lr);
      read(o, "momentum", c.optimizer.momentum);
      read(o, "weight_decay", c.optimizer.weight_decay);
      read(o, "lr_decay_factor", c.optimizer.lr_decay_factor);
      read(o, "lr_decay_every_epochs", c.optimizer.lr_decay_every_epochs);
      read(o, "clip_norm", c.optimizer.clip_norm);
    }
    if (j.contains("epochs")) {
      const json& e = j["epochs"];
      reject_unknown(e, {"spatial", "temporal", "joint"}, "epochs.");
      read(e, "spatial", c.epochs.spatial);
      read(e, "temporal", c.epochs.temporal);
      read(e, "joint", c.epochs.joint);
    }
    read(j, "batch_size", c.batch_size);
    if (j.contains("loss_reduction")) {
      const std::string r = j["loss_reduction"];
      if (r == "sum") {
        c.loss_reduction = ag::Reduction::kSum;
      } else if (r == "mean") {
        c.loss_reduction = ag::Reduction::kMean;
      } else {
        throw ConfigError("loss_reduction must be 'sum' or 'mean'");
      }
    }
    read(j, "seed", c.seed);
    if (j.contains("corpus")) c.corpus = j["corpus"].get<std::string>();
    if (j.contains("output_dir")) c.output_dir = j["output_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("malformed config: ") + e.what());
  } catch (const ContractError& e) {
    throw ConfigError(e.what());
  }
  c.validate();
  return c;
}

void apply_env_overrides(RunConfig& config) {
  const char* env = std::getenv("FSLAB_SEED");
  if (env == nullptr || *env == '\0') return;
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(env, &end, 10);
  if (errno != 0 || end == env || *end != '\0' || env[0] == '-') {
    throw ConfigError(std::string("FSLAB_SEED is not an unsigned integer: '") + env + "'");
  }
  config.seed = v;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  RunConfig c = parse_run_config(ss.str());
  apply_env_overrides(c);
  return c;
}

std::uint64_t config_hash(const RunConfig& config) {
  json j = to_json(config);
  j.erase("output_dir");
  j.erase("prediction_head");
  return nn::fnv1a(j.dump());
}

int scaled_input_size(int input_size, double scale) {
  const long blocks = std::lround(input_size * scale / 32.0);
  return static_cast<int>(std::max(1L, blocks) * 32);
}

}  // namespace fslab
