#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "fslab/autograd.hpp"
#include "fslab/decoder.hpp"
#include "fslab/network.hpp"

namespace fslab {

/// Invalid or inconsistent run configuration (CLI exit code 2).
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or parameters during training (CLI exit code 3).
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct OptimizerConfig {
  double lr = 2e-3;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double lr_decay_factor = 0.9;  // "decreased by 10%"
  int lr_decay_every_epochs = 20;
  /// Global L2 bound on the (scaled) gradient before each step; 0 disables.
  double clip_norm = 0.0;
};

struct StageEpochs {
  int spatial = 10;
  int temporal = 10;
  int joint = 20;

  int of(Stage stage) const;
};

struct RunConfig {
  BackbonePreset backbone = BackbonePreset::kToy;
  RcamMode rcam_mode = RcamMode::kFullDuplex;
  int bpm_n = 4;
  BpmMode bpm_mode = BpmMode::kFullDuplex;
  bool share_allocator = true;
  bool merge_branch = true;
  PredictionHead prediction_head = PredictionHead::kSA;
  int input_size = 64;
  std::vector<double> multi_scale{0.75, 1.0, 1.25};
  OptimizerConfig optimizer;
  StageEpochs epochs;
  int batch_size = 8;
  ag::Reduction loss_reduction = ag::Reduction::kSum;
  std::uint64_t seed = 0;
  std::filesystem::path corpus;
  std::filesystem::path output_dir;

  /// Throws ConfigError.
  void validate() const;
  NetworkConfig network() const;
};

std::string to_json_string(const RunConfig& config);
/// Missing keys keep their defaults; unknown keys and bad values raise ConfigError.
RunConfig parse_run_config(const std::string& json_text);
/// Reads a JSON file, then applies the FSLAB_SEED environment override.
RunConfig load_run_config(const std::filesystem::path& path);
/// Replaces `config.seed` with FSLAB_SEED when set (ConfigError if malformed).
void apply_env_overrides(RunConfig& config);

/// FNV-1a of the canonical JSON without the output directory and the
/// prediction head (neither affects training).
std::uint64_t config_hash(const RunConfig& config);

/// Training/eval edge length for a scale: round(size * scale / 32) * 32, at least 32.
int scaled_input_size(int input_size, double scale);

}  // namespace fslab
