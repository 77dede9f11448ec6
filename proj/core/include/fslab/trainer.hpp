#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fslab/checkpoint.hpp"
#include "fslab/config.hpp"
#include "fslab/network.hpp"
#include "fslab/synthdata.hpp"

namespace fslab {

/// A sample ready for the network: RGB frame, colour-wheel flow, mask.
struct TrainingSample {
  std::string clip_id;
  int t = 0;
  Tensor appearance;
  Tensor motion;
  Tensor gt;
};

/// Loads every clip of `split`; flow is encoded with its clip's normaliser.
std::vector<TrainingSample> load_split(const std::filesystem::path& corpus, const std::string& split);

/// Bilinear resize of a C x H x W raster.
Tensor resize_image(const Tensor& image, int height, int width);
/// Nearest-neighbour resize (keeps masks binary).
Tensor resize_mask(const Tensor& mask, int height, int width);

/// SGD with momentum and L2 weight decay, PyTorch update order:
/// g += wd * p; buf = momentum * buf + g; p -= lr * buf.
class Sgd {
 public:
  Sgd(nn::ParameterList params, const OptimizerConfig& config);

  /// Gradients are multiplied by `grad_scale` first, then rescaled to at most
  /// `clip_norm` in global L2 norm when clipping is on. Parameters without a
  /// gradient buffer are left untouched.
  void step(double lr, double grad_scale = 1.0);
  void zero_grad();

  std::vector<NamedTensor> momentum() const;
  /// Loads buffers by name; names not in this optimizer are ignored.
  void load_momentum(const std::vector<NamedTensor>& buffers);

 private:
  nn::ParameterList params_;
  OptimizerConfig config_;
  std::vector<Tensor> buffers_;
};

/// lr * factor^floor((epoch - 1) / every), epoch 1-based within a stage.
double learning_rate(const OptimizerConfig& config, int epoch);

struct StepLog {
  Stage stage = Stage::kSpatial;
  int epoch = 0;
  int step = 0;
  double loss = 0.0;
};

struct EpochLog {
  Stage stage = Stage::kSpatial;
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;  // mean per-sample loss over the epoch
};

struct TrainOutcome {
  std::vector<StepLog> steps;
  std::vector<EpochLog> epochs;
  std::map<Stage, std::filesystem::path> stage_checkpoints;
  std::filesystem::path final_checkpoint;
  bool stopped_early = false;
};

class Trainer {
 public:
  /// Return false to stop after the epoch that was just logged.
  using EpochHook = std::function<bool(const EpochLog&)>;

  /// Throws ConfigError when the corpus or a required split is missing.
  explicit Trainer(RunConfig config, std::ostream* log = nullptr);

  FsNet& network() { return net_; }
  const RunConfig& config() const { return config_; }

  /// Runs the three stages in order. With `resume`, restores that checkpoint
  /// (config hash must match) and continues after its last completed epoch.
  TrainOutcome run(const std::optional<std::filesystem::path>& resume = std::nullopt,
                   const EpochHook& hook = {});

  /// Runs epochs first_epoch..N of one stage. Used by `run` and by ablations
  /// that share pretraining across variants.
  bool run_stage(Stage stage, int first_epoch, TrainOutcome& out, const EpochHook& hook = {},
                 const std::vector<NamedTensor>* momentum = nullptr);

  std::filesystem::path checkpoint_path(Stage stage) const;

 private:
  const std::vector<TrainingSample>& data_for(Stage stage);

  RunConfig config_;
  std::uint64_t hash_;
  std::ostream* log_;
  FsNet net_;
  std::map<Stage, std::vector<TrainingSample>> data_;
};

}  // namespace fslab
