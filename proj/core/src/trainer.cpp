#include "fslab/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "fslab/decoder.hpp"
#include "fslab/encoder.hpp"

namespace fslab {

namespace fs = std::filesystem;
using ag::Var;

std::vector<TrainingSample> load_split(const fs::path& corpus, const std::string& split) {
  const fs::path manifest_path = corpus / kManifestName;
  if (!fs::exists(manifest_path)) {
    throw ConfigError("corpus manifest not found: " + manifest_path.string());
  }
  const Manifest manifest = Manifest::load(manifest_path);
  const auto it = manifest.splits.find(split);
  if (it == manifest.splits.end() || it->second.empty()) {
    throw ConfigError("corpus has no clips in split '" + split + "'");
  }
  std::vector<TrainingSample> out;
  for (const std::string& clip : it->second) {
    const std::vector<ClipSample> samples = load_clip(corpus, clip);
    std::vector<Tensor> flows;
    for (const auto& s : samples) flows.push_back(s.flow);
    const double norm = flow_normalizer(flows);
    for (const auto& s : samples) {
      out.push_back({s.clip_id, s.t, s.appearance, flow_to_input(s.flow, norm), s.gt_mask});
    }
  }
  return out;
}

Tensor resize_image(const Tensor& image, int height, int width) {
  if (image.height() == height && image.width() == width) return image;
  ag::NoGradGuard no_grad;
  return ag::resize_bilinear(Var::constant(image), height, width).value();
}

Tensor resize_mask(const Tensor& mask, int height, int width) {
  if (mask.height() == height && mask.width() == width) return mask;
  Tensor out(mask.channels(), height, width);
  const double sy = static_cast<double>(mask.height()) / height;
  const double sx = static_cast<double>(mask.width()) / width;
  for (int c = 0; c < mask.channels(); ++c) {
    for (int y = 0; y < height; ++y) {
      const int yy = std::min(mask.height() - 1, static_cast<int>(std::floor((y + 0.5) * sy)));
      for (int x = 0; x < width; ++x) {
        const int xx = std::min(mask.width() - 1, static_cast<int>(std::floor((x + 0.5) * sx)));
        out.at(c, y, x) = mask.at(c, yy, xx);
      }
    }
  }
  return out;
}

Sgd::Sgd(nn::ParameterList params, const OptimizerConfig& config)
    : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) buffers_.emplace_back(p.var.shape());
}

void Sgd::step(double lr, double grad_scale) {
  if (config_.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params_) {
      const Tensor& grad = p.var.grad();
      for (std::size_t j = 0; j < grad.size(); ++j) sq += grad[j] * grad[j];
    }
    const double norm = std::sqrt(sq) * grad_scale;
    if (norm > config_.clip_norm) grad_scale *= config_.clip_norm / norm;
  }
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Var& v = params_[i].var;
    const Tensor& grad = v.grad();
    if (grad.empty()) continue;
    Tensor& p = v.mutable_value();
    Tensor& buf = buffers_[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      const double g = grad[j] * grad_scale + config_.weight_decay * p[j];
      buf[j] = config_.momentum * buf[j] + g;
      p[j] -= lr * buf[j];
    }
  }
}

void Sgd::zero_grad() {
  for (auto& p : params_) p.var.zero_grad();
}

std::vector<NamedTensor> Sgd::momentum() const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.push_back({params_[i].name, buffers_[i]});
  return out;
}

void Sgd::load_momentum(const std::vector<NamedTensor>& buffers) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& b : buffers) by_name[b.name] = &b.value;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto it = by_name.find(params_[i].name);
    if (it == by_name.end()) continue;
    if (!(it->second->shape() == buffers_[i].shape())) {
      throw ConfigError("momentum buffer '" + params_[i].name + "' has the wrong shape");
    }
    buffers_[i] = *it->second;
  }
}

double learning_rate(const OptimizerConfig& config, int epoch) {
  const int decays = (epoch - 1) / config.lr_decay_every_epochs;
  return config.lr * std::pow(config.lr_decay_factor, decays);
}

Trainer::Trainer(RunConfig config, std::ostream* log)
    : config_(std::move(config)),
      hash_(config_hash(config_)),
      log_(log),
      net_((config_.validate(), config_.network())) {
  if (config_.corpus.empty()) throw ConfigError("config has no corpus path");
  if (!fs::exists(config_.corpus / kManifestName)) {
    throw ConfigError("corpus manifest not found under " + config_.corpus.string());
  }
}

fs::path Trainer::checkpoint_path(Stage stage) const {
  return config_.output_dir / "checkpoints" / (to_string(stage) + ".ckpt");
}

const std::vector<TrainingSample>& Trainer::data_for(Stage stage) {
  auto it = data_.find(stage);
  if (it != data_.end()) return it->second;
  const char* split = stage == Stage::kSpatial    ? "pretrain-spatial"
                      : stage == Stage::kTemporal ? "pretrain-temporal"
                                                  : "train";
  return data_.emplace(stage, load_split(config_.corpus, split)).first->second;
}

namespace {

bool finite(const nn::ParameterList& params) {
  for (const auto& p : params) {
    if (!p.var.value().all_finite()) return false;
  }
  return true;
}

}  // namespace

bool Trainer::run_stage(Stage stage, int first_epoch, TrainOutcome& out, const EpochHook& hook,
                        const std::vector<NamedTensor>* momentum) {
  const int n_epochs = config_.epochs.of(stage);
  const nn::ParameterList params = net_.parameters(stage);
  Sgd sgd(params, config_.optimizer);
  if (momentum) sgd.load_momentum(*momentum);
  sgd.zero_grad();

  auto save = [&](int epoch) {
    Checkpoint ckpt;
    ckpt.stage = stage;
    ckpt.epoch = epoch;
    ckpt.config_hash = hash_;
    ckpt.parameters = snapshot(net_);
    // Buffers for the whole network so the file layout does not depend on the stage.
    std::map<std::string, Tensor> buffers;
    for (auto& b : sgd.momentum()) buffers.emplace(b.name, std::move(b.value));
    for (const auto& p : ckpt.parameters) {
      auto it = buffers.find(p.name);
      ckpt.momentum.push_back(
          {p.name, it != buffers.end() ? std::move(it->second) : Tensor(p.value.shape())});
    }
    save_checkpoint(ckpt, checkpoint_path(stage));
  };

  if (n_epochs == 0 || first_epoch > n_epochs) {
    if (!config_.output_dir.empty()) {
      save(std::min(first_epoch - 1, n_epochs));
      out.stage_checkpoints[stage] = checkpoint_path(stage);
    }
    return true;
  }

  const auto& data = data_for(stage);
  std::ofstream step_log;
  if (!config_.output_dir.empty()) {
    fs::create_directories(config_.output_dir);
    step_log.open(config_.output_dir / "train_log.csv", std::ios::app);
  }

  for (int epoch = first_epoch; epoch <= n_epochs; ++epoch) {
    const double lr = learning_rate(config_.optimizer, epoch);
    nn::Rng rng = nn::make_rng(config_.seed, "epoch/" + to_string(stage) + "/" +
                                                 std::to_string(epoch));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);

    double epoch_loss = 0.0;
    int in_batch = 0;
    int step = 0;
    double batch_loss = 0.0;
    for (std::size_t n = 0; n < order.size(); ++n) {
      const TrainingSample& s = data[order[n]];
      const double scale = config_.multi_scale[rng() % config_.multi_scale.size()];
      const int size = scaled_input_size(config_.input_size, scale);
      const Tensor gt = resize_mask(s.gt, size, size);
      Var loss;
      if (stage == Stage::kSpatial) {
        const Var a = Var::constant(resize_image(s.appearance, size, size));
        loss = bce_loss(net_.forward_appearance(a), gt, config_.loss_reduction);
      } else if (stage == Stage::kTemporal) {
        const Var m = Var::constant(resize_image(s.motion, size, size));
        loss = bce_loss(net_.forward_motion(m), gt, config_.loss_reduction);
      } else {
        const Var a = Var::constant(resize_image(s.appearance, size, size));
        const Var m = Var::constant(resize_image(s.motion, size, size));
        loss = total_loss(net_.forward(a, m), gt, config_.loss_reduction);
      }
      const double value = loss.value()[0];
      if (!std::isfinite(value)) {
        throw NumericalError("non-finite loss at stage " + to_string(stage) + ", epoch " +
                             std::to_string(epoch) + ", clip " + s.clip_id + " frame " +
                             std::to_string(s.t) + " (lr " + std::to_string(lr) + ")");
      }
      ag::backward(loss);
      epoch_loss += value;
      batch_loss += value;
      ++in_batch;
      if (in_batch == config_.batch_size || n + 1 == order.size()) {
        const double grad_scale =
            config_.loss_reduction == ag::Reduction::kMean ? 1.0 / in_batch : 1.0;
        sgd.step(lr, grad_scale);
        sgd.zero_grad();
        if (!finite(params)) {
          throw NumericalError("non-finite parameters after step " + std::to_string(step + 1) +
                               " of stage " + to_string(stage) + ", epoch " +
                               std::to_string(epoch));
        }
        ++step;
        const StepLog entry{stage, epoch, step, batch_loss / in_batch};
        out.steps.push_back(entry);
        if (step_log) {
          step_log << to_string(stage) << ',' << epoch << ',' << step << ',' << entry.loss << '\n';
        }
        in_batch = 0;
        batch_loss = 0.0;
      }
    }
    const EpochLog summary{stage, epoch, lr, epoch_loss / static_cast<double>(order.size())};
    out.epochs.push_back(summary);
    if (log_) {
      *log_ << to_string(stage) << " epoch " << epoch << "/" << n_epochs << " lr " << lr
            << " loss " << summary.mean_loss << std::endl;
    }
    if (!config_.output_dir.empty()) {
      save(epoch);
      out.stage_checkpoints[stage] = checkpoint_path(stage);
    }
    if (hook && !hook(summary)) return false;
  }
  return true;
}

TrainOutcome Trainer::run(const std::optional<fs::path>& resume, const EpochHook& hook) {
  TrainOutcome out;
  const Stage order[] = {Stage::kSpatial, Stage::kTemporal, Stage::kJoint};
  std::size_t first_stage = 0;
  int first_epoch = 1;
  std::optional<std::vector<NamedTensor>> momentum;
  if (resume) {
    Checkpoint ckpt = load_checkpoint(*resume);
    if (ckpt.config_hash != hash_) {
      throw ConfigError("checkpoint " + resume->string() + " was written under a different config");
    }
    restore(net_, ckpt.parameters);
    first_stage = static_cast<std::size_t>(ckpt.stage);
    first_epoch = ckpt.epoch + 1;
    if (first_epoch > config_.epochs.of(ckpt.stage)) {
      ++first_stage;
      first_epoch = 1;
    } else {
      momentum = std::move(ckpt.momentum);
    }
  }
  for (std::size_t i = first_stage; i < 3; ++i) {
    const bool finished = run_stage(order[i], i == first_stage ? first_epoch : 1, out, hook,
                                    i == first_stage && momentum ? &*momentum : nullptr);
    if (!finished) {
      out.stopped_early = true;
      return out;
    }
  }
  if (!config_.output_dir.empty()) out.final_checkpoint = checkpoint_path(Stage::kJoint);
  return out;
}

}  // namespace fslab
