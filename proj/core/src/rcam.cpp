#include "fslab/rcam.hpp"

namespace fslab {

using ag::Var;

std::string to_string(RcamMode mode) {
  switch (mode) {
    case RcamMode::kFullDuplex: return "full-duplex";
    case RcamMode::kAppToMotion: return "simplex-app-to-mo";
    case RcamMode::kMotionToApp: return "simplex-mo-to-app";
    case RcamMode::kIndependent: return "direction-independent";
  }
  return "?";
}

RcamMode rcam_mode_from_string(const std::string& s) {
  if (s == "full-duplex") return RcamMode::kFullDuplex;
  if (s == "simplex-app-to-mo") return RcamMode::kAppToMotion;
  if (s == "simplex-mo-to-app") return RcamMode::kMotionToApp;
  if (s == "direction-independent") return RcamMode::kIndependent;
  throw ContractError("unknown rcam_mode '" + s + "'");
}

RcamLevelParams::RcamLevelParams(int channels, nn::Rng& rng)
    : phi(channels, channels, 1, 1, true, rng, nn::Init::kXavier),
      theta(channels, channels, 1, 1, true, rng, nn::Init::kXavier) {}

Var channel_vector(const Var& feat) { return ag::global_avg_pool(feat); }

CrossAttended cross_attend(const Var& x, const Var& y, const RcamLevelParams& params,
                           RcamMode mode) {
  require_same_shape(x.shape(), y.shape(), "cross_attend");
  if (params.theta.in_channels() != x.shape().c) {
    throw ContractError("cross_attend: parameters expect " +
                        std::to_string(params.theta.in_channels()) + " channels, input is " +
                        x.shape().str());
  }
  CrossAttended out{x, y};
  const bool weight_x = mode == RcamMode::kFullDuplex || mode == RcamMode::kMotionToApp;
  const bool weight_y = mode == RcamMode::kFullDuplex || mode == RcamMode::kAppToMotion;
  if (weight_x) {
    const Var attention = ag::sigmoid(params.theta(channel_vector(y)));
    out.q_x = ag::channel_scale(x, attention);
  }
  if (weight_y) {
    const Var attention = ag::sigmoid(params.phi(channel_vector(x)));
    out.q_y = ag::channel_scale(y, attention);
  }
  return out;
}

Rcam::Rcam(const BackboneConfig& config, nn::Rng& rng) {
  config.validate();
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    levels_[k] = RcamLevelParams(config.channel_widths[k], rng);
  }
}

FeaturePyramid Rcam::forward(const FeaturePyramid& appearance, const FeaturePyramid& motion,
                             const MergeBlocks& merge, RcamMode mode) const {
  appearance.validate();
  motion.validate();
  FeaturePyramid merged;
  merged.branch = Branch::kMerged;
  Var z;
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    const CrossAttended q = cross_attend(appearance[k], motion[k], levels_[k], mode);
    z = merge.step(k, ag::add(q.q_x, q.q_y), z);
    merged.levels.push_back(z);
  }
  return merged;
}

void Rcam::collect(const std::string& prefix, nn::ParameterList& out) const {
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    const std::string level = prefix + ".level" + std::to_string(k + 2);
    levels_[k].phi.collect(level + ".phi", out);
    levels_[k].theta.collect(level + ".theta", out);
  }
}

std::size_t Rcam::parameter_count(const BackboneConfig& config) {
  std::size_t n = 0;
  for (int c : config.channel_widths) n += 2 * nn::Conv2d::parameter_count(c, c, 1, true);
  return n;
}

}  // namespace fslab
