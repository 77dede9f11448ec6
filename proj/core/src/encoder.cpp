#include "fslab/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

namespace fslab {

using ag::Var;
using nn::Conv2d;

BackboneConfig BackboneConfig::toy() { return BackboneConfig{}; }

BackboneConfig BackboneConfig::resnet50_like() {
  BackboneConfig c;
  c.preset = BackbonePreset::kResNet50Like;
  c.channel_widths = {256, 512, 1024, 2048};
  return c;
}

void BackboneConfig::validate() const {
  for (std::size_t k = 0; k < channel_widths.size(); ++k) {
    if (channel_widths[k] < 2) throw ContractError("backbone widths must be >= 2");
    if (k > 0 && channel_widths[k] < channel_widths[k - 1]) {
      throw ContractError("backbone widths must be non-decreasing");
    }
  }
  if (stem_stride != 4) throw ContractError("stem_stride must be 4 (level 2 sits at stride 4)");
}

std::string to_string(BackbonePreset preset) {
  return preset == BackbonePreset::kToy ? "toy" : "resnet50-like";
}

BackbonePreset backbone_preset_from_string(const std::string& s) {
  if (s == "toy") return BackbonePreset::kToy;
  if (s == "resnet50-like") return BackbonePreset::kResNet50Like;
  throw ContractError("unknown backbone preset '" + s + "'");
}

FlowHsv flow_to_hsv(const Tensor& flow, double normalizer) {
  if (flow.channels() != 2) throw ContractError("flow_to_hsv: expected 2 x H x W flow");
  if (!(normalizer > 0.0)) throw ContractError("flow_to_hsv: normalizer must be positive");
  const int h = flow.height(), w = flow.width();
  FlowHsv out{Tensor(1, h, w), Tensor(1, h, w), Tensor(1, h, w)};
  for (std::size_t i = 0; i < flow.shape().plane(); ++i) {
    const double u = flow.channel(0)[i], v = flow.channel(1)[i];
    const double mag = std::hypot(u, v);
    double deg = 0.0;
    if (mag > 0.0) {
      deg = std::atan2(v, u) * 180.0 / std::numbers::pi;
      if (deg < 0.0) deg += 360.0;
      if (deg >= 360.0) deg -= 360.0;
    }
    const double s = std::min(mag / normalizer, 1.0);
    out.hue[i] = deg;
    out.saturation[i] = s;
    out.value[i] = 0.5 + 0.5 * s;
  }
  return out;
}

Tensor flow_to_input(const Tensor& flow, double normalizer) {
  const FlowHsv hsv = flow_to_hsv(flow, normalizer);
  Tensor rgb(3, flow.height(), flow.width());
  for (std::size_t i = 0; i < hsv.hue.size(); ++i) {
    const double s = hsv.saturation[i], v = hsv.value[i];
    const double hp = hsv.hue[i] / 60.0;
    const double chroma = v * s;
    const double x = chroma * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
    double r = 0, g = 0, b = 0;
    switch (static_cast<int>(hp) % 6) {
      case 0: r = chroma, g = x; break;
      case 1: r = x, g = chroma; break;
      case 2: g = chroma, b = x; break;
      case 3: g = x, b = chroma; break;
      case 4: r = x, b = chroma; break;
      default: r = chroma, b = x; break;
    }
    const double m = v - chroma;
    rgb.channel(0)[i] = r + m;
    rgb.channel(1)[i] = g + m;
    rgb.channel(2)[i] = b + m;
  }
  return rgb;
}

double flow_normalizer(std::span<const Tensor> clip_flows) {
  std::vector<double> mags;
  for (const Tensor& f : clip_flows) {
    for (std::size_t i = 0; i < f.shape().plane(); ++i) {
      mags.push_back(std::hypot(f.channel(0)[i], f.channel(1)[i]));
    }
  }
  if (mags.empty()) return 1.0;
  const std::size_t rank = static_cast<std::size_t>(std::ceil(0.99 * mags.size())) - 1;
  std::nth_element(mags.begin(), mags.begin() + static_cast<std::ptrdiff_t>(rank), mags.end());
  const double p99 = mags[rank];
  if (p99 > 1e-12) return p99;
  const double top = *std::max_element(mags.begin(), mags.end());
  return top > 1e-12 ? top : 1.0;
}

BranchEncoder::BranchEncoder(const BackboneConfig& config, Branch branch, nn::Rng& rng)
    : branch_(branch) {
  config.validate();
  const auto& w = config.channel_widths;
  stem_a_ = Conv2d(3, w[0] / 2, 3, 2, true, rng);
  stem_b_ = Conv2d(w[0] / 2, w[0], 3, 2, true, rng);
  body_[0] = Conv2d(w[0], w[0], 3, 1, true, rng);
  for (std::size_t k = 1; k < kPyramidLevels; ++k) {
    entry_[k] = Conv2d(w[k - 1], w[k], 3, 2, true, rng);
    body_[k] = Conv2d(w[k], w[k], 3, 1, true, rng);
  }
}

FeaturePyramid BranchEncoder::operator()(const Var& input) const {
  const Shape s = input.shape();
  if (s.c != 3) throw ContractError("encoder input must have 3 channels, got " + s.str());
  if (s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 || s.w == 0) {
    throw ShapeError("encoder input " + s.str() + " is not divisible by 32");
  }
  FeaturePyramid out;
  out.branch = branch_;
  Var x = ag::relu(stem_b_(ag::relu(stem_a_(input))));
  x = ag::relu(body_[0](x));
  out.levels.push_back(x);
  for (std::size_t k = 1; k < kPyramidLevels; ++k) {
    x = ag::relu(entry_[k](x));
    x = ag::relu(body_[k](x));
    out.levels.push_back(x);
  }
  return out;
}

void BranchEncoder::collect(const std::string& prefix, nn::ParameterList& out) const {
  stem_a_.collect(prefix + ".stem.0", out);
  stem_b_.collect(prefix + ".stem.1", out);
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    const std::string level = prefix + ".level" + std::to_string(k + 2);
    if (k > 0) entry_[k].collect(level + ".entry", out);
    body_[k].collect(level + ".body", out);
  }
}

std::size_t BranchEncoder::parameter_count(const BackboneConfig& config) {
  const auto& w = config.channel_widths;
  std::size_t n = Conv2d::parameter_count(3, w[0] / 2, 3, true) +
                  Conv2d::parameter_count(w[0] / 2, w[0], 3, true) +
                  Conv2d::parameter_count(w[0], w[0], 3, true);
  for (std::size_t k = 1; k < kPyramidLevels; ++k) {
    n += Conv2d::parameter_count(w[k - 1], w[k], 3, true) +
         Conv2d::parameter_count(w[k], w[k], 3, true);
  }
  return n;
}

MergeBlocks::MergeBlocks(const BackboneConfig& config, bool enabled, nn::Rng& rng)
    : enabled_(enabled), widths_(config.channel_widths) {
  config.validate();
  if (!enabled) return;
  const auto& w = config.channel_widths;
  body_[0] = Conv2d(w[0], w[0], 3, 1, true, rng);
  for (std::size_t k = 1; k < kPyramidLevels; ++k) {
    down_[k] = Conv2d(w[k - 1], w[k], 3, 2, false, rng, nn::Init::kXavier);
    body_[k] = Conv2d(w[k], w[k], 3, 1, true, rng);
  }
}

Var MergeBlocks::step(std::size_t level, const Var& q_sum, const Var& z_prev) const {
  if (level >= kPyramidLevels) throw ContractError("merge step level out of range");
  if (q_sum.shape().c != widths_[level]) {
    throw ContractError("merge step input " + q_sum.shape().str() + " does not match level width " +
                        std::to_string(widths_[level]));
  }
  Var lifted;
  if (z_prev.defined()) {
    if (level == 0) {
      require_same_shape(z_prev.shape(), q_sum.shape(), "merge_step (level 2)");
      lifted = z_prev;
    } else {
      const Shape zs = z_prev.shape();
      const Shape qs = q_sum.shape();
      if (zs.c != widths_[level - 1] || zs.h / 2 != qs.h || zs.w / 2 != qs.w) {
        throw ContractError("merge_step: Z_{k-1} " + zs.str() + " incompatible with " + qs.str());
      }
      if (enabled_) {
        lifted = down_[level](z_prev);
      } else {
        lifted = ag::pad_channels(ag::adaptive_avg_pool(z_prev, qs.h, qs.w), qs.c);
      }
    }
  }
  const Var summed = lifted.defined() ? ag::add(q_sum, lifted) : q_sum;
  return enabled_ ? ag::relu(body_[level](summed)) : summed;
}

void MergeBlocks::collect(const std::string& prefix, nn::ParameterList& out) const {
  if (!enabled_) return;
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    const std::string level = prefix + ".level" + std::to_string(k + 2);
    if (k > 0) down_[k].collect(level + ".down", out);
    body_[k].collect(level + ".body", out);
  }
}

std::size_t MergeBlocks::parameter_count(const BackboneConfig& config, bool enabled) {
  if (!enabled) return 0;
  const auto& w = config.channel_widths;
  std::size_t n = Conv2d::parameter_count(w[0], w[0], 3, true);
  for (std::size_t k = 1; k < kPyramidLevels; ++k) {
    n += Conv2d::parameter_count(w[k - 1], w[k], 3, false) +
         Conv2d::parameter_count(w[k], w[k], 3, true);
  }
  return n;
}

}  // namespace fslab
