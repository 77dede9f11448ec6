#pragma once

#include <array>
#include <span>
#include <string>

#include "fslab/datamodel.hpp"
#include "fslab/nn.hpp"

namespace fslab {

enum class BackbonePreset { kToy, kResNet50Like };

/// Channel widths of hierarchy levels 2..5 plus the stem's total stride.
struct BackboneConfig {
  BackbonePreset preset = BackbonePreset::kToy;
  std::array<int, kPyramidLevels> channel_widths{16, 32, 64, 128};
  int stem_stride = 4;

  static BackboneConfig toy();
  static BackboneConfig resnet50_like();

  /// Throws ContractError on non-positive or decreasing widths or a stem
  /// stride other than 4 (the level-2 stride of the pyramid contract).
  void validate() const;
};

std::string to_string(BackbonePreset preset);
BackbonePreset backbone_preset_from_string(const std::string& s);

// ---- flow -> 3-channel input ------------------------------------------------

struct FlowHsv {
  Tensor hue;         // degrees in [0, 360), 1 x H x W
  Tensor saturation;  // min(|flow| / normalizer, 1)
  Tensor value;       // 0.5 + 0.5 * saturation
};

/// Colour-wheel decomposition: direction -> hue, magnitude -> saturation and
/// value. Zero flow maps to neutral gray (s = 0, v = 0.5).
FlowHsv flow_to_hsv(const Tensor& flow, double normalizer);

/// RGB rendering of `flow_to_hsv`, 3 x H x W in [0, 1].
Tensor flow_to_input(const Tensor& flow, double normalizer);

/// 99th-percentile flow magnitude over all rasters of a clip. Falls back to the
/// maximum magnitude when the percentile is zero, and to 1 for static clips.
double flow_normalizer(std::span<const Tensor> clip_flows);

// ---- branch encoders ----------------------------------------------------------

/// Convolutional backbone emitting the 4-level pyramid at strides 4..32.
///
/// Stem: two stride-2 3x3 convs (3 -> w2/2 -> w2). Level 2 adds one 3x3 conv;
/// levels 3..5 each open with a stride-2 3x3 conv followed by a 3x3 conv.
/// Every conv is followed by ReLU.
class BranchEncoder {
 public:
  BranchEncoder() = default;
  BranchEncoder(const BackboneConfig& config, Branch branch, nn::Rng& rng);

  /// Input must be 3 x H x W with H and W divisible by 32 (ShapeError otherwise).
  FeaturePyramid operator()(const ag::Var& input) const;

  Branch branch() const { return branch_; }
  void collect(const std::string& prefix, nn::ParameterList& out) const;
  static std::size_t parameter_count(const BackboneConfig& config);

 private:
  Branch branch_ = Branch::kAppearance;
  nn::Conv2d stem_a_, stem_b_;
  std::array<nn::Conv2d, kPyramidLevels> entry_;  // entry_[0] unused (level 2 has no downsampling)
  std::array<nn::Conv2d, kPyramidLevels> body_;
};

/// Merging-branch blocks B_2..B_5.
///
/// B_k[Q^X_k + Q^Y_k + Z_{k-1}] is realised as Body_k(Down_k(Z_{k-1}) + Q^X_k + Q^Y_k),
/// where Down_k is a bias-free stride-2 3x3 conv lifting Z_{k-1} to level k and
/// Body_k a 3x3 conv + ReLU. B_2 has no Down (Z_1 is the zero tensor).
///
/// With `enabled == false` (two-branch ablation) no parameters exist and
/// Z_k = Q^X_k + Q^Y_k + pad(avgpool2(Z_{k-1})).
class MergeBlocks {
 public:
  MergeBlocks() = default;
  MergeBlocks(const BackboneConfig& config, bool enabled, nn::Rng& rng);

  /// One merge step at positional level `level` (0 = hierarchy level 2).
  /// `z_prev` may be undefined, meaning the zero tensor.
  ag::Var step(std::size_t level, const ag::Var& q_sum, const ag::Var& z_prev) const;

  bool enabled() const { return enabled_; }
  void collect(const std::string& prefix, nn::ParameterList& out) const;
  static std::size_t parameter_count(const BackboneConfig& config, bool enabled);

 private:
  bool enabled_ = true;
  std::array<int, kPyramidLevels> widths_{};
  std::array<nn::Conv2d, kPyramidLevels> down_;
  std::array<nn::Conv2d, kPyramidLevels> body_;
};

}  // namespace fslab
