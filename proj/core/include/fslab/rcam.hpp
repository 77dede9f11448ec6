#pragma once

#include <array>
#include <string>

#include "fslab/datamodel.hpp"
#include "fslab/encoder.hpp"
#include "fslab/nn.hpp"

namespace fslab {

/// Direction of channel-attention exchange between the two encoder branches.
enum class RcamMode {
  kFullDuplex,     // X weighted by motion descriptor, Y by appearance descriptor
  kAppToMotion,    // appearance guides motion: only Y is re-weighted
  kMotionToApp,    // motion guides appearance: only X is re-weighted
  kIndependent,    // no exchange, both pass through
};

std::string to_string(RcamMode mode);
RcamMode rcam_mode_from_string(const std::string& s);

/// Per-level 1x1 maps on the GAP descriptors: phi reads V^X, theta reads V^Y.
struct RcamLevelParams {
  nn::Conv2d phi;
  nn::Conv2d theta;

  RcamLevelParams() = default;
  RcamLevelParams(int channels, nn::Rng& rng);
};

struct CrossAttended {
  ag::Var q_x;
  ag::Var q_y;
};

/// Spatial mean per channel (GAP).
ag::Var channel_vector(const ag::Var& feat);

/// Q^X = X (x) sigma[theta(V^Y)], Q^Y = Y (x) sigma[phi(V^X)], with the
/// unguided side passed through according to `mode`.
CrossAttended cross_attend(const ag::Var& x, const ag::Var& y, const RcamLevelParams& params,
                           RcamMode mode);

class Rcam {
 public:
  Rcam() = default;
  Rcam(const BackboneConfig& config, nn::Rng& rng);

  const RcamLevelParams& level(std::size_t k) const { return levels_[k]; }
  RcamLevelParams& level(std::size_t k) { return levels_[k]; }

  /// Level by level: cross-attend, then fold into the merging branch.
  /// Returns the merged pyramid Z_2..Z_5.
  FeaturePyramid forward(const FeaturePyramid& appearance, const FeaturePyramid& motion,
                         const MergeBlocks& merge, RcamMode mode) const;

  void collect(const std::string& prefix, nn::ParameterList& out) const;
  static std::size_t parameter_count(const BackboneConfig& config);

 private:
  std::array<RcamLevelParams, kPyramidLevels> levels_;
};

}  // namespace fslab
