#pragma once

#include <cstdint>
#include <string>

#include "fslab/bpm.hpp"
#include "fslab/decoder.hpp"
#include "fslab/encoder.hpp"
#include "fslab/rcam.hpp"

namespace fslab {

struct NetworkConfig {
  BackboneConfig backbone;
  RcamMode rcam_mode = RcamMode::kFullDuplex;
  BpmConfig bpm;
  /// false selects the two-branch ablation (no merging-branch parameters).
  bool merge_branch = true;
  std::uint64_t seed = 0;

  void validate() const;
};

enum class Stage { kSpatial, kTemporal, kJoint };

std::string to_string(Stage stage);
Stage stage_from_string(const std::string& s);

struct ParameterBreakdown {
  std::size_t encoders = 0;
  std::size_t merge = 0;
  std::size_t rcam = 0;
  std::size_t allocator = 0;
  std::size_t bpm_units = 0;
  std::size_t decoders = 0;

  std::size_t total() const { return encoders + merge + rcam + allocator + bpm_units + decoders; }
};

struct FlopCount {
  std::uint64_t total = 0;  // 2 x multiply-accumulates of the whole forward
  std::uint64_t bpm = 0;    // the purification cascade alone
};

class FsNet {
 public:
  explicit FsNet(const NetworkConfig& config);

  const NetworkConfig& config() const { return config_; }

  /// `appearance` is the RGB frame, `motion` the colour-wheel flow, both 3 x H x W.
  PredictionPair forward(const ag::Var& appearance, const ag::Var& motion) const;

  /// Stage 1 path: appearance encoder, psi_F, appearance decoder.
  ag::Var forward_appearance(const ag::Var& appearance) const;
  /// Stage 2 path: motion encoder, psi_G, motion decoder.
  ag::Var forward_motion(const ag::Var& motion) const;

  /// Every parameter in a fixed order with hierarchical names.
  nn::ParameterList parameters() const;
  /// The subset trained in `stage`.
  nn::ParameterList parameters(Stage stage) const;

  /// Counted on a no-grad forward at the given input size.
  FlopCount flops(int height, int width) const;

  static ParameterBreakdown parameter_breakdown(const NetworkConfig& config);

  Bpm& bpm() { return bpm_; }
  const Bpm& bpm() const { return bpm_; }
  Decoder& decoder_a() { return decoder_a_; }
  Decoder& decoder_m() { return decoder_m_; }
  Rcam& rcam() { return rcam_; }

 private:
  PredictionPair forward_impl(const ag::Var& appearance, const ag::Var& motion,
                              std::uint64_t* bpm_macs) const;

  NetworkConfig config_;
  BranchEncoder app_encoder_;
  BranchEncoder mot_encoder_;
  MergeBlocks merge_;
  Rcam rcam_;
  Bpm bpm_;
  Decoder decoder_a_;
  Decoder decoder_m_;
};

}  // namespace fslab
