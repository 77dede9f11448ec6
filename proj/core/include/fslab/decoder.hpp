#pragma once

#include <array>
#include <span>
#include <string>
#include <vector>

#include "fslab/bpm.hpp"
#include "fslab/datamodel.hpp"
#include "fslab/nn.hpp"

namespace fslab {

inline constexpr std::array<int, 4> kPpmBins = {1, 2, 3, 6};
inline constexpr int kPpmBranchChannels = 8;
inline constexpr double kBceEps = 1e-7;

/// Pyramid pooling: 32 x h x w in, 32 x h x w out.
class Ppm {
 public:
  Ppm() = default;
  explicit Ppm(nn::Rng& rng);

  ag::Var operator()(const ag::Var& feat) const;
  void collect(const std::string& prefix, nn::ParameterList& out) const;
  static std::size_t parameter_count();

 private:
  std::array<nn::Conv2d, kPpmBins.size()> branch_;
  nn::Conv2d merge_;
};

/// Top-down decoder over K 32-channel levels with PPM on every upward path and
/// a single-filter sigmoid head.
class Decoder {
 public:
  Decoder() = default;
  explicit Decoder(nn::Rng& rng);

  /// Returns 1 x out_h x out_w in [0, 1].
  ag::Var operator()(std::span<const ag::Var> levels, int out_h, int out_w) const;

  const nn::Conv2d& head() const { return head_; }
  nn::Conv2d& head() { return head_; }

  void collect(const std::string& prefix, nn::ParameterList& out) const;
  static std::size_t parameter_count();

 private:
  std::array<Ppm, kPyramidLevels - 1> ppm_;             // applied to levels 3..5 on the way up
  std::array<nn::Conv2d, kPyramidLevels - 1> reduce_;   // C at levels 2..4, 64 -> 32
  nn::Conv2d head_;
};

/// -sum [G log S + (1 - G) log(1 - S)] with S clamped to [eps, 1 - eps].
ag::Var bce_loss(const ag::Var& s, const Tensor& gt, ag::Reduction reduction = ag::Reduction::kSum,
                 double eps = kBceEps);

/// bce(S_A, G) + bce(S_M, G).
ag::Var total_loss(const PredictionPair& pred, const Tensor& gt,
                   ag::Reduction reduction = ag::Reduction::kSum);

enum class PredictionHead { kSA, kSM, kMean };

std::string to_string(PredictionHead head);
PredictionHead prediction_head_from_string(const std::string& s);

/// The map reported to callers: S_A, S_M or (S_A + S_M) / 2.
Tensor select_prediction(const PredictionPair& pred, PredictionHead head);

}  // namespace fslab
