#include "fslab/decoder.hpp"

#include <algorithm>

namespace fslab {

using ag::Var;
using nn::Conv2d;

Ppm::Ppm(nn::Rng& rng) {
  for (auto& b : branch_) b = Conv2d(kBpmChannels, kPpmBranchChannels, 1, 1, true, rng);
  merge_ = Conv2d(kPpmBranchChannels * static_cast<int>(kPpmBins.size()), kBpmChannels, 1, 1, true,
                  rng);
}

Var Ppm::operator()(const Var& feat) const {
  const Shape s = feat.shape();
  if (s.c != kBpmChannels) throw ContractError("ppm expects 32 channels, got " + s.str());
  std::vector<Var> pooled;
  for (std::size_t i = 0; i < kPpmBins.size(); ++i) {
    const int bh = std::min(kPpmBins[i], s.h);
    const int bw = std::min(kPpmBins[i], s.w);
    const Var p = ag::relu(branch_[i](ag::adaptive_avg_pool(feat, bh, bw)));
    pooled.push_back(ag::resize_bilinear(p, s.h, s.w));
  }
  return ag::relu(merge_(ag::concat_channels(pooled)));
}

void Ppm::collect(const std::string& prefix, nn::ParameterList& out) const {
  for (std::size_t i = 0; i < branch_.size(); ++i) {
    branch_[i].collect(prefix + ".bin" + std::to_string(kPpmBins[i]), out);
  }
  merge_.collect(prefix + ".merge", out);
}

std::size_t Ppm::parameter_count() {
  return kPpmBins.size() * Conv2d::parameter_count(kBpmChannels, kPpmBranchChannels, 1, true) +
         Conv2d::parameter_count(kPpmBranchChannels * static_cast<int>(kPpmBins.size()),
                                 kBpmChannels, 1, true);
}

Decoder::Decoder(nn::Rng& rng) {
  for (auto& p : ppm_) p = Ppm(rng);
  for (auto& c : reduce_) c = Conv2d(2 * kBpmChannels, kBpmChannels, 3, 1, true, rng);
  head_ = Conv2d(kBpmChannels, 1, 1, 1, true, rng, nn::Init::kXavier);
}

Var Decoder::operator()(std::span<const Var> levels, int out_h, int out_w) const {
  if (levels.size() != kPyramidLevels) {
    throw ContractError("decoder expects " + std::to_string(kPyramidLevels) + " levels, got " +
                        std::to_string(levels.size()));
  }
  for (const Var& l : levels) {
    if (l.shape().c != kBpmChannels) throw ContractError("decoder level " + l.shape().str());
  }
  Var hat = levels[kPyramidLevels - 1];
  for (int k = kPyramidLevels - 2; k >= 0; --k) {
    const Shape target = levels[k].shape();
    const Var up = ag::resize_bilinear(ppm_[k](hat), target.h, target.w);
    const std::array<Var, 2> parts{levels[k], up};
    hat = ag::relu(reduce_[k](ag::concat_channels(parts)));
  }
  return ag::resize_bilinear(ag::sigmoid(head_(hat)), out_h, out_w);
}

void Decoder::collect(const std::string& prefix, nn::ParameterList& out) const {
  for (std::size_t k = 0; k < ppm_.size(); ++k) {
    ppm_[k].collect(prefix + ".ppm.level" + std::to_string(k + 3), out);
    reduce_[k].collect(prefix + ".reduce.level" + std::to_string(k + 2), out);
  }
  head_.collect(prefix + ".head", out);
}

std::size_t Decoder::parameter_count() {
  return (kPyramidLevels - 1) *
             (Ppm::parameter_count() +
              Conv2d::parameter_count(2 * kBpmChannels, kBpmChannels, 3, true)) +
         Conv2d::parameter_count(kBpmChannels, 1, 1, true);
}

Var bce_loss(const Var& s, const Tensor& gt, ag::Reduction reduction, double eps) {
  return ag::bce(s, gt, eps, reduction);
}

Var total_loss(const PredictionPair& pred, const Tensor& gt, ag::Reduction reduction) {
  return ag::add(bce_loss(pred.s_a, gt, reduction), bce_loss(pred.s_m, gt, reduction));
}

std::string to_string(PredictionHead head) {
  switch (head) {
    case PredictionHead::kSA: return "SA";
    case PredictionHead::kSM: return "SM";
    case PredictionHead::kMean: return "mean";
  }
  return "?";
}

PredictionHead prediction_head_from_string(const std::string& s) {
  if (s == "SA") return PredictionHead::kSA;
  if (s == "SM") return PredictionHead::kSM;
  if (s == "mean") return PredictionHead::kMean;
  throw ContractError("unknown prediction_head '" + s + "'");
}

Tensor select_prediction(const PredictionPair& pred, PredictionHead head) {
  switch (head) {
    case PredictionHead::kSA: return pred.s_a.value();
    case PredictionHead::kSM: return pred.s_m.value();
    case PredictionHead::kMean: {
      Tensor out = pred.s_a.value();
      out += pred.s_m.value();
      out *= 0.5;
      return out;
    }
  }
  throw ContractError("select_prediction: bad head");
}

}  // namespace fslab
