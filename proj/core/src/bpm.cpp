#include "fslab/bpm.hpp"

namespace fslab {

using ag::Var;
using nn::Conv2d;

namespace {

// Residual increments start small so a deep cascade begins near identity.
constexpr double kFuseGain = 0.1;

std::string level_name(std::size_t k) { return ".level" + std::to_string(k + 2); }

Var project(const Conv2d& conv, const Var& guide, const Shape& target) {
  // A 1x1 conv commutes with bilinear resampling (weights sum to one), so the
  // projection runs at the coarse resolution.
  return ag::resize_bilinear(conv(guide), target.h, target.w);
}

void check_guidance(std::span<const Var> guidance, const IdcParams& params, const char* what) {
  if (guidance.size() != params.project.size() || guidance.empty()) {
    throw ContractError(std::string(what) + ": expected " + std::to_string(params.project.size()) +
                        " guidance maps, got " + std::to_string(guidance.size()));
  }
}

}  // namespace

std::string to_string(BpmMode mode) {
  switch (mode) {
    case BpmMode::kFullDuplex: return "full-duplex";
    case BpmMode::kFtoG: return "simplex-FtoG";
    case BpmMode::kGtoF: return "simplex-GtoF";
    case BpmMode::kSelfPurification: return "self-purification";
  }
  return "?";
}

BpmMode bpm_mode_from_string(const std::string& s) {
  if (s == "full-duplex") return BpmMode::kFullDuplex;
  if (s == "simplex-FtoG") return BpmMode::kFtoG;
  if (s == "simplex-GtoF") return BpmMode::kGtoF;
  if (s == "self-purification") return BpmMode::kSelfPurification;
  throw ContractError("unknown bpm_mode '" + s + "'");
}

void BpmConfig::validate() const {
  if (units < 0) throw ContractError("bpm_n must be >= 0");
}

Allocator::Allocator(int in_channels, nn::Rng& rng)
    : first(in_channels, kBpmChannels, 3, 1, true, rng),
      second(kBpmChannels, kBpmChannels, 3, 1, true, rng) {}

Var Allocator::operator()(const Var& x) const { return ag::relu(second(ag::relu(first(x)))); }

void Allocator::collect(const std::string& prefix, nn::ParameterList& out) const {
  first.collect(prefix + ".0", out);
  second.collect(prefix + ".1", out);
}

std::size_t Allocator::parameter_count(int in_channels) {
  return Conv2d::parameter_count(in_channels, kBpmChannels, 3, true) +
         Conv2d::parameter_count(kBpmChannels, kBpmChannels, 3, true);
}

AllocatorPair::AllocatorPair(const std::array<int, kPyramidLevels>& in_widths, nn::Rng& rng) {
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    f[k] = Allocator(in_widths[k], rng);
    g[k] = Allocator(in_widths[k], rng);
  }
}

void AllocatorPair::collect(const std::string& prefix, nn::ParameterList& out) const {
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    f[k].collect(prefix + ".psi_f" + level_name(k), out);
    g[k].collect(prefix + ".psi_g" + level_name(k), out);
  }
}

std::size_t AllocatorPair::parameter_count(const std::array<int, kPyramidLevels>& in_widths) {
  std::size_t n = 0;
  for (int c : in_widths) n += 2 * Allocator::parameter_count(c);
  return n;
}

IdcParams::IdcParams(int level, int top, bool concat, nn::Rng& rng) {
  if (level < 1 || level > top) throw ContractError("IdcParams: level outside 1..top");
  const int members = top - level + 1;
  for (int i = 0; i < members; ++i) {
    project.emplace_back(kBpmChannels, kBpmChannels, 1, 1, true, rng, nn::Init::kXavier);
  }
  const int fuse_in = concat ? kBpmChannels * idc_arity(level, top) : kBpmChannels;
  fuse = Conv2d(fuse_in, kBpmChannels, 1, 1, true, rng, nn::Init::kXavier, kFuseGain);
}

void IdcParams::collect(const std::string& prefix, nn::ParameterList& out) const {
  for (std::size_t i = 0; i < project.size(); ++i) {
    project[i].collect(prefix + ".project" + std::to_string(i), out);
  }
  fuse.collect(prefix + ".fuse", out);
}

std::size_t IdcParams::parameter_count(int level, int top, bool concat) {
  const int members = top - level + 1;
  const int fuse_in = concat ? kBpmChannels * idc_arity(level, top) : kBpmChannels;
  return members * Conv2d::parameter_count(kBpmChannels, kBpmChannels, 1, true) +
         Conv2d::parameter_count(fuse_in, kBpmChannels, 1, true);
}

Var idc_concat(const Var& f, std::span<const Var> guidance, const IdcParams& params) {
  check_guidance(guidance, params, "idc_concat");
  std::vector<Var> members{f};
  for (std::size_t i = 0; i < guidance.size(); ++i) {
    members.push_back(project(params.project[i], guidance[i], f.shape()));
  }
  return params.fuse(ag::concat_channels(members));
}

Var idc_multiply(const Var& g, std::span<const Var> guidance, const IdcParams& params) {
  check_guidance(guidance, params, "idc_multiply");
  Var product = g;
  for (std::size_t i = 0; i < guidance.size(); ++i) {
    product = ag::mul(product, project(params.project[i], guidance[i], g.shape()));
  }
  return params.fuse(product);
}

BpmUnit::BpmUnit(bool own_allocator, nn::Rng& rng) {
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    const int level = static_cast<int>(k) + 1;
    concat[k] = IdcParams(level, kPyramidLevels, true, rng);
    multiply[k] = IdcParams(level, kPyramidLevels, false, rng);
  }
  if (own_allocator) {
    std::array<int, kPyramidLevels> widths;
    widths.fill(kBpmChannels);
    reallocate.emplace(widths, rng);
  }
}

void BpmUnit::collect(const std::string& prefix, nn::ParameterList& out) const {
  if (reallocate) reallocate->collect(prefix + ".allocator", out);
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    concat[k].collect(prefix + ".concat" + level_name(k), out);
    multiply[k].collect(prefix + ".multiply" + level_name(k), out);
  }
}

std::size_t BpmUnit::parameter_count(bool own_allocator) {
  std::size_t n = 0;
  for (int level = 1; level <= kPyramidLevels; ++level) {
    n += IdcParams::parameter_count(level, kPyramidLevels, true) +
         IdcParams::parameter_count(level, kPyramidLevels, false);
  }
  if (own_allocator) {
    std::array<int, kPyramidLevels> widths;
    widths.fill(kBpmChannels);
    n += AllocatorPair::parameter_count(widths);
  }
  return n;
}

BpmState allocate(const FeaturePyramid& fused, const FeaturePyramid& motion,
                  const AllocatorPair& allocator) {
  fused.validate();
  motion.validate();
  BpmState state;
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    state.f.push_back(allocator.f[k](fused[k]));
    state.g.push_back(allocator.g[k](motion[k]));
  }
  return state;
}

BpmState bpm_step(const BpmState& state, const BpmUnit& unit, BpmMode mode) {
  if (state.f.size() != kPyramidLevels || state.g.size() != kPyramidLevels) {
    throw ContractError("bpm_step: state must hold K levels per branch");
  }
  BpmState in = state;
  if (unit.reallocate) {
    for (std::size_t k = 0; k < kPyramidLevels; ++k) {
      in.f[k] = unit.reallocate->f[k](state.f[k]);
      in.g[k] = unit.reallocate->g[k](state.g[k]);
    }
  }
  const bool update_f = mode != BpmMode::kFtoG;
  const bool update_g = mode != BpmMode::kGtoF;
  const bool exchange = mode != BpmMode::kSelfPurification;
  const std::span<const Var> f_set(in.f);
  const std::span<const Var> g_set(in.g);

  BpmState out{in.f, in.g, state.n + 1};
  for (std::size_t k = 0; k < kPyramidLevels; ++k) {
    if (update_f) {
      const auto guide = (exchange ? g_set : f_set).subspan(k);
      out.f[k] = ag::add(in.f[k], idc_concat(in.f[k], guide, unit.concat[k]));
    }
    if (update_g) {
      const auto guide = (exchange ? f_set : g_set).subspan(k);
      out.g[k] = ag::add(in.g[k], idc_multiply(in.g[k], guide, unit.multiply[k]));
    }
  }
  return out;
}

BpmState bpm_chain(BpmState state, std::span<const BpmUnit> units, BpmMode mode) {
  for (const BpmUnit& unit : units) state = bpm_step(state, unit, mode);
  return state;
}

Bpm::Bpm(const BackboneConfig& backbone, const BpmConfig& config, nn::Rng& rng)
    : config_(config), allocator_(backbone.channel_widths, rng) {
  config.validate();
  units_.reserve(static_cast<std::size_t>(config.units));
  for (int n = 0; n < config.units; ++n) units_.emplace_back(!config.share_allocator, rng);
}

BpmState Bpm::operator()(const FeaturePyramid& fused, const FeaturePyramid& motion) const {
  return bpm_chain(allocate(fused, motion, allocator_), units_, config_.mode);
}

void Bpm::collect(const std::string& prefix, nn::ParameterList& out) const {
  allocator_.collect(prefix + ".allocator", out);
  for (std::size_t n = 0; n < units_.size(); ++n) {
    units_[n].collect(prefix + ".unit" + std::to_string(n + 1), out);
  }
}

std::size_t Bpm::parameter_count(const BackboneConfig& backbone, const BpmConfig& config) {
  return AllocatorPair::parameter_count(backbone.channel_widths) +
         static_cast<std::size_t>(config.units) * unit_parameter_count(config);
}

std::size_t Bpm::unit_parameter_count(const BpmConfig& config) {
  return BpmUnit::parameter_count(!config.share_allocator);
}

}  // namespace fslab
