#include "fslab/network.hpp"

#include <optional>

namespace fslab {

using ag::Var;

void NetworkConfig::validate() const {
  backbone.validate();
  bpm.validate();
}

std::string to_string(Stage stage) {
  switch (stage) {
    case Stage::kSpatial: return "spatial-pretrain";
    case Stage::kTemporal: return "temporal-pretrain";
    case Stage::kJoint: return "joint";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  if (s == "spatial-pretrain") return Stage::kSpatial;
  if (s == "temporal-pretrain") return Stage::kTemporal;
  if (s == "joint") return Stage::kJoint;
  throw ContractError("unknown stage '" + s + "'");
}

namespace {

// Each module draws from its own stream so that, for example, changing the
// number of BPM units leaves encoder and decoder initialisation untouched.
template <typename T, typename... Args>
T build(std::uint64_t seed, const char* stream, Args&&... args) {
  nn::Rng rng = nn::make_rng(seed, stream);
  return T(std::forward<Args>(args)..., rng);
}

std::vector<Var> allocate_levels(const FeaturePyramid& p,
                                 const std::array<Allocator, kPyramidLevels>& psi) {
  std::vector<Var> out;
  for (std::size_t k = 0; k < kPyramidLevels; ++k) out.push_back(psi[k](p[k]));
  return out;
}

bool has_prefix(const std::string& name, const std::string& prefix) {
  return name.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace

FsNet::FsNet(const NetworkConfig& config) : config_(config) {
  config.validate();
  const auto seed = config.seed;
  app_encoder_ = build<BranchEncoder>(seed, "app_encoder", config.backbone, Branch::kAppearance);
  mot_encoder_ = build<BranchEncoder>(seed, "mot_encoder", config.backbone, Branch::kMotion);
  merge_ = build<MergeBlocks>(seed, "merge", config.backbone, config.merge_branch);
  rcam_ = build<Rcam>(seed, "rcam", config.backbone);
  bpm_ = build<Bpm>(seed, "bpm", config.backbone, config.bpm);
  decoder_a_ = build<Decoder>(seed, "decoder_a");
  decoder_m_ = build<Decoder>(seed, "decoder_m");
}

PredictionPair FsNet::forward_impl(const Var& appearance, const Var& motion,
                                   std::uint64_t* bpm_macs) const {
  require_same_shape(appearance.shape(), motion.shape(), "FsNet::forward");
  const FeaturePyramid x = app_encoder_(appearance);
  const FeaturePyramid y = mot_encoder_(motion);
  const FeaturePyramid z = rcam_.forward(x, y, merge_, config_.rcam_mode);
  BpmState state = allocate(z, y, bpm_.allocator());
  {
    std::optional<ag::MacCounter> counter;
    if (bpm_macs) counter.emplace();
    state = bpm_chain(std::move(state), bpm_.units(), config_.bpm.mode);
    if (bpm_macs) *bpm_macs = counter->macs();
  }
  const Shape s = appearance.shape();
  return {decoder_a_(state.f, s.h, s.w), decoder_m_(state.g, s.h, s.w)};
}

PredictionPair FsNet::forward(const Var& appearance, const Var& motion) const {
  return forward_impl(appearance, motion, nullptr);
}

Var FsNet::forward_appearance(const Var& appearance) const {
  const FeaturePyramid x = app_encoder_(appearance);
  const auto f = allocate_levels(x, bpm_.allocator().f);
  return decoder_a_(f, appearance.shape().h, appearance.shape().w);
}

Var FsNet::forward_motion(const Var& motion) const {
  const FeaturePyramid y = mot_encoder_(motion);
  const auto g = allocate_levels(y, bpm_.allocator().g);
  return decoder_m_(g, motion.shape().h, motion.shape().w);
}

nn::ParameterList FsNet::parameters() const {
  nn::ParameterList out;
  app_encoder_.collect("app_encoder", out);
  mot_encoder_.collect("mot_encoder", out);
  merge_.collect("merge", out);
  rcam_.collect("rcam", out);
  bpm_.collect("bpm", out);
  decoder_a_.collect("decoder_a", out);
  decoder_m_.collect("decoder_m", out);
  return out;
}

nn::ParameterList FsNet::parameters(Stage stage) const {
  if (stage == Stage::kJoint) return parameters();
  const bool spatial = stage == Stage::kSpatial;
  const std::string prefixes[] = {
      spatial ? "app_encoder." : "mot_encoder.",
      spatial ? "bpm.allocator.psi_f" : "bpm.allocator.psi_g",
      spatial ? "decoder_a." : "decoder_m.",
  };
  nn::ParameterList out;
  for (auto& p : parameters()) {
    for (const auto& prefix : prefixes) {
      if (has_prefix(p.name, prefix)) {
        out.push_back(p);
        break;
      }
    }
  }
  return out;
}

FlopCount FsNet::flops(int height, int width) const {
  ag::NoGradGuard no_grad;
  const Var input = Var::constant(Tensor(3, height, width, 0.5));
  FlopCount out;
  std::uint64_t bpm_macs = 0;
  ag::MacCounter counter;
  forward_impl(input, input, &bpm_macs);
  out.total = 2 * counter.macs();
  out.bpm = 2 * bpm_macs;
  return out;
}

ParameterBreakdown FsNet::parameter_breakdown(const NetworkConfig& config) {
  ParameterBreakdown b;
  b.encoders = 2 * BranchEncoder::parameter_count(config.backbone);
  b.merge = MergeBlocks::parameter_count(config.backbone, config.merge_branch);
  b.rcam = Rcam::parameter_count(config.backbone);
  b.allocator = AllocatorPair::parameter_count(config.backbone.channel_widths);
  b.bpm_units = static_cast<std::size_t>(config.bpm.units) * Bpm::unit_parameter_count(config.bpm);
  b.decoders = 2 * Decoder::parameter_count();
  return b;
}

}  // namespace fslab
