#pragma once

// Bidirectional purification: a cascade of units refining the fused features F
// and the motion features G through interlaced decremental connections (IDC).
//
// Levels are addressed positionally, 1..K with K = 4 the coarsest, so the IDC
// at level k consumes the k..K members of the opposite branch.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "fslab/datamodel.hpp"
#include "fslab/encoder.hpp"
#include "fslab/nn.hpp"

namespace fslab {

inline constexpr int kBpmChannels = 32;

enum class BpmMode {
  kFullDuplex,        // F <- concat(G-set), G <- product(F-set)
  kFtoG,              // (App.+Mo.) => Mo.: only G is refined, guided by F
  kGtoF,              // (App.+Mo.) <= Mo.: only F is refined, guided by G
  kSelfPurification,  // F <- concat(F-set), G <- product(G-set); no exchange
};

std::string to_string(BpmMode mode);
BpmMode bpm_mode_from_string(const std::string& s);

struct BpmConfig {
  int units = 4;
  BpmMode mode = BpmMode::kFullDuplex;
  /// true: the allocator runs once before the cascade. false: every unit
  /// re-allocates its input state with its own allocator pair.
  bool share_allocator = true;

  void validate() const;
};

/// F^n and G^n at all K levels (32 channels each) after n units.
struct BpmState {
  std::vector<ag::Var> f;
  std::vector<ag::Var> g;
  int n = 0;
};

/// Number of tensors an IDC at positional level `level` combines: the level's
/// own feature plus one guidance map for every level from `level` to `top`.
constexpr int idc_arity(int level, int top) { return top - level + 2; }

/// Two 3x3 convs with 32 filters each (psi in the allocator).
struct Allocator {
  nn::Conv2d first;
  nn::Conv2d second;

  Allocator() = default;
  Allocator(int in_channels, nn::Rng& rng);
  ag::Var operator()(const ag::Var& x) const;
  void collect(const std::string& prefix, nn::ParameterList& out) const;
  static std::size_t parameter_count(int in_channels);
};

struct AllocatorPair {
  std::array<Allocator, kPyramidLevels> f;  // psi_F on Z_k
  std::array<Allocator, kPyramidLevels> g;  // psi_G on Y_k

  AllocatorPair() = default;
  AllocatorPair(const std::array<int, kPyramidLevels>& in_widths, nn::Rng& rng);
  void collect(const std::string& prefix, nn::ParameterList& out) const;
  static std::size_t parameter_count(const std::array<int, kPyramidLevels>& in_widths);
};

/// Guidance projections P (1x1 conv, then bilinear resize to the target level)
/// plus the closing 1x1 conv to 32 channels.
struct IdcParams {
  std::vector<nn::Conv2d> project;
  nn::Conv2d fuse;

  IdcParams() = default;
  /// `level` is positional (1..top); `concat` selects the input width of `fuse`.
  IdcParams(int level, int top, bool concat, nn::Rng& rng);
  void collect(const std::string& prefix, nn::ParameterList& out) const;
  static std::size_t parameter_count(int level, int top, bool concat);
};

/// fuse(concat[F_k, P(G_k), ..., P(G_K)]). `guidance` must hold exactly the
/// K - k + 1 maps of levels k..K, finest first.
ag::Var idc_concat(const ag::Var& f, std::span<const ag::Var> guidance, const IdcParams& params);

/// fuse(G_k * P(F_k) * ... * P(F_K)) with elementwise products.
ag::Var idc_multiply(const ag::Var& g, std::span<const ag::Var> guidance, const IdcParams& params);

struct BpmUnit {
  std::array<IdcParams, kPyramidLevels> concat;    // F-update branch
  std::array<IdcParams, kPyramidLevels> multiply;  // G-update branch
  std::optional<AllocatorPair> reallocate;         // only when the allocator is not shared

  BpmUnit() = default;
  BpmUnit(bool own_allocator, nn::Rng& rng);
  void collect(const std::string& prefix, nn::ParameterList& out) const;
  static std::size_t parameter_count(bool own_allocator);
};

/// F_k = psi_F(Z_k), G_k = psi_G(Y_k); returns the state with n = 0.
BpmState allocate(const FeaturePyramid& fused, const FeaturePyramid& motion,
                  const AllocatorPair& allocator);

/// One purification unit. Both branches read the input state only.
BpmState bpm_step(const BpmState& state, const BpmUnit& unit, BpmMode mode);

/// Applies `units` in order; an empty span returns the state unchanged.
BpmState bpm_chain(BpmState state, std::span<const BpmUnit> units, BpmMode mode);

class Bpm {
 public:
  Bpm() = default;
  Bpm(const BackboneConfig& backbone, const BpmConfig& config, nn::Rng& rng);

  BpmState operator()(const FeaturePyramid& fused, const FeaturePyramid& motion) const;

  const BpmConfig& config() const { return config_; }
  const AllocatorPair& allocator() const { return allocator_; }
  std::span<const BpmUnit> units() const { return units_; }
  std::vector<BpmUnit>& mutable_units() { return units_; }

  void collect(const std::string& prefix, nn::ParameterList& out) const;

  /// Allocator plus N units.
  static std::size_t parameter_count(const BackboneConfig& backbone, const BpmConfig& config);
  /// Trainable scalars added by one more unit.
  static std::size_t unit_parameter_count(const BpmConfig& config);

 private:
  BpmConfig config_;
  AllocatorPair allocator_;
  std::vector<BpmUnit> units_;
};

}  // namespace fslab
