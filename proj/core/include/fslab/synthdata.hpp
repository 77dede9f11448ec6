#pragma once

// Moving-shapes clips with exact masks and an analytic flow oracle.
//
// Pixel (x, y) is sampled at its integer coordinates. Foreground shapes move
// rigidly (translation plus rotation about their centre); the background and
// the static distractors painted on it translate together by a per-frame
// global jitter. Surface textures live in object coordinates, so frame t+1
// sampled at p + M_t(p) reproduces frame t at p up to photometric jitter.

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "fslab/datamodel.hpp"
#include "fslab/tensor.hpp"

namespace fslab {

/// A scene description that cannot be rendered (shape leaves the canvas, ...).
class SpecError : public ContractError {
 public:
  using ContractError::ContractError;
};

enum class ShapeKind { kDisk, kRectangle, kPolygon };

struct ShapeSpec {
  ShapeKind kind = ShapeKind::kDisk;
  double cx = 0.0, cy = 0.0;  // centre at t = 0
  double size = 8.0;          // disk radius, rectangle half-width, polygon circumradius
  double aspect = 1.0;        // rectangle half-height / half-width
  int sides = 5;              // polygon only
  double angle = 0.0;         // orientation at t = 0, radians
  double vx = 0.0, vy = 0.0;  // px / frame
  double omega = 0.0;         // rad / frame
  std::array<double, 3> color{0.5, 0.5, 0.5};
  double texture_amplitude = 0.0;
  double texture_fx = 0.0, texture_fy = 0.0, texture_phase = 0.0;

  /// Radius of the smallest centred disk containing the shape.
  double bounding_radius() const;
  /// Point-in-shape test in object coordinates.
  bool contains_local(double qx, double qy) const;
};

struct SceneSpec {
  std::uint64_t seed = 0;
  int n_frames = 8;
  int height = 64;
  int width = 64;
  std::vector<ShapeSpec> foreground;   // drawn back to front
  std::vector<ShapeSpec> distractors;  // static relative to the background
  ShapeSpec background;                // only colour and texture are used
  double background_jitter = 0.0;      // max |global shift| per frame and axis, px
  double photometric_jitter = 0.0;     // max |brightness offset| per frame

  /// Throws SpecError on T < 2, empty canvas or a foreground shape that comes
  /// closer than 1 px to the border at any frame.
  void validate() const;

  /// A random scene: one moving foreground shape of radius 12..20 (at 64 px),
  /// one or two small distractors, textured background, small jitter.
  static SceneSpec random(std::uint64_t seed, int height = 64, int width = 64, int n_frames = 8);
};

struct RenderedClip {
  std::vector<Tensor> frames;  // T x (3 x H x W)
  std::vector<Tensor> masks;   // T x (1 x H x W), union of foreground support
  std::vector<Tensor> flows;   // T - 1 x (2 x H x W), flow from t to t + 1
  /// Surface id per pixel and frame: 0 background, 1.. foreground shapes,
  /// 1000 + i distractor i.
  std::vector<std::vector<int>> labels;

  /// The T - 1 usable samples; the final frame has no flow partner.
  std::vector<ClipSample> samples(const std::string& clip_id) const;
};

RenderedClip render_clip(const SceneSpec& spec);

struct CorpusConfig {
  int n_clips = 36;
  /// pretrain-spatial, pretrain-temporal, train, val.
  std::array<double, 4> split_ratios{5.0 / 36, 5.0 / 36, 20.0 / 36, 6.0 / 36};
  std::uint64_t seed = 0;
  int height = 64;
  int width = 64;
  int n_frames = 8;

  void validate() const;
};

inline constexpr std::array<const char*, 4> kSplitNames = {"pretrain-spatial", "pretrain-temporal",
                                                           "train", "val"};

struct Manifest {
  std::uint64_t seed = 0;
  int height = 0;
  int width = 0;
  int n_frames = 0;
  std::map<std::string, std::vector<std::string>> splits;

  const std::vector<std::string>& split(const std::string& name) const;
  void save(const std::filesystem::path& path) const;
  static Manifest load(const std::filesystem::path& path);
};

inline constexpr const char* kManifestName = "manifest.json";

/// Clip counts per split by the largest-remainder rule (ties to the earlier split).
std::array<int, 4> split_counts(int n_clips, const std::array<double, 4>& ratios);

/// Renders the corpus into `out_dir` and writes `manifest.json`. Refuses a
/// non-empty `out_dir` unless `force` (which clears it first).
Manifest build_corpus(const CorpusConfig& config, const std::filesystem::path& out_dir,
                      bool force);

}  // namespace fslab
