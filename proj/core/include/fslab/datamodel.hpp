#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fslab/autograd.hpp"
#include "fslab/tensor.hpp"

namespace fslab {

/// A file exists but its bytes cannot be decoded.
class DecodeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A file decodes but does not have the layout the reader requires.
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// One timestep of one clip: appearance frame t, flow from frame t to t+1,
/// and the ground-truth mask of frame t. All rasters share H x W.
struct ClipSample {
  std::string clip_id;
  int t = 0;
  Tensor appearance;  // 3 x H x W in [0, 1]
  Tensor flow;        // 2 x H x W, (u, v) pixels per frame
  Tensor gt_mask;     // 1 x H x W in {0, 1}

  int height() const { return gt_mask.height(); }
  int width() const { return gt_mask.width(); }

  /// Throws ContractError if any type invariant is broken.
  void validate() const;
};

enum class Branch { kAppearance, kMotion, kMerged };

inline constexpr int kPyramidLevels = 4;

/// Four feature maps at strides 4, 8, 16, 32 (hierarchy levels 2..5).
struct FeaturePyramid {
  Branch branch = Branch::kAppearance;
  std::vector<ag::Var> levels;

  const ag::Var& operator[](std::size_t i) const { return levels[i]; }
  std::size_t size() const { return levels.size(); }

  /// Level count, halving spatial extent and non-decreasing channel widths.
  void validate() const;
};

/// Sigmoid maps from the fused (S_A) and motion (S_M) decoders.
struct PredictionPair {
  ag::Var s_a;
  ag::Var s_m;
};

// ---- binary mask / frame files --------------------------------------------

/// Reads an 8-bit single-channel PNG; pixels > 127 become 1.
Tensor read_mask(const std::filesystem::path& path);

/// Writes a [0, 1] map as 8-bit grayscale. With a threshold the output is
/// binary (v > threshold -> 255); without one it is round(v * 255).
void write_mask(const Tensor& mask, const std::filesystem::path& path,
                std::optional<double> threshold);

/// Reads an 8-bit RGB (or grayscale, replicated) PNG scaled to [0, 1].
Tensor read_frame(const std::filesystem::path& path);
void write_frame(const Tensor& rgb, const std::filesystem::path& path);

// ---- flow rasters -----------------------------------------------------------
//
// Layout: "PIEH", int32 width, int32 height, then height * width interleaved
// (u, v) float32 pairs in row-major order. All integers and floats are
// little-endian.

Tensor read_flow(const std::filesystem::path& path);
void write_flow(const Tensor& flow, const std::filesystem::path& path);

// ---- clip directories -------------------------------------------------------

struct ClipLayout {
  static std::filesystem::path frame(const std::filesystem::path& root, const std::string& clip,
                                     int t);
  static std::filesystem::path flow(const std::filesystem::path& root, const std::string& clip,
                                    int t);
  static std::filesystem::path gt(const std::filesystem::path& root, const std::string& clip,
                                  int t);
  static std::string index_name(int t, const char* extension);
};

/// Loads every usable sample of `<root>/<clip>`; the final frame has no flow
/// partner and is dropped, so a T-frame clip yields T - 1 samples.
std::vector<ClipSample> load_clip(const std::filesystem::path& root, const std::string& clip);

}  // namespace fslab
