#pragma once

// Segmentation and saliency metrics. Masks are 1 x H x W tensors; "binary"
// means every value is exactly 0 or 1. Real-valued maps lie in [0, 1].

#include <array>
#include <string>
#include <vector>

#include "fslab/tensor.hpp"

namespace fslab {

inline constexpr double kMetricEps = 1e-8;
inline constexpr double kBetaSquared = 0.3;
inline constexpr double kSAlpha = 0.5;
inline constexpr int kPrThresholds = 256;

/// IoU of two binary masks; 1 when both are empty.
double region_similarity(const Tensor& s_bin, const Tensor& gt);

/// Mask minus its erosion by a 3 x 3 square (pixels outside the canvas count as 0).
Tensor contour(const Tensor& mask);

/// Contour F-measure. A contour pixel matches when a contour pixel of the other
/// mask lies within Euclidean distance `tol_radius`. 1 when both contours are
/// empty, 0 when exactly one is.
double contour_accuracy(const Tensor& s_bin, const Tensor& gt, int tol_radius);

/// round(0.008 * image diagonal).
int default_contour_tolerance(int height, int width);

double mae(const Tensor& s, const Tensor& gt);

struct PrPoint {
  double precision = 0.0;
  double recall = 0.0;
};
using PrCurve = std::array<PrPoint, kPrThresholds>;

/// Entry T binarises round(255 s) > T. Precision is 1 for an empty
/// binarisation; recall is 0 for an empty ground truth.
PrCurve pr_curve(const Tensor& s, const Tensor& gt);

/// (1 + b2) P R / (b2 P + R); 0 when P = R = 0.
double f_beta(double precision, double recall, double beta_squared = kBetaSquared);
double f_beta_max(const PrCurve& curve, double beta_squared = kBetaSquared);

/// Enhanced-alignment score of a binary map against binary ground truth.
double e_measure(const Tensor& s_bin, const Tensor& gt);
/// Maximum of `e_measure` over the 256 binarisations of `s`.
double e_measure_max(const Tensor& s, const Tensor& gt);

/// Structure measure (1 - alpha) S_o + alpha S_r, clamped to [0, 1].
double s_measure(const Tensor& s, const Tensor& gt, double alpha = kSAlpha);
double s_object(const Tensor& s, const Tensor& gt);
double s_region(const Tensor& s, const Tensor& gt);

/// Binarises with strict "> threshold".
Tensor binarize(const Tensor& s, double threshold);

struct FrameMetrics {
  std::string clip_id;
  int t = 0;
  double j = 0.0;
  double f = 0.0;
  double mae = 0.0;
  double f_beta_max = 0.0;
  double e_max = 0.0;
  double s_alpha = 0.0;
  PrCurve pr{};
};

/// All per-frame values; J and F use s > 0.5. `tol_radius < 0` selects the default.
FrameMetrics evaluate_frame(const std::string& clip_id, int t, const Tensor& s, const Tensor& gt,
                            int tol_radius = -1);

struct ClipMetrics {
  std::string clip_id;
  int frames = 0;
  double mean_j = 0.0;
  double mean_f = 0.0;
};

struct MetricReport {
  std::vector<FrameMetrics> frames;
  std::vector<ClipMetrics> clips;
  double mean_j = 0.0;      // over clips of per-clip means
  double mean_f = 0.0;
  double mae = 0.0;         // over frames
  double f_beta_max = 0.0;  // over frames of per-frame maxima
  double e_max = 0.0;
  double s_alpha = 0.0;
  PrCurve pr{};             // per-threshold mean over frames
};

/// Clips keep their first-appearance order.
MetricReport aggregate(std::vector<FrameMetrics> frames);

}  // namespace fslab
