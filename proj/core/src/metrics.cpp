#include "fslab/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

namespace fslab {

namespace {

// The structure measure's reference code guards with machine epsilon.
constexpr double kMachineEps = std::numeric_limits<double>::epsilon();

void require_mask_shape(const Tensor& a, const Tensor& b, const char* what) {
  require_same_shape(a.shape(), b.shape(), what);
  if (a.channels() != 1) throw ContractError(std::string(what) + ": expected 1 x H x W maps");
}

void require_binary(const Tensor& m, const char* what) {
  for (double v : m.values()) {
    if (v != 0.0 && v != 1.0) throw ContractError(std::string(what) + ": mask is not binary");
  }
}

std::vector<int> to_255(const Tensor& s) {
  std::vector<int> out(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) {
    out[i] = static_cast<int>(std::lround(std::clamp(s[i], 0.0, 1.0) * 255.0));
  }
  return out;
}

struct Moments {
  double mean = 0.0;
  double std = 0.0;  // N - 1 normalisation, 0 for fewer than two samples
};

Moments moments(const std::vector<double>& v) {
  Moments m;
  if (v.empty()) return m;
  double sum = 0.0;
  for (double x : v) sum += x;
  m.mean = sum / static_cast<double>(v.size());
  if (v.size() < 2) return m;
  double ss = 0.0;
  for (double x : v) ss += (x - m.mean) * (x - m.mean);
  m.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
  return m;
}

double object_score(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  const Moments m = moments(values);
  return 2.0 * m.mean / (m.mean * m.mean + 1.0 + m.std + kMachineEps);
}

// Region SSIM between a block of the prediction and of the ground truth.
double block_ssim(const std::vector<double>& s, const std::vector<double>& g) {
  const double n = static_cast<double>(s.size());
  double x = 0.0, y = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    x += s[i];
    y += g[i];
  }
  x /= n;
  y /= n;
  double sx = 0.0, sy = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    sx += (s[i] - x) * (s[i] - x);
    sy += (g[i] - y) * (g[i] - y);
    sxy += (s[i] - x) * (g[i] - y);
  }
  const double denom = n - 1.0 + kMachineEps;
  sx /= denom;
  sy /= denom;
  sxy /= denom;
  const double a = 4.0 * x * y * sxy;
  const double b = (x * x + y * y) * (sx + sy);
  if (a != 0.0) return a / (b + kMachineEps);
  if (b == 0.0) return 1.0;
  return 0.0;
}

}  // namespace

Tensor binarize(const Tensor& s, double threshold) {
  Tensor out(s.shape());
  for (std::size_t i = 0; i < s.size(); ++i) out[i] = s[i] > threshold ? 1.0 : 0.0;
  return out;
}

double region_similarity(const Tensor& s_bin, const Tensor& gt) {
  require_mask_shape(s_bin, gt, "region_similarity");
  require_binary(s_bin, "region_similarity");
  require_binary(gt, "region_similarity");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const bool a = s_bin[i] > 0.5, b = gt[i] > 0.5;
    inter += a && b;
    uni += a || b;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

Tensor contour(const Tensor& mask) {
  const int h = mask.height(), w = mask.width();
  Tensor out(1, h, w);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (mask.at(0, y, x) <= 0.5) continue;
      bool interior = true;
      for (int dy = -1; dy <= 1 && interior; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int yy = y + dy, xx = x + dx;
          if (yy < 0 || yy >= h || xx < 0 || xx >= w || mask.at(0, yy, xx) <= 0.5) {
            interior = false;
            break;
          }
        }
      }
      if (!interior) out.at(0, y, x) = 1.0;
    }
  }
  return out;
}

namespace {

// Fraction of `from` contour pixels with a `to` contour pixel within the radius.
double matched_fraction(const Tensor& from, const Tensor& to, int radius, std::size_t* count) {
  const int h = from.height(), w = from.width();
  std::vector<std::pair<int, int>> disk;
  for (int dy = -radius; dy <= radius; ++dy) {
    for (int dx = -radius; dx <= radius; ++dx) {
      if (dx * dx + dy * dy <= radius * radius) disk.emplace_back(dy, dx);
    }
  }
  std::size_t total = 0, hit = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (from.at(0, y, x) <= 0.5) continue;
      ++total;
      for (const auto& [dy, dx] : disk) {
        const int yy = y + dy, xx = x + dx;
        if (yy >= 0 && yy < h && xx >= 0 && xx < w && to.at(0, yy, xx) > 0.5) {
          ++hit;
          break;
        }
      }
    }
  }
  *count = total;
  return total == 0 ? 0.0 : static_cast<double>(hit) / static_cast<double>(total);
}

}  // namespace

double contour_accuracy(const Tensor& s_bin, const Tensor& gt, int tol_radius) {
  require_mask_shape(s_bin, gt, "contour_accuracy");
  if (tol_radius < 0) throw ContractError("contour_accuracy: negative tolerance");
  const Tensor cs = contour(s_bin), cg = contour(gt);
  std::size_t ns = 0, ng = 0;
  const double precision = matched_fraction(cs, cg, tol_radius, &ns);
  const double recall = matched_fraction(cg, cs, tol_radius, &ng);
  if (ns == 0 && ng == 0) return 1.0;
  if (ns == 0 || ng == 0) return 0.0;
  if (precision + recall == 0.0) return 0.0;
  return 2.0 * precision * recall / (precision + recall);
}

int default_contour_tolerance(int height, int width) {
  return static_cast<int>(std::lround(0.008 * std::hypot(height, width)));
}

double mae(const Tensor& s, const Tensor& gt) {
  require_mask_shape(s, gt, "mae");
  double total = 0.0;
  for (std::size_t i = 0; i < s.size(); ++i) total += std::abs(s[i] - gt[i]);
  return total / static_cast<double>(s.size());
}

PrCurve pr_curve(const Tensor& s, const Tensor& gt) {
  require_mask_shape(s, gt, "pr_curve");
  const std::vector<int> q = to_255(s);
  // Histograms of quantised values over foreground and over all pixels; entry
  // T counts pixels with value > T via suffix sums.
  std::array<std::size_t, 257> fg{}, all{};
  std::size_t positives = 0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    ++all[q[i]];
    if (gt[i] > 0.5) {
      ++fg[q[i]];
      ++positives;
    }
  }
  PrCurve curve{};
  std::size_t tp = 0, predicted = 0;
  for (int t = 255; t >= 0; --t) {
    tp += fg[t + 1];
    predicted += all[t + 1];
    curve[t].precision =
        predicted == 0 ? 1.0 : static_cast<double>(tp) / static_cast<double>(predicted);
    curve[t].recall = positives == 0 ? 0.0 : static_cast<double>(tp) / static_cast<double>(positives);
  }
  return curve;
}

double f_beta(double precision, double recall, double beta_squared) {
  if (precision == 0.0 && recall == 0.0) return 0.0;
  return (1.0 + beta_squared) * precision * recall / (beta_squared * precision + recall);
}

double f_beta_max(const PrCurve& curve, double beta_squared) {
  double best = 0.0;
  for (const PrPoint& p : curve) best = std::max(best, f_beta(p.precision, p.recall, beta_squared));
  return best;
}

double e_measure(const Tensor& s_bin, const Tensor& gt) {
  require_mask_shape(s_bin, gt, "e_measure");
  const double n = static_cast<double>(gt.size());
  const double mean_g = gt.mean();
  const double mean_s = s_bin.mean();
  if (mean_g == 0.0) return 1.0 - mean_s;
  if (mean_g == 1.0) return mean_s;
  double total = 0.0;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    const double a = s_bin[i] - mean_s;
    const double b = gt[i] - mean_g;
    const double xi = 2.0 * a * b / (a * a + b * b + kMetricEps);
    total += (xi + 1.0) * (xi + 1.0) / 4.0;
  }
  return total / n;
}

double e_measure_max(const Tensor& s, const Tensor& gt) {
  require_mask_shape(s, gt, "e_measure_max");
  const std::vector<int> q = to_255(s);
  Tensor bin(s.shape());
  double best = 0.0;
  for (int t = 0; t < kPrThresholds; ++t) {
    for (std::size_t i = 0; i < q.size(); ++i) bin[i] = q[i] > t ? 1.0 : 0.0;
    best = std::max(best, e_measure(bin, gt));
  }
  return best;
}

double s_object(const Tensor& s, const Tensor& gt) {
  std::vector<double> fg, bg;
  for (std::size_t i = 0; i < gt.size(); ++i) {
    if (gt[i] > 0.5) {
      fg.push_back(s[i]);
    } else {
      bg.push_back(1.0 - s[i]);
    }
  }
  const double u = static_cast<double>(fg.size()) / static_cast<double>(gt.size());
  return u * object_score(fg) + (1.0 - u) * object_score(bg);
}

double s_region(const Tensor& s, const Tensor& gt) {
  const int h = gt.height(), w = gt.width();
  double total = 0.0, sx = 0.0, sy = 0.0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double g = gt.at(0, y, x);
      total += g;
      sx += g * (x + 1);
      sy += g * (y + 1);
    }
  }
  // Split point in 1-based pixel units: columns [1, cx] | (cx, w], rows likewise.
  int cx, cy;
  if (total == 0.0) {
    cx = static_cast<int>(std::lround(w / 2.0));
    cy = static_cast<int>(std::lround(h / 2.0));
  } else {
    cx = static_cast<int>(std::lround(sx / total));
    cy = static_cast<int>(std::lround(sy / total));
  }
  const double area = static_cast<double>(w) * h;
  const int x_lo[2] = {0, cx}, x_hi[2] = {cx, w};
  const int y_lo[2] = {0, cy}, y_hi[2] = {cy, h};
  double score = 0.0;
  for (int r = 0; r < 2; ++r) {
    for (int c = 0; c < 2; ++c) {
      std::vector<double> ps, gs;
      for (int y = y_lo[r]; y < y_hi[r]; ++y) {
        for (int x = x_lo[c]; x < x_hi[c]; ++x) {
          ps.push_back(s.at(0, y, x));
          gs.push_back(gt.at(0, y, x));
        }
      }
      if (ps.empty()) continue;
      const double weight = static_cast<double>(ps.size()) / area;
      score += weight * block_ssim(ps, gs);
    }
  }
  return score;
}

double s_measure(const Tensor& s, const Tensor& gt, double alpha) {
  require_mask_shape(s, gt, "s_measure");
  const double y = gt.mean();
  if (y == 0.0) return std::clamp(1.0 - s.mean(), 0.0, 1.0);
  if (y == 1.0) return std::clamp(s.mean(), 0.0, 1.0);
  const double q = (1.0 - alpha) * s_object(s, gt) + alpha * s_region(s, gt);
  return std::clamp(q, 0.0, 1.0);
}

FrameMetrics evaluate_frame(const std::string& clip_id, int t, const Tensor& s, const Tensor& gt,
                            int tol_radius) {
  require_mask_shape(s, gt, "evaluate_frame");
  const Tensor s_bin = binarize(s, 0.5);
  const int tol = tol_radius < 0 ? default_contour_tolerance(gt.height(), gt.width()) : tol_radius;
  FrameMetrics m;
  m.clip_id = clip_id;
  m.t = t;
  m.j = region_similarity(s_bin, gt);
  m.f = contour_accuracy(s_bin, gt, tol);
  m.mae = mae(s, gt);
  m.pr = pr_curve(s, gt);
  m.f_beta_max = f_beta_max(m.pr);
  m.e_max = e_measure_max(s, gt);
  m.s_alpha = s_measure(s, gt);
  return m;
}

MetricReport aggregate(std::vector<FrameMetrics> frames) {
  MetricReport r;
  if (frames.empty()) return r;
  std::map<std::string, std::size_t> index;
  for (const FrameMetrics& f : frames) {
    auto [it, inserted] = index.emplace(f.clip_id, r.clips.size());
    if (inserted) r.clips.push_back({f.clip_id, 0, 0.0, 0.0});
    ClipMetrics& c = r.clips[it->second];
    ++c.frames;
    c.mean_j += f.j;
    c.mean_f += f.f;
    r.mae += f.mae;
    r.f_beta_max += f.f_beta_max;
    r.e_max += f.e_max;
    r.s_alpha += f.s_alpha;
    for (int t = 0; t < kPrThresholds; ++t) {
      r.pr[t].precision += f.pr[t].precision;
      r.pr[t].recall += f.pr[t].recall;
    }
  }
  for (ClipMetrics& c : r.clips) {
    c.mean_j /= c.frames;
    c.mean_f /= c.frames;
    r.mean_j += c.mean_j;
    r.mean_f += c.mean_f;
  }
  const double nc = static_cast<double>(r.clips.size());
  const double nf = static_cast<double>(frames.size());
  r.mean_j /= nc;
  r.mean_f /= nc;
  r.mae /= nf;
  r.f_beta_max /= nf;
  r.e_max /= nf;
  r.s_alpha /= nf;
  for (PrPoint& p : r.pr) {
    p.precision /= nf;
    p.recall /= nf;
  }
  r.frames = std::move(frames);
  return r;
}

}  // namespace fslab
