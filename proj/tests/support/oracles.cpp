#include "oracles.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <unistd.h>

namespace oracle {

Grid from_tensor(const fslab::Tensor& t) {
  Grid g{t.height(), t.width(), {}};
  g.v.assign(t.data(), t.data() + t.size());
  return g;
}

fslab::Tensor to_tensor(const Grid& g) { return fslab::Tensor({1, g.h, g.w}, g.v); }

double iou(const Grid& s, const Grid& g) {
  int inter = 0, uni = 0;
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) {
      if (s(y, x) == 1.0 && g(y, x) == 1.0) ++inter;
      if (s(y, x) == 1.0 || g(y, x) == 1.0) ++uni;
    }
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / uni;
}

double mae(const Grid& s, const Grid& g) {
  double total = 0.0;
  for (int y = 0; y < g.h; ++y) {
    for (int x = 0; x < g.w; ++x) total += std::fabs(s(y, x) - g(y, x));
  }
  return total / (g.h * g.w);
}

Grid boundary(const Grid& m) {
  Grid out{m.h, m.w, std::vector<double>(m.v.size(), 0.0)};
  auto on = [&](int y, int x) { return y >= 0 && y < m.h && x >= 0 && x < m.w && m(y, x) == 1.0; };
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) {
      if (!on(y, x)) continue;
      const bool edge = !on(y - 1, x - 1) || !on(y - 1, x) || !on(y - 1, x + 1) ||
                        !on(y, x - 1) || !on(y, x + 1) || !on(y + 1, x - 1) ||
                        !on(y + 1, x) || !on(y + 1, x + 1);
      out(y, x) = edge ? 1.0 : 0.0;
    }
  }
  return out;
}

namespace {

std::vector<std::pair<int, int>> points(const Grid& m) {
  std::vector<std::pair<int, int>> p;
  for (int y = 0; y < m.h; ++y) {
    for (int x = 0; x < m.w; ++x) {
      if (m(y, x) == 1.0) p.emplace_back(y, x);
    }
  }
  return p;
}

double matched(const std::vector<std::pair<int, int>>& a, const std::vector<std::pair<int, int>>& b,
               int radius) {
  int hits = 0;
  for (const auto& [ay, ax] : a) {
    for (const auto& [by, bx] : b) {
      const double d = std::sqrt(static_cast<double>((ay - by) * (ay - by) + (ax - bx) * (ax - bx)));
      if (d <= radius + 1e-12) {
        ++hits;
        break;
      }
    }
  }
  return static_cast<double>(hits) / static_cast<double>(a.size());
}

}  // namespace

double contour_f(const Grid& s, const Grid& g, int radius) {
  const auto cs = points(boundary(s)), cg = points(boundary(g));
  if (cs.empty() && cg.empty()) return 1.0;
  if (cs.empty() || cg.empty()) return 0.0;
  const double p = matched(cs, cg, radius), r = matched(cg, cs, radius);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

std::array<Pr, 256> pr(const Grid& s, const Grid& g) {
  std::array<Pr, 256> out{};
  for (int t = 0; t < 256; ++t) {
    int tp = 0, predicted = 0, positive = 0;
    for (int y = 0; y < g.h; ++y) {
      for (int x = 0; x < g.w; ++x) {
        const bool on = std::round(s(y, x) * 255.0) > t;
        const bool fg = g(y, x) == 1.0;
        tp += on && fg;
        predicted += on;
        positive += fg;
      }
    }
    out[t].p = predicted == 0 ? 1.0 : static_cast<double>(tp) / predicted;
    out[t].r = positive == 0 ? 0.0 : static_cast<double>(tp) / positive;
  }
  return out;
}

double f_beta_max(const Grid& s, const Grid& g) {
  double best = 0.0;
  for (const Pr& e : pr(s, g)) {
    const double denom = 0.3 * e.p + e.r;
    if (denom > 0.0) best = std::max(best, 1.3 * e.p * e.r / denom);
  }
  return best;
}

double e_measure(const Grid& s_bin, const Grid& g) {
  const int n = g.h * g.w;
  double mg = 0.0, ms = 0.0;
  for (int i = 0; i < n; ++i) {
    mg += g.v[i];
    ms += s_bin.v[i];
  }
  mg /= n;
  ms /= n;
  if (mg == 0.0) return 1.0 - ms;
  if (mg == 1.0) return ms;
  // Bias matrices, alignment matrix, enhanced matrix, then the mean.
  std::vector<double> phi_s(n), phi_g(n), enhanced(n);
  for (int i = 0; i < n; ++i) {
    phi_s[i] = s_bin.v[i] - ms;
    phi_g[i] = g.v[i] - mg;
  }
  for (int i = 0; i < n; ++i) {
    const double align = 2.0 * phi_g[i] * phi_s[i] / (phi_g[i] * phi_g[i] + phi_s[i] * phi_s[i] + 1e-8);
    enhanced[i] = std::pow(align + 1.0, 2) / 4.0;
  }
  double total = 0.0;
  for (double e : enhanced) total += e;
  return total / n;
}

double e_measure_max(const Grid& s, const Grid& g) {
  double best = 0.0;
  for (int t = 0; t < 256; ++t) {
    Grid b = s;
    for (auto& v : b.v) v = std::round(v * 255.0) > t ? 1.0 : 0.0;
    best = std::max(best, e_measure(b, g));
  }
  return best;
}

namespace {

const double kEps = std::numeric_limits<double>::epsilon();

double object(const std::vector<double>& x) {
  if (x.empty()) return 0.0;
  double mean = 0.0;
  for (double v : x) mean += v;
  mean /= x.size();
  double var = 0.0;
  for (double v : x) var += (v - mean) * (v - mean);
  const double sigma = x.size() > 1 ? std::sqrt(var / (x.size() - 1)) : 0.0;
  return 2.0 * mean / (mean * mean + 1.0 + sigma + kEps);
}

double s_object(const Grid& s, const Grid& g) {
  std::vector<double> fg, bg;
  double u = 0.0;
  for (int i = 0; i < g.h * g.w; ++i) {
    if (g.v[i] == 1.0) {
      fg.push_back(s.v[i]);
      u += 1.0;
    } else {
      bg.push_back(1.0 - s.v[i]);
    }
  }
  u /= g.h * g.w;
  return u * object(fg) + (1.0 - u) * object(bg);
}

// Block [y0, y1) x [x0, x1), 0-based.
double ssim(const Grid& s, const Grid& g, int y0, int y1, int x0, int x1) {
  const int n = (y1 - y0) * (x1 - x0);
  double x = 0.0, y = 0.0;
  for (int r = y0; r < y1; ++r) {
    for (int c = x0; c < x1; ++c) {
      x += s(r, c);
      y += g(r, c);
    }
  }
  x /= n;
  y /= n;
  double sx2 = 0.0, sy2 = 0.0, sxy = 0.0;
  for (int r = y0; r < y1; ++r) {
    for (int c = x0; c < x1; ++c) {
      sx2 += (s(r, c) - x) * (s(r, c) - x);
      sy2 += (g(r, c) - y) * (g(r, c) - y);
      sxy += (s(r, c) - x) * (g(r, c) - y);
    }
  }
  sx2 /= n - 1 + kEps;
  sy2 /= n - 1 + kEps;
  sxy /= n - 1 + kEps;
  const double alpha = 4.0 * x * y * sxy;
  const double beta = (x * x + y * y) * (sx2 + sy2);
  if (alpha != 0.0) return alpha / (beta + kEps);
  return beta == 0.0 ? 1.0 : 0.0;
}

double s_region(const Grid& s, const Grid& g) {
  double total = 0.0, col = 0.0, row = 0.0;
  for (int r = 0; r < g.h; ++r) {
    for (int c = 0; c < g.w; ++c) {
      total += g(r, c);
      col += g(r, c) * (c + 1);
      row += g(r, c) * (r + 1);
    }
  }
  const int X = total == 0.0 ? static_cast<int>(std::floor(g.w / 2.0 + 0.5))
                             : static_cast<int>(std::floor(col / total + 0.5));
  const int Y = total == 0.0 ? static_cast<int>(std::floor(g.h / 2.0 + 0.5))
                             : static_cast<int>(std::floor(row / total + 0.5));
  const double area = static_cast<double>(g.w) * g.h;
  const double w1 = static_cast<double>(X) * Y / area;
  const double w2 = static_cast<double>(g.w - X) * Y / area;
  const double w3 = static_cast<double>(X) * (g.h - Y) / area;
  const double w4 = 1.0 - w1 - w2 - w3;
  double q = 0.0;
  if (w1 > 0) q += w1 * ssim(s, g, 0, Y, 0, X);
  if (w2 > 0) q += w2 * ssim(s, g, 0, Y, X, g.w);
  if (w3 > 0) q += w3 * ssim(s, g, Y, g.h, 0, X);
  if (X < g.w && Y < g.h) q += w4 * ssim(s, g, Y, g.h, X, g.w);
  return q;
}

}  // namespace

double s_measure(const Grid& s, const Grid& g) {
  double y = 0.0;
  for (double v : g.v) y += v;
  y /= g.v.size();
  if (y == 0.0) {
    double x = 0.0;
    for (double v : s.v) x += v;
    return 1.0 - x / s.v.size();
  }
  if (y == 1.0) {
    double x = 0.0;
    for (double v : s.v) x += v;
    return x / s.v.size();
  }
  const double q = 0.5 * s_object(s, g) + 0.5 * s_region(s, g);
  return std::max(q, 0.0);
}

std::pair<Grid, Grid> random_pair(std::mt19937_64& rng, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Grid s{h, w, std::vector<double>(static_cast<std::size_t>(h) * w)};
  Grid g = s;
  const double kind = u(rng);
  // A random rectangle gives spatially coherent ground truth; salt noise on
  // top keeps the contour and region terms non-trivial.
  const int y0 = static_cast<int>(u(rng) * h), x0 = static_cast<int>(u(rng) * w);
  const int y1 = y0 + 1 + static_cast<int>(u(rng) * (h - y0));
  const int x1 = x0 + 1 + static_cast<int>(u(rng) * (w - x0));
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      double fg = (y >= y0 && y < y1 && x >= x0 && x < x1) ? 1.0 : 0.0;
      if (u(rng) < 0.1) fg = 1.0 - fg;
      if (kind < 0.05) fg = 0.0;
      else if (kind < 0.1) fg = 1.0;
      g(y, x) = fg;
      // Noisy prediction correlated with the ground truth; some exact 0/1 and
      // some values on the 255 grid so threshold ties occur.
      double v = 0.6 * fg + 0.4 * u(rng);
      const double r = u(rng);
      if (r < 0.1) v = 0.0;
      else if (r < 0.2) v = 1.0;
      else if (r < 0.3) v = std::round(v * 255.0) / 255.0;
      s(y, x) = v;
    }
  }
  return {s, g};
}

fslab::Tensor random_tensor(std::mt19937_64& rng, int c, int h, int w, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  fslab::Tensor t(c, h, w);
  for (auto& v : t.values()) v = u(rng);
  return t;
}

GradCheck check_gradients(const std::function<fslab::ag::Var()>& loss,
                          const fslab::nn::ParameterList& params, std::size_t per_tensor,
                          std::uint64_t seed, double h) {
  for (const auto& p : params) {
    auto var = p.var;
    var.zero_grad();
  }
  const fslab::ag::Var base = loss();
  // Roundoff in a central difference is about |L| * eps / h per coordinate;
  // gradients below a generous multiple of that cannot be resolved.
  const double noise = 1e3 * std::abs(base.value()[0]) * std::numeric_limits<double>::epsilon() / h;
  fslab::ag::backward(base);
  std::vector<fslab::Tensor> analytic;
  for (const auto& p : params) {
    analytic.push_back(p.var.grad().empty() ? fslab::Tensor(p.var.shape()) : p.var.grad());
  }

  GradCheck out;
  std::mt19937_64 rng(seed);
  fslab::ag::NoGradGuard no_grad;
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto var = params[k].var;
    fslab::Tensor& value = var.mutable_value();
    std::vector<std::size_t> idx(value.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::shuffle(idx.begin(), idx.end(), rng);
    idx.resize(std::min(per_tensor, idx.size()));
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : idx) {
      const double saved = value[i];
      value[i] = saved + h;
      const double up = loss().value()[0];
      value[i] = saved - h;
      const double down = loss().value()[0];
      value[i] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[k][i];
      diff2 += (a - numeric) * (a - numeric);
      a2 += a * a;
      n2 += numeric * numeric;
      ++out.checked;
    }
    const double scale = std::max(std::sqrt(std::max(a2, n2)),
                                  noise * std::sqrt(static_cast<double>(idx.size())));
    if (scale > 1e-10 && std::sqrt(diff2) / scale > out.worst_relative) {
      out.worst_relative = std::sqrt(diff2) / scale;
      out.worst_name = params[k].name;
    }
    if (std::getenv("FSLAB_GRADCHECK_VERBOSE")) {
      std::fprintf(stderr, "%s rel=%g scale=%g\n", params[k].name.c_str(),
                   scale > 0 ? std::sqrt(diff2) / scale : 0.0, scale);
    }
  }
  return out;
}

std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() /
                   ("fslab_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
