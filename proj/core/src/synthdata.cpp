#include "fslab/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <random>

#include "fslab/nn.hpp"
#include "json.hpp"

namespace fslab {

namespace fs = std::filesystem;
using nlohmann::json;

double ShapeSpec::bounding_radius() const {
  switch (kind) {
    case ShapeKind::kDisk: return size;
    case ShapeKind::kRectangle: return std::hypot(size, size * aspect);
    case ShapeKind::kPolygon: return size;
  }
  return size;
}

bool ShapeSpec::contains_local(double qx, double qy) const {
  switch (kind) {
    case ShapeKind::kDisk: return qx * qx + qy * qy <= size * size;
    case ShapeKind::kRectangle: return std::abs(qx) <= size && std::abs(qy) <= size * aspect;
    case ShapeKind::kPolygon: {
      const double apothem = size * std::cos(std::numbers::pi / sides);
      for (int i = 0; i < sides; ++i) {
        const double a = (2 * i + 1) * std::numbers::pi / sides;
        if (qx * std::cos(a) + qy * std::sin(a) > apothem) return false;
      }
      return true;
    }
  }
  return false;
}

namespace {

struct Pose {
  double cx, cy, angle;
};

Pose pose_at(const ShapeSpec& s, int t) {
  return {s.cx + s.vx * t, s.cy + s.vy * t, s.angle + s.omega * t};
}

// World point -> object coordinates.
std::array<double, 2> to_local(const Pose& p, double x, double y) {
  const double dx = x - p.cx, dy = y - p.cy;
  const double c = std::cos(p.angle), s = std::sin(p.angle);
  return {c * dx + s * dy, -s * dx + c * dy};
}

std::array<double, 2> to_world(const Pose& p, double qx, double qy) {
  const double c = std::cos(p.angle), s = std::sin(p.angle);
  return {p.cx + c * qx - s * qy, p.cy + s * qx + c * qy};
}

double shade(const ShapeSpec& s, int channel, double qx, double qy) {
  const double wave =
      std::sin(s.texture_fx * qx + s.texture_fy * qy + s.texture_phase + 2.0 * channel);
  return s.color[static_cast<std::size_t>(channel)] + s.texture_amplitude * wave;
}

}  // namespace

void SceneSpec::validate() const {
  if (n_frames < 2) throw SpecError("scene needs at least 2 frames");
  if (height < 1 || width < 1) throw SpecError("scene canvas must be non-empty");
  for (std::size_t i = 0; i < foreground.size(); ++i) {
    const ShapeSpec& s = foreground[i];
    if (s.kind == ShapeKind::kPolygon && s.sides < 3) throw SpecError("polygon needs >= 3 sides");
    const double r = s.bounding_radius();
    for (int t = 0; t < n_frames; ++t) {
      const Pose p = pose_at(s, t);
      if (p.cx - r < 1.0 || p.cy - r < 1.0 || p.cx + r > width - 2.0 || p.cy + r > height - 2.0) {
        throw SpecError("foreground shape " + std::to_string(i) + " leaves the canvas at frame " +
                        std::to_string(t));
      }
    }
  }
}

SceneSpec SceneSpec::random(std::uint64_t seed, int height, int width, int n_frames) {
  nn::Rng rng = nn::make_rng(seed, "scene");
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };
  const double scale = std::min(height, width) / 64.0;

  SceneSpec spec;
  spec.seed = seed;
  spec.n_frames = n_frames;
  spec.height = height;
  spec.width = width;
  spec.background_jitter = 0.75 * scale;
  spec.photometric_jitter = 0.01;

  auto texture = [&](ShapeSpec& s, double amplitude, double max_freq) {
    for (auto& c : s.color) c = uniform(0.2, 0.8);
    s.texture_amplitude = amplitude;
    s.texture_fx = uniform(-max_freq, max_freq);
    s.texture_fy = uniform(-max_freq, max_freq);
    s.texture_phase = uniform(0.0, 2.0 * std::numbers::pi);
  };
  auto random_kind = [&](ShapeSpec& s) {
    const int pick = static_cast<int>(unit(rng) * 3.0);
    s.kind = pick == 0 ? ShapeKind::kDisk : pick == 1 ? ShapeKind::kRectangle : ShapeKind::kPolygon;
    s.aspect = uniform(0.6, 1.0);
    s.sides = 3 + static_cast<int>(unit(rng) * 4.0);
    s.angle = uniform(0.0, 2.0 * std::numbers::pi);
  };

  texture(spec.background, 0.12, 0.25 / scale);

  ShapeSpec fg;
  random_kind(fg);
  texture(fg, 0.08, 0.3 / scale);
  const double target_radius = uniform(12.0, 20.0) * scale;
  // Rectangles are sized by their half-diagonal so every kind covers a similar area.
  fg.size = fg.kind == ShapeKind::kRectangle ? target_radius / std::hypot(1.0, fg.aspect)
                                             : target_radius;
  fg.omega = fg.kind == ShapeKind::kDisk ? 0.0 : uniform(-0.08, 0.08);
  const double r = fg.bounding_radius();
  const double lo_x = 1.0 + r + 0.5, hi_x = width - 2.0 - r - 0.5;
  const double lo_y = 1.0 + r + 0.5, hi_y = height - 2.0 - r - 0.5;
  // Start and end inside the canvas; straight-line motion keeps every frame inside.
  const double x0 = uniform(lo_x, hi_x), y0 = uniform(lo_y, hi_y);
  const double x1 = uniform(lo_x, hi_x), y1 = uniform(lo_y, hi_y);
  fg.cx = x0;
  fg.cy = y0;
  const double steps = std::max(1, n_frames - 1);
  const double max_speed = 3.0 * scale;
  const double vx = (x1 - x0) / steps, vy = (y1 - y0) / steps;
  const double speed = std::hypot(vx, vy);
  const double shrink = speed > max_speed ? max_speed / speed : 1.0;
  fg.vx = vx * shrink;
  fg.vy = vy * shrink;
  spec.foreground.push_back(fg);

  const int n_distractors = 1 + static_cast<int>(unit(rng) * 2.0);
  for (int i = 0; i < n_distractors; ++i) {
    ShapeSpec d;
    random_kind(d);
    texture(d, 0.08, 0.3 / scale);
    d.size = uniform(5.0, 8.0) * scale;
    d.cx = uniform(0.0, width - 1.0);
    d.cy = uniform(0.0, height - 1.0);
    spec.distractors.push_back(d);
  }
  spec.validate();
  return spec;
}

RenderedClip render_clip(const SceneSpec& spec) {
  spec.validate();
  const int T = spec.n_frames, H = spec.height, W = spec.width;
  nn::Rng rng = nn::make_rng(spec.seed, "render");
  std::uniform_real_distribution<double> sym(-1.0, 1.0);

  // Global background offset b_t and brightness offsets.
  std::vector<std::array<double, 2>> offset(static_cast<std::size_t>(T), {0.0, 0.0});
  std::vector<double> brightness(static_cast<std::size_t>(T), 0.0);
  for (int t = 0; t < T; ++t) {
    if (t > 0) {
      offset[t] = {offset[t - 1][0] + spec.background_jitter * sym(rng),
                   offset[t - 1][1] + spec.background_jitter * sym(rng)};
    }
    brightness[t] = spec.photometric_jitter * sym(rng);
  }

  RenderedClip clip;
  for (int t = 0; t < T; ++t) {
    Tensor frame(3, H, W), mask(1, H, W);
    Tensor flow(2, H, W);
    std::vector<int> label(static_cast<std::size_t>(H) * W, 0);
    const bool has_flow = t + 1 < T;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const std::size_t i = static_cast<std::size_t>(y) * W + x;
        const ShapeSpec* surface = &spec.background;
        double qx = x - offset[t][0], qy = y - offset[t][1];
        double u = 0.0, v = 0.0;
        if (has_flow) {
          u = offset[t + 1][0] - offset[t][0];
          v = offset[t + 1][1] - offset[t][1];
        }
        for (std::size_t d = 0; d < spec.distractors.size(); ++d) {
          const ShapeSpec& s = spec.distractors[d];
          const Pose p{s.cx + offset[t][0], s.cy + offset[t][1], s.angle};
          const auto q = to_local(p, x, y);
          if (s.contains_local(q[0], q[1])) {
            surface = &s;
            qx = q[0];
            qy = q[1];
            label[i] = 1000 + static_cast<int>(d);
          }
        }
        for (std::size_t f = 0; f < spec.foreground.size(); ++f) {
          const ShapeSpec& s = spec.foreground[f];
          const Pose p = pose_at(s, t);
          const auto q = to_local(p, x, y);
          if (!s.contains_local(q[0], q[1])) continue;
          surface = &s;
          qx = q[0];
          qy = q[1];
          label[i] = 1 + static_cast<int>(f);
          mask[i] = 1.0;
          if (has_flow) {
            const auto next = to_world(pose_at(s, t + 1), q[0], q[1]);
            u = next[0] - x;
            v = next[1] - y;
          }
        }
        for (int c = 0; c < 3; ++c) {
          frame.channel(c)[i] = std::clamp(shade(*surface, c, qx, qy) + brightness[t], 0.0, 1.0);
        }
        flow.channel(0)[i] = u;
        flow.channel(1)[i] = v;
      }
    }
    clip.frames.push_back(std::move(frame));
    clip.masks.push_back(std::move(mask));
    clip.labels.push_back(std::move(label));
    if (has_flow) clip.flows.push_back(std::move(flow));
  }
  return clip;
}

std::vector<ClipSample> RenderedClip::samples(const std::string& clip_id) const {
  std::vector<ClipSample> out;
  for (std::size_t t = 0; t < flows.size(); ++t) {
    out.push_back({clip_id, static_cast<int>(t), frames[t], flows[t], masks[t]});
  }
  return out;
}

void CorpusConfig::validate() const {
  if (n_clips < 1) throw ContractError("corpus needs at least one clip");
  double total = 0.0;
  for (double r : split_ratios) {
    if (r < 0.0) throw ContractError("split ratios must be non-negative");
    total += r;
  }
  if (std::abs(total - 1.0) > 1e-9) throw ContractError("split ratios must sum to 1");
  SceneSpec probe;
  probe.height = height;
  probe.width = width;
  probe.n_frames = n_frames;
  probe.validate();
}

std::array<int, 4> split_counts(int n_clips, const std::array<double, 4>& ratios) {
  std::array<int, 4> counts{};
  std::array<double, 4> remainder{};
  int assigned = 0;
  for (std::size_t i = 0; i < 4; ++i) {
    const double exact = ratios[i] * n_clips;
    counts[i] = static_cast<int>(std::floor(exact + 1e-9));
    remainder[i] = exact - counts[i];
    assigned += counts[i];
  }
  while (assigned < n_clips) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < 4; ++i) {
      if (remainder[i] > remainder[best] + 1e-12) best = i;
    }
    ++counts[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return counts;
}

const std::vector<std::string>& Manifest::split(const std::string& name) const {
  const auto it = splits.find(name);
  if (it == splits.end()) throw ContractError("manifest has no split '" + name + "'");
  return it->second;
}

void Manifest::save(const fs::path& path) const {
  json j;
  j["seed"] = seed;
  j["height"] = height;
  j["width"] = width;
  j["n_frames"] = n_frames;
  j["splits"] = splits;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

Manifest Manifest::load(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open manifest " + path.string());
  Manifest m;
  try {
    const json j = json::parse(in);
    m.seed = j.at("seed").get<std::uint64_t>();
    m.height = j.at("height").get<int>();
    m.width = j.at("width").get<int>();
    m.n_frames = j.at("n_frames").get<int>();
    m.splits = j.at("splits").get<std::map<std::string, std::vector<std::string>>>();
  } catch (const json::exception& e) {
    throw ContractError("malformed manifest " + path.string() + ": " + e.what());
  }
  return m;
}

Manifest build_corpus(const CorpusConfig& config, const fs::path& out_dir, bool force) {
  config.validate();
  if (fs::exists(out_dir) && !fs::is_empty(out_dir)) {
    if (!force) {
      throw ContractError("output directory " + out_dir.string() +
                          " is not empty (use force to overwrite)");
    }
    for (const auto& entry : fs::directory_iterator(out_dir)) fs::remove_all(entry.path());
  }
  fs::create_directories(out_dir);

  Manifest manifest;
  manifest.seed = config.seed;
  manifest.height = config.height;
  manifest.width = config.width;
  manifest.n_frames = config.n_frames;
  const auto counts = split_counts(config.n_clips, config.split_ratios);

  int index = 0;
  for (std::size_t s = 0; s < kSplitNames.size(); ++s) {
    auto& ids = manifest.splits[kSplitNames[s]];
    for (int n = 0; n < counts[s]; ++n, ++index) {
      char name[32];
      std::snprintf(name, sizeof name, "clip_%03d", index);
      const std::uint64_t clip_seed = nn::fnv1a(std::string(name), nn::fnv1a(&config.seed, sizeof config.seed));
      const SceneSpec spec =
          SceneSpec::random(clip_seed, config.height, config.width, config.n_frames);
      const RenderedClip clip = render_clip(spec);
      for (int t = 0; t < config.n_frames; ++t) {
        const fs::path frame = ClipLayout::frame(out_dir, name, t);
        fs::create_directories(frame.parent_path());
        write_frame(clip.frames[t], frame);
        const fs::path gt = ClipLayout::gt(out_dir, name, t);
        fs::create_directories(gt.parent_path());
        write_mask(clip.masks[t], gt, 0.5);
        if (t + 1 < config.n_frames) {
          const fs::path flow = ClipLayout::flow(out_dir, name, t);
          fs::create_directories(flow.parent_path());
          write_flow(clip.flows[t], flow);
        }
      }
      ids.push_back(name);
    }
  }
  manifest.save(out_dir / kManifestName);
  return manifest;
}

}  // namespace fslab
