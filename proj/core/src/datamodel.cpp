#include "fslab/datamodel.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "png_io.hpp"

namespace fslab {

static_assert(std::endian::native == std::endian::little,
              "flow raster I/O assumes a little-endian host");

namespace {

constexpr char kFlowMagic[4] = {'P', 'I', 'E', 'H'};

std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

}  // namespace

void ClipSample::validate() const {
  const int h = gt_mask.height(), w = gt_mask.width();
  if (gt_mask.channels() != 1) throw ContractError("gt mask must have one channel");
  if (!(appearance.shape() == Shape{3, h, w})) {
    throw ContractError("appearance shape " + appearance.shape().str() + " vs mask " +
                        gt_mask.shape().str());
  }
  if (!(flow.shape() == Shape{2, h, w})) {
    throw ContractError("flow shape " + flow.shape().str() + " vs mask " + gt_mask.shape().str());
  }
  for (double v : appearance.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("appearance value outside [0, 1]");
  }
  if (!flow.all_finite()) throw ContractError("non-finite flow value");
  for (double v : gt_mask.values()) {
    if (v != 0.0 && v != 1.0) throw ContractError("gt mask is not binary");
  }
}

void FeaturePyramid::validate() const {
  if (levels.size() != kPyramidLevels) {
    throw ContractError("pyramid must have " + std::to_string(kPyramidLevels) + " levels, got " +
                        std::to_string(levels.size()));
  }
  for (std::size_t k = 1; k < levels.size(); ++k) {
    const Shape& lo = levels[k - 1].shape();
    const Shape& hi = levels[k].shape();
    if (hi.h != lo.h / 2 || hi.w != lo.w / 2) {
      throw ContractError("pyramid level " + std::to_string(k) + " is " + hi.str() +
                          ", expected half of " + lo.str());
    }
    if (hi.c < lo.c) throw ContractError("pyramid channel widths must be non-decreasing");
  }
}

Tensor read_mask(const std::filesystem::path& path) {
  const detail::Image8 img = detail::read_png(path);
  if (img.channels != 1) {
    throw FormatError("mask " + path.string() + " has " + std::to_string(img.channels) +
                      " channels, expected 1");
  }
  if (img.bit_depth != 8) throw FormatError("mask " + path.string() + " is not 8-bit");
  Tensor mask(1, img.height, img.width);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = img.pixels[i] > 127 ? 1.0 : 0.0;
  return mask;
}

void write_mask(const Tensor& mask, const std::filesystem::path& path,
                std::optional<double> threshold) {
  if (mask.channels() != 1) throw ContractError("write_mask: expected a 1-channel map");
  detail::Image8 img{mask.width(), mask.height(), 1, 8, {}};
  img.pixels.resize(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) {
    const double v = mask[i];
    if (!(v >= 0.0 && v <= 1.0)) throw ContractError("write_mask: value outside [0, 1]");
    if (threshold) {
      img.pixels[i] = v > *threshold ? 255 : 0;
    } else {
      img.pixels[i] = to_byte(v);
    }
  }
  detail::write_png(path, img);
}

Tensor read_frame(const std::filesystem::path& path) {
  const detail::Image8 img = detail::read_png(path);
  if (img.bit_depth != 8) throw FormatError("frame " + path.string() + " is not 8-bit");
  const int channels = img.channels;
  if (channels == 2 || channels > 4) throw FormatError("unsupported frame layout " + path.string());
  Tensor rgb(3, img.height, img.width);
  const std::size_t plane = rgb.shape().plane();
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) {
      const int src = channels == 1 ? 0 : c;
      rgb.channel(c)[i] = img.pixels[i * channels + src] / 255.0;
    }
  }
  return rgb;
}

void write_frame(const Tensor& rgb, const std::filesystem::path& path) {
  if (rgb.channels() != 3) throw ContractError("write_frame: expected 3 channels");
  detail::Image8 img{rgb.width(), rgb.height(), 3, 8, {}};
  const std::size_t plane = rgb.shape().plane();
  img.pixels.resize(plane * 3);
  for (std::size_t i = 0; i < plane; ++i) {
    for (int c = 0; c < 3; ++c) img.pixels[i * 3 + c] = to_byte(rgb.channel(c)[i]);
  }
  detail::write_png(path, img);
}

Tensor read_flow(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open flow file " + path.string());
  char magic[4];
  std::int32_t header[2];
  if (!in.read(magic, 4) || !in.read(reinterpret_cast<char*>(header), sizeof(header))) {
    throw FormatError("flow file " + path.string() + " has a truncated header");
  }
  if (std::memcmp(magic, kFlowMagic, 4) != 0) {
    throw FormatError("flow file " + path.string() + " has a bad magic tag");
  }
  const std::int32_t w = header[0], h = header[1];
  if (w <= 0 || h <= 0 || static_cast<std::int64_t>(w) * h > (1ll << 28)) {
    throw FormatError("flow file " + path.string() + " has an invalid size");
  }
  const std::size_t pairs = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
  std::vector<float> payload(pairs * 2);
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (static_cast<std::size_t>(in.gcount()) != payload.size() * sizeof(float)) {
    throw FormatError("flow file " + path.string() + " has a truncated payload");
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("flow file " + path.string() + " has trailing bytes");
  }
  Tensor flow(2, h, w);
  for (std::size_t i = 0; i < pairs; ++i) {
    flow.channel(0)[i] = payload[2 * i];
    flow.channel(1)[i] = payload[2 * i + 1];
  }
  return flow;
}

void write_flow(const Tensor& flow, const std::filesystem::path& path) {
  if (flow.channels() != 2) throw ContractError("write_flow: expected 2 channels");
  const std::size_t pairs = flow.shape().plane();
  std::vector<float> payload(pairs * 2);
  for (std::size_t i = 0; i < pairs; ++i) {
    payload[2 * i] = static_cast<float>(flow.channel(0)[i]);
    payload[2 * i + 1] = static_cast<float>(flow.channel(1)[i]);
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write flow file " + path.string());
  const std::int32_t header[2] = {flow.width(), flow.height()};
  out.write(kFlowMagic, 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::string ClipLayout::index_name(int t, const char* extension) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%05d.%s", t, extension);
  return buf;
}

std::filesystem::path ClipLayout::frame(const std::filesystem::path& root, const std::string& clip,
                                        int t) {
  return root / clip / "frames" / index_name(t, "png");
}

std::filesystem::path ClipLayout::flow(const std::filesystem::path& root, const std::string& clip,
                                       int t) {
  return root / clip / "flow" / index_name(t, "flo");
}

std::filesystem::path ClipLayout::gt(const std::filesystem::path& root, const std::string& clip,
                                     int t) {
  return root / clip / "gt" / index_name(t, "png");
}

std::vector<ClipSample> load_clip(const std::filesystem::path& root, const std::string& clip) {
  int frames = 0;
  while (std::filesystem::exists(ClipLayout::frame(root, clip, frames))) ++frames;
  if (frames < 2) {
    throw FormatError("clip " + clip + " under " + root.string() + " has fewer than 2 frames");
  }
  std::vector<ClipSample> samples;
  samples.reserve(static_cast<std::size_t>(frames - 1));
  for (int t = 0; t + 1 < frames; ++t) {
    ClipSample s;
    s.clip_id = clip;
    s.t = t;
    s.appearance = read_frame(ClipLayout::frame(root, clip, t));
    s.flow = read_flow(ClipLayout::flow(root, clip, t));
    s.gt_mask = read_mask(ClipLayout::gt(root, clip, t));
    s.validate();
    samples.push_back(std::move(s));
  }
  return samples;
}

}  // namespace fslab
