#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace fslab::detail {

struct Image8 {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 gray, 2 gray+alpha, 3 rgb, 4 rgba
  int bit_depth = 8;
  std::vector<std::uint8_t> pixels;  // row-major, interleaved
};

/// Decodes a PNG without expanding palettes or bit depths beyond what is
/// needed to read 8-bit samples. Throws DecodeError on malformed input.
Image8 read_png(const std::filesystem::path& path);

/// Writes an 8-bit gray (channels = 1) or RGB (channels = 3) PNG.
void write_png(const std::filesystem::path& path, const Image8& image);

}  // namespace fslab::detail
