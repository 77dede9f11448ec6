#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "fslab/network.hpp"
#include "fslab/tensor.hpp"

namespace fslab {

struct NamedTensor {
  std::string name;
  Tensor value;
};

/// Parameters, SGD momentum buffers (same order and names) and progress.
struct Checkpoint {
  Stage stage = Stage::kSpatial;
  int epoch = 0;  // last completed epoch of `stage`, 1-based
  std::uint64_t config_hash = 0;
  std::vector<NamedTensor> parameters;
  std::vector<NamedTensor> momentum;
};

/// Little-endian binary file; no timestamps, so identical state gives identical bytes.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// FNV-1a over the file contents.
std::uint64_t file_hash(const std::filesystem::path& path);

/// Snapshot of `net`'s parameters.
std::vector<NamedTensor> snapshot(const FsNet& net);

/// Copies values into `net` by name. With `require_all` every parameter of the
/// network must be present; a shape mismatch is always an error.
void restore(FsNet& net, const std::vector<NamedTensor>& values, bool require_all = true);

}  // namespace fslab
