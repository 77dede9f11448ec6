#include "fslab/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "fslab/config.hpp"
#include "fslab/datamodel.hpp"

namespace fslab {

namespace fs = std::filesystem;

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes little-endian");

namespace {

constexpr char kMagic[4] = {'F', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
T get(std::ifstream& in, const fs::path& path) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof v)) {
    throw FormatError("truncated checkpoint " + path.string());
  }
  return v;
}

void put_tensors(std::ofstream& out, const std::vector<NamedTensor>& list) {
  put(out, static_cast<std::uint64_t>(list.size()));
  for (const auto& t : list) {
    put(out, static_cast<std::uint32_t>(t.name.size()));
    out.write(t.name.data(), static_cast<std::streamsize>(t.name.size()));
    const Shape s = t.value.shape();
    put(out, static_cast<std::int32_t>(s.c));
    put(out, static_cast<std::int32_t>(s.h));
    put(out, static_cast<std::int32_t>(s.w));
    out.write(reinterpret_cast<const char*>(t.value.data()),
              static_cast<std::streamsize>(t.value.size() * sizeof(double)));
  }
}

std::vector<NamedTensor> get_tensors(std::ifstream& in, const fs::path& path) {
  const auto n = get<std::uint64_t>(in, path);
  std::vector<NamedTensor> list;
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto len = get<std::uint32_t>(in, path);
    if (len > 4096) throw FormatError("corrupt checkpoint name in " + path.string());
    std::string name(len, '\0');
    if (!in.read(name.data(), len)) throw FormatError("truncated checkpoint " + path.string());
    const int c = get<std::int32_t>(in, path);
    const int h = get<std::int32_t>(in, path);
    const int w = get<std::int32_t>(in, path);
    if (c < 0 || h < 0 || w < 0) throw FormatError("corrupt checkpoint shape in " + path.string());
    Tensor value(c, h, w);
    if (!in.read(reinterpret_cast<char*>(value.data()),
                 static_cast<std::streamsize>(value.size() * sizeof(double)))) {
      throw FormatError("truncated checkpoint " + path.string());
    }
    list.push_back({std::move(name), std::move(value)});
  }
  return list;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Write-then-rename so an interrupted save never leaves a torn checkpoint.
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + tmp.string());
    out.write(kMagic, 4);
    put(out, kVersion);
    put(out, static_cast<std::uint32_t>(ckpt.stage));
    put(out, static_cast<std::int32_t>(ckpt.epoch));
    put(out, ckpt.config_hash);
    put_tensors(out, ckpt.parameters);
    put_tensors(out, ckpt.momentum);
    if (!out) throw std::runtime_error("failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open checkpoint " + path.string());
  char magic[4];
  if (!in.read(magic, 4) || std::memcmp(magic, kMagic, 4) != 0) {
    throw FormatError("not a checkpoint: " + path.string());
  }
  if (get<std::uint32_t>(in, path) != kVersion) {
    throw FormatError("unsupported checkpoint version in " + path.string());
  }
  Checkpoint ckpt;
  const auto stage = get<std::uint32_t>(in, path);
  if (stage > static_cast<std::uint32_t>(Stage::kJoint)) {
    throw FormatError("bad stage tag in " + path.string());
  }
  ckpt.stage = static_cast<Stage>(stage);
  ckpt.epoch = get<std::int32_t>(in, path);
  ckpt.config_hash = get<std::uint64_t>(in, path);
  ckpt.parameters = get_tensors(in, path);
  ckpt.momentum = get_tensors(in, path);
  if (in.peek() != std::char_traits<char>::eof()) {
    throw FormatError("trailing bytes in checkpoint " + path.string());
  }
  return ckpt;
}

std::uint64_t file_hash(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError("cannot open " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return nn::fnv1a(bytes.data(), bytes.size());
}

std::vector<NamedTensor> snapshot(const FsNet& net) {
  std::vector<NamedTensor> out;
  for (const auto& p : net.parameters()) out.push_back({p.name, p.var.value()});
  return out;
}

void restore(FsNet& net, const std::vector<NamedTensor>& values, bool require_all) {
  std::map<std::string, const Tensor*> by_name;
  for (const auto& v : values) by_name[v.name] = &v.value;
  for (auto& p : net.parameters()) {
    const auto it = by_name.find(p.name);
    if (it == by_name.end()) {
      if (require_all) throw ConfigError("checkpoint lacks parameter '" + p.name + "'");
      continue;
    }
    if (!(it->second->shape() == p.var.shape())) {
      throw ConfigError("checkpoint parameter '" + p.name + "' has shape " +
                        it->second->shape().str() + ", network expects " + p.var.shape().str());
    }
    p.var.mutable_value() = *it->second;
  }
}

}  // namespace fslab
