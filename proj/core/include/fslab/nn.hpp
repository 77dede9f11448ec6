#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "fslab/autograd.hpp"

namespace fslab::nn {

using ag::Var;

/// A trainable tensor with a stable, hierarchical name ("rcam.2.theta.weight").
struct NamedParameter {
  std::string name;
  Var var;
};
using ParameterList = std::vector<NamedParameter>;

std::size_t count_parameters(const ParameterList& params);

/// Engine used for parameter initialisation. Each module draws from its own
/// stream derived from (seed, name) so adding a module never perturbs others.
using Rng = std::mt19937_64;

Rng make_rng(std::uint64_t seed, const std::string& stream);

/// 64-bit FNV-1a, used for stream derivation and content hashes.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h = 14695981039346656037ull);
std::uint64_t fnv1a(const std::string& s, std::uint64_t h = 14695981039346656037ull);

enum class Init {
  kHe,     // N(0, 2 / fan_in), for layers followed by ReLU
  kXavier, // N(0, 1 / fan_in), linear outputs
  kZero,
};

/// k x k convolution with optional bias and zero padding k / 2.
class Conv2d {
 public:
  Conv2d() = default;
  Conv2d(int in_channels, int out_channels, int kernel, int stride, bool bias, Rng& rng,
         Init init = Init::kHe, double gain = 1.0);

  Var operator()(const Var& x) const;

  int in_channels() const { return in_; }
  int out_channels() const { return out_; }
  int kernel() const { return kernel_; }
  int stride() const { return stride_; }

  Var& weight() { return weight_; }
  Var& bias() { return bias_; }
  const Var& weight() const { return weight_; }
  const Var& bias() const { return bias_; }

  void collect(const std::string& prefix, ParameterList& out) const;

  /// Trainable scalar count without allocating the layer.
  static std::size_t parameter_count(int in_channels, int out_channels, int kernel, bool bias);

 private:
  int in_ = 0;
  int out_ = 0;
  int kernel_ = 1;
  int stride_ = 1;
  Var weight_;
  Var bias_;
};

}  // namespace fslab::nn
