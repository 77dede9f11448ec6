#include "fslab/nn.hpp"

#include <cmath>

namespace fslab::nn {

std::size_t count_parameters(const ParameterList& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.var.value().size();
  return n;
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t fnv1a(const std::string& s, std::uint64_t h) { return fnv1a(s.data(), s.size(), h); }

Rng make_rng(std::uint64_t seed, const std::string& stream) {
  const std::uint64_t h = fnv1a(stream, fnv1a(&seed, sizeof(seed)));
  std::seed_seq seq{static_cast<std::uint32_t>(h), static_cast<std::uint32_t>(h >> 32)};
  return Rng(seq);
}

Conv2d::Conv2d(int in_channels, int out_channels, int kernel, int stride, bool bias, Rng& rng,
               Init init, double gain)
    : in_(in_channels), out_(out_channels), kernel_(kernel), stride_(stride) {
  if (in_channels < 1 || out_channels < 1 || kernel < 1 || kernel % 2 == 0 || stride < 1) {
    throw ContractError("Conv2d: invalid configuration");
  }
  Tensor w(out_channels, in_channels, kernel * kernel);
  const double fan_in = static_cast<double>(in_channels) * kernel * kernel;
  double stddev = 0.0;
  switch (init) {
    case Init::kHe: stddev = std::sqrt(2.0 / fan_in); break;
    case Init::kXavier: stddev = std::sqrt(1.0 / fan_in); break;
    case Init::kZero: break;
  }
  if (stddev > 0.0) {
    std::normal_distribution<double> dist(0.0, stddev * gain);
    for (double& v : w.values()) v = dist(rng);
  }
  weight_ = Var::parameter(std::move(w));
  if (bias) bias_ = Var::parameter(Tensor(out_channels, 1, 1));
}

Var Conv2d::operator()(const Var& x) const {
  return ag::conv2d(x, weight_, bias_, kernel_, stride_, kernel_ / 2);
}

void Conv2d::collect(const std::string& prefix, ParameterList& out) const {
  out.push_back({prefix + ".weight", weight_});
  if (bias_.defined()) out.push_back({prefix + ".bias", bias_});
}

std::size_t Conv2d::parameter_count(int in_channels, int out_channels, int kernel, bool bias) {
  return static_cast<std::size_t>(in_channels) * out_channels * kernel * kernel +
         (bias ? static_cast<std::size_t>(out_channels) : 0u);
}

}  // namespace fslab::nn
