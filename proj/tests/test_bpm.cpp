#include <gtest/gtest.h>

#include <random>

#include "fslab/bpm.hpp"
#include "oracles.hpp"

using namespace fslab;
using ag::Var;

namespace {

// Random 32-channel state with an 8 x 8 finest level.
BpmState random_state(std::uint64_t seed, int finest = 8, double lo = -1.0) {
  std::mt19937_64 rng(seed);
  BpmState s;
  for (int k = 0; k < kPyramidLevels; ++k) {
    const int size = finest >> k;
    s.f.push_back(Var::constant(oracle::random_tensor(rng, kBpmChannels, size, size, lo, 1.0)));
    s.g.push_back(Var::constant(oracle::random_tensor(rng, kBpmChannels, size, size, lo, 1.0)));
  }
  return s;
}

void zero_parameters(const nn::ParameterList& params, const std::string& containing) {
  for (const auto& p : params) {
    if (p.name.find(containing) != std::string::npos) {
      auto v = p.var;
      v.mutable_value().fill(0.0);
    }
  }
}

double state_diff(const BpmState& a, const BpmState& b) {
  double d = 0.0;
  for (int k = 0; k < kPyramidLevels; ++k) {
    d = std::max(d, Tensor::max_abs_diff(a.f[k].value(), b.f[k].value()));
    d = std::max(d, Tensor::max_abs_diff(a.g[k].value(), b.g[k].value()));
  }
  return d;
}

std::vector<Tensor> snapshot(const BpmState& s) {
  std::vector<Tensor> out;
  for (const auto& v : s.f) out.push_back(v.value());
  for (const auto& v : s.g) out.push_back(v.value());
  return out;
}

}  // namespace

TEST(Idc, ArityShrinksTowardsTheTop) {
  EXPECT_EQ(idc_arity(2, 4), 4);
  EXPECT_EQ(idc_arity(4, 4), 2);
  EXPECT_EQ(idc_arity(1, 4), 5);
  nn::Rng rng = nn::make_rng(1, "idc");
  for (int level = 1; level <= 4; ++level) {
    const IdcParams concat(level, 4, true, rng);
    const IdcParams multiply(level, 4, false, rng);
    EXPECT_EQ(static_cast<int>(concat.project.size()) + 1, idc_arity(level, 4));
    EXPECT_EQ(concat.fuse.in_channels(), kBpmChannels * idc_arity(level, 4));
    EXPECT_EQ(multiply.fuse.in_channels(), kBpmChannels);
  }
  EXPECT_THROW(IdcParams(5, 4, true, rng), ContractError);
}

TEST(Idc, WrongGuidanceCountIsContractViolation) {
  nn::Rng rng = nn::make_rng(2, "idc");
  const IdcParams params(2, 4, true, rng);
  const BpmState s = random_state(1);
  const std::span<const Var> g(s.g);
  EXPECT_THROW(idc_concat(s.f[1], g.subspan(0), params), ContractError);
  EXPECT_THROW(idc_multiply(s.g[1], g.subspan(2), params), ContractError);
  EXPECT_NO_THROW(idc_concat(s.f[1], g.subspan(1), params));
}

TEST(Idc, MultiplyMatchesLoopOracle) {
  // All guidance at the feature's own resolution so the resize is exact.
  nn::Rng rng = nn::make_rng(3, "idc");
  const IdcParams params(2, 4, false, rng);
  std::mt19937_64 r(3);
  const Var g = Var::constant(oracle::random_tensor(r, kBpmChannels, 4, 4));
  std::vector<Var> guide;
  for (int i = 0; i < 3; ++i) guide.push_back(Var::constant(oracle::random_tensor(r, kBpmChannels, 4, 4)));

  auto conv1x1 = [](const nn::Conv2d& conv, const Tensor& in, int o, int y, int x) {
    double z = conv.bias().value().at(o, 0, 0);
    for (int i = 0; i < in.shape().c; ++i) z += conv.weight().value().at(o, i, 0) * in.at(i, y, x);
    return z;
  };
  Tensor product = g.value();
  for (int i = 0; i < 3; ++i) {
    Tensor next(product.shape());
    for (int c = 0; c < kBpmChannels; ++c) {
      for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 4; ++x) {
          next.at(c, y, x) = product.at(c, y, x) * conv1x1(params.project[i], guide[i].value(), c, y, x);
        }
      }
    }
    product = next;
  }
  Tensor expect(product.shape());
  for (int c = 0; c < kBpmChannels; ++c) {
    for (int y = 0; y < 4; ++y) {
      for (int x = 0; x < 4; ++x) expect.at(c, y, x) = conv1x1(params.fuse, product, c, y, x);
    }
  }
  EXPECT_LT(Tensor::max_abs_diff(idc_multiply(g, guide, params).value(), expect), 1e-12);
}

TEST(Idc, ZeroFeatureIsAbsorbingForMultiply) {
  nn::Rng rng = nn::make_rng(4, "idc");
  IdcParams params(1, 4, false, rng);
  params.fuse.bias().mutable_value().fill(0.0);
  const BpmState s = random_state(4);
  const Var zero = Var::constant(Tensor(kBpmChannels, 8, 8));
  EXPECT_EQ(idc_multiply(zero, s.f, params).value().max(), 0.0);
  EXPECT_EQ(idc_multiply(zero, s.f, params).value().min(), 0.0);
}

class BpmUnitTest : public ::testing::Test {
 protected:
  BpmUnitTest() : rng_(nn::make_rng(5, "bpm")), unit_(false, rng_) {
    unit_.collect("u", params_);
  }
  nn::Rng rng_;
  BpmUnit unit_;
  nn::ParameterList params_;
};

TEST_F(BpmUnitTest, ZeroStateStaysZeroWithZeroBias) {
  zero_parameters(params_, ".bias");
  const BpmState zero = random_state(0, 8, 0.0);
  BpmState z;
  for (int k = 0; k < kPyramidLevels; ++k) {
    z.f.push_back(Var::constant(Tensor(zero.f[k].shape())));
    z.g.push_back(Var::constant(Tensor(zero.g[k].shape())));
  }
  const BpmState out = bpm_step(z, unit_, BpmMode::kFullDuplex);
  EXPECT_EQ(state_diff(out, z), 0.0);
  EXPECT_EQ(out.n, 1);
}

TEST_F(BpmUnitTest, ZeroFuseIsIdentity) {
  zero_parameters(params_, ".fuse.");
  const BpmState s = random_state(6);
  for (BpmMode mode : {BpmMode::kFullDuplex, BpmMode::kFtoG, BpmMode::kGtoF,
                       BpmMode::kSelfPurification}) {
    EXPECT_EQ(state_diff(bpm_step(s, unit_, mode), s), 0.0) << to_string(mode);
  }
}

TEST_F(BpmUnitTest, SimplexModesFreezeOneBranch) {
  const BpmState s = random_state(7);
  const BpmState g_to_f = bpm_step(s, unit_, BpmMode::kGtoF);
  const BpmState f_to_g = bpm_step(s, unit_, BpmMode::kFtoG);
  const BpmState full = bpm_step(s, unit_, BpmMode::kFullDuplex);
  for (int k = 0; k < kPyramidLevels; ++k) {
    EXPECT_EQ(Tensor::max_abs_diff(g_to_f.g[k].value(), s.g[k].value()), 0.0);
    EXPECT_EQ(Tensor::max_abs_diff(g_to_f.f[k].value(), full.f[k].value()), 0.0);
    EXPECT_EQ(Tensor::max_abs_diff(f_to_g.f[k].value(), s.f[k].value()), 0.0);
    EXPECT_EQ(Tensor::max_abs_diff(f_to_g.g[k].value(), full.g[k].value()), 0.0);
    EXPECT_GT(Tensor::max_abs_diff(full.f[k].value(), s.f[k].value()), 0.0);
  }
  const BpmState self = bpm_step(s, unit_, BpmMode::kSelfPurification);
  EXPECT_GT(state_diff(self, full), 1e-9);
}

TEST_F(BpmUnitTest, StepIsPureAndPreservesShapes) {
  const BpmState s = random_state(8);
  const auto before = snapshot(s);
  const BpmState out = bpm_step(s, unit_, BpmMode::kFullDuplex);
  const auto after = snapshot(s);
  for (std::size_t i = 0; i < before.size(); ++i) {
    EXPECT_EQ(Tensor::max_abs_diff(before[i], after[i]), 0.0);
  }
  for (int k = 0; k < kPyramidLevels; ++k) {
    EXPECT_EQ(out.f[k].shape(), s.f[k].shape());
    EXPECT_EQ(out.g[k].shape(), s.g[k].shape());
    EXPECT_EQ(out.f[k].shape().c, kBpmChannels);
  }
  // Repeating the call gives the same result.
  EXPECT_EQ(state_diff(out, bpm_step(s, unit_, BpmMode::kFullDuplex)), 0.0);
}

TEST(BpmChain, EmptyChainIsIdentityAndChainComposesSteps) {
  nn::Rng rng = nn::make_rng(9, "bpm");
  std::vector<BpmUnit> units;
  units.emplace_back(false, rng);
  units.emplace_back(false, rng);
  const BpmState s = random_state(9);
  const BpmState none = bpm_chain(s, {}, BpmMode::kFullDuplex);
  EXPECT_EQ(state_diff(none, s), 0.0);
  EXPECT_EQ(none.n, 0);
  const BpmState chained = bpm_chain(s, units, BpmMode::kFullDuplex);
  const BpmState stepped =
      bpm_step(bpm_step(s, units[0], BpmMode::kFullDuplex), units[1], BpmMode::kFullDuplex);
  EXPECT_EQ(state_diff(chained, stepped), 0.0);
  EXPECT_EQ(chained.n, 2);
}

TEST(BpmChain, OwnAllocatorReallocatesState) {
  nn::Rng rng = nn::make_rng(10, "bpm");
  const BpmUnit unit(true, rng);
  ASSERT_TRUE(unit.reallocate.has_value());
  nn::ParameterList params;
  unit.collect("u", params);
  EXPECT_EQ(nn::count_parameters(params), BpmUnit::parameter_count(true));
  const BpmState out = bpm_step(random_state(10), unit, BpmMode::kFullDuplex);
  // The re-allocated input passes through ReLU, so the identity part is >= 0.
  EXPECT_EQ(out.f[0].shape(), (Shape{kBpmChannels, 8, 8}));
}

TEST(BpmParameters, GrowthIsExactlyAffineInUnits) {
  for (bool share : {true, false}) {
    for (const BackboneConfig& backbone : {BackboneConfig::toy(), BackboneConfig::resnet50_like()}) {
      BpmConfig c;
      c.share_allocator = share;
      c.units = 0;
      const std::size_t base = Bpm::parameter_count(backbone, c);
      EXPECT_EQ(base, AllocatorPair::parameter_count(backbone.channel_widths));
      for (int n = 1; n <= 6; ++n) {
        c.units = n;
        EXPECT_EQ(Bpm::parameter_count(backbone, c), base + n * Bpm::unit_parameter_count(c));
      }
    }
  }
  BpmConfig c;
  c.units = 3;
  nn::Rng rng = nn::make_rng(11, "bpm");
  const Bpm bpm(BackboneConfig::toy(), c, rng);
  nn::ParameterList params;
  bpm.collect("bpm", params);
  EXPECT_EQ(nn::count_parameters(params), Bpm::parameter_count(BackboneConfig::toy(), c));
}

TEST(BpmParameters, AllocatorCountAtResNetWidths) {
  // psi: 3x3 conv in -> 32 plus 3x3 conv 32 -> 32, both with bias; one per
  // branch per level.
  std::size_t expect = 0;
  for (int c : {256, 512, 1024, 2048}) expect += 2 * ((9 * c * 32 + 32) + (9 * 32 * 32 + 32));
  EXPECT_EQ(AllocatorPair::parameter_count(BackboneConfig::resnet50_like().channel_widths), expect);
}

TEST(BpmGradients, TwoUnitCascadeMatchesCentralDifferences) {
  nn::Rng rng = nn::make_rng(12, "bpm");
  std::vector<BpmUnit> units;
  units.emplace_back(false, rng);
  units.emplace_back(false, rng);
  nn::ParameterList params;
  for (std::size_t n = 0; n < units.size(); ++n) units[n].collect("unit" + std::to_string(n + 1), params);
  BpmState s = random_state(12);
  std::mt19937_64 r(12);
  for (int k = 0; k < kPyramidLevels; ++k) {
    s.f[k] = Var::parameter(s.f[k].value());
    s.g[k] = Var::parameter(s.g[k].value());
    params.push_back({"f" + std::to_string(k), s.f[k]});
    params.push_back({"g" + std::to_string(k), s.g[k]});
  }
  std::vector<Tensor> weights;
  for (int k = 0; k < kPyramidLevels; ++k) {
    weights.push_back(oracle::random_tensor(r, kBpmChannels, 8 >> k, 8 >> k));
  }
  auto loss = [&] {
    const BpmState out = bpm_chain(s, units, BpmMode::kFullDuplex);
    std::vector<Var> terms;
    for (int k = 0; k < kPyramidLevels; ++k) {
      terms.push_back(ag::sum(ag::mul(out.f[k], Var::constant(weights[k]))));
      terms.push_back(ag::sum(ag::mul(out.g[k], out.g[k])));
    }
    return ag::add(terms);
  };
  const auto result = oracle::check_gradients(loss, params, 8, 3);
  EXPECT_GT(result.checked, 500u);
  EXPECT_LT(result.worst_relative, 1e-3) << result.worst_name;
}

TEST(BpmModes, NamesRoundTrip) {
  for (BpmMode m : {BpmMode::kFullDuplex, BpmMode::kFtoG, BpmMode::kGtoF,
                    BpmMode::kSelfPurification}) {
    EXPECT_EQ(bpm_mode_from_string(to_string(m)), m);
  }
  EXPECT_THROW(bpm_mode_from_string("duplex"), ContractError);
  BpmConfig bad;
  bad.units = -1;
  EXPECT_THROW(bad.validate(), ContractError);
}
