#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "fslab/rcam.hpp"
#include "oracles.hpp"

using namespace fslab;
using ag::Var;

namespace {

double sigmoid(double v) { return 1.0 / (1.0 + std::exp(-v)); }

// Q = feat * sigma(W gap(guide) + b), computed with plain loops.
Tensor attend_oracle(const Tensor& feat, const Tensor& guide, const nn::Conv2d& conv) {
  const Shape s = feat.shape();
  std::vector<double> gap(s.c, 0.0);
  for (int c = 0; c < s.c; ++c) {
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) gap[c] += guide.at(c, y, x);
    }
    gap[c] /= s.h * s.w;
  }
  Tensor out(s);
  for (int o = 0; o < s.c; ++o) {
    double z = conv.bias().value().at(o, 0, 0);
    for (int i = 0; i < s.c; ++i) z += conv.weight().value().at(o, i, 0) * gap[i];
    const double a = sigmoid(z);
    for (int y = 0; y < s.h; ++y) {
      for (int x = 0; x < s.w; ++x) out.at(o, y, x) = feat.at(o, y, x) * a;
    }
  }
  return out;
}

struct Pair {
  Var x, y;
};

Pair random_pair(std::uint64_t seed, int c = 16, int h = 8, int w = 8) {
  std::mt19937_64 rng(seed);
  return {Var::constant(oracle::random_tensor(rng, c, h, w)),
          Var::constant(oracle::random_tensor(rng, c, h, w))};
}

}  // namespace

TEST(Rcam, ChannelVectorIsSpatialMean) {
  std::mt19937_64 rng(1);
  const Tensor t = oracle::random_tensor(rng, 5, 3, 7);
  const Tensor v = channel_vector(Var::constant(t)).value();
  ASSERT_EQ(v.shape(), (Shape{5, 1, 1}));
  for (int c = 0; c < 5; ++c) {
    double s = 0.0;
    for (int y = 0; y < 3; ++y) {
      for (int x = 0; x < 7; ++x) s += t.at(c, y, x);
    }
    EXPECT_NEAR(v.at(c, 0, 0), s / 21.0, 1e-12);
  }
}

TEST(Rcam, ZeroLogitsHalveTheFeatures) {
  nn::Rng rng = nn::make_rng(1, "rcam");
  RcamLevelParams params(16, rng);
  params.phi.weight().mutable_value().fill(0.0);
  params.phi.bias().mutable_value().fill(0.0);
  params.theta.weight().mutable_value().fill(0.0);
  params.theta.bias().mutable_value().fill(0.0);
  const Pair p = random_pair(2);
  const CrossAttended q = cross_attend(p.x, p.y, params, RcamMode::kFullDuplex);
  Tensor half_x = p.x.value(), half_y = p.y.value();
  half_x *= 0.5;
  half_y *= 0.5;
  EXPECT_LT(Tensor::max_abs_diff(q.q_x.value(), half_x), 1e-15);
  EXPECT_LT(Tensor::max_abs_diff(q.q_y.value(), half_y), 1e-15);
}

TEST(Rcam, MatchesScalarOracle) {
  nn::Rng rng = nn::make_rng(2, "rcam");
  const RcamLevelParams params(16, rng);
  const Pair p = random_pair(3);
  const CrossAttended q = cross_attend(p.x, p.y, params, RcamMode::kFullDuplex);
  EXPECT_LT(Tensor::max_abs_diff(q.q_x.value(), attend_oracle(p.x.value(), p.y.value(), params.theta)),
            1e-6);
  EXPECT_LT(Tensor::max_abs_diff(q.q_y.value(), attend_oracle(p.y.value(), p.x.value(), params.phi)),
            1e-6);
}

TEST(Rcam, ModesSelectWhichSideIsWeighted) {
  nn::Rng rng = nn::make_rng(3, "rcam");
  const RcamLevelParams params(16, rng);
  const Pair p = random_pair(4);
  const CrossAttended full = cross_attend(p.x, p.y, params, RcamMode::kFullDuplex);
  const CrossAttended a2m = cross_attend(p.x, p.y, params, RcamMode::kAppToMotion);
  const CrossAttended m2a = cross_attend(p.x, p.y, params, RcamMode::kMotionToApp);
  const CrossAttended none = cross_attend(p.x, p.y, params, RcamMode::kIndependent);

  EXPECT_EQ(Tensor::max_abs_diff(none.q_x.value(), p.x.value()), 0.0);
  EXPECT_EQ(Tensor::max_abs_diff(none.q_y.value(), p.y.value()), 0.0);
  EXPECT_EQ(Tensor::max_abs_diff(a2m.q_x.value(), p.x.value()), 0.0);
  EXPECT_EQ(Tensor::max_abs_diff(a2m.q_y.value(), full.q_y.value()), 0.0);
  EXPECT_EQ(Tensor::max_abs_diff(m2a.q_y.value(), p.y.value()), 0.0);
  EXPECT_EQ(Tensor::max_abs_diff(m2a.q_x.value(), full.q_x.value()), 0.0);
  EXPECT_GT(Tensor::max_abs_diff(full.q_x.value(), p.x.value()), 1e-6);
}

TEST(Rcam, OnlyTheGuideDescriptorMatters) {
  // Property: two guides with equal channel means give identical outputs,
  // whatever their spatial layout.
  nn::Rng rng = nn::make_rng(4, "rcam");
  const RcamLevelParams params(8, rng);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const Pair p = random_pair(10 + seed, 8, 6, 6);
    Tensor shuffled = p.y.value();
    std::mt19937_64 r(seed);
    for (int c = 0; c < 8; ++c) {
      double* plane = shuffled.channel(c);
      std::shuffle(plane, plane + shuffled.shape().plane(), r);
    }
    const Tensor a = cross_attend(p.x, p.y, params, RcamMode::kFullDuplex).q_x.value();
    const Tensor b =
        cross_attend(p.x, Var::constant(shuffled), params, RcamMode::kFullDuplex).q_x.value();
    EXPECT_LT(Tensor::max_abs_diff(a, b), 1e-12);
  }
}

TEST(Rcam, AttentionStaysInsideUnitInterval) {
  // |Q| < |X| strictly for any non-zero entry, since sigma lies in (0, 1).
  nn::Rng rng = nn::make_rng(5, "rcam");
  const RcamLevelParams params(16, rng);
  const Pair p = random_pair(5);
  const CrossAttended q = cross_attend(p.x, p.y, params, RcamMode::kFullDuplex);
  for (std::size_t i = 0; i < p.x.value().size(); ++i) {
    const double x = p.x.value()[i];
    const double qx = q.q_x.value()[i];
    EXPECT_LE(std::abs(qx), std::abs(x));
    EXPECT_GE(qx * x, 0.0);
  }
}

TEST(Rcam, GradientMatchesCentralDifferences) {
  nn::Rng rng = nn::make_rng(6, "rcam");
  const RcamLevelParams params(16, rng);
  nn::ParameterList list;
  params.phi.collect("phi", list);
  params.theta.collect("theta", list);
  std::mt19937_64 r(6);
  const Var x = Var::parameter(oracle::random_tensor(r, 16, 8, 8));
  const Var y = Var::parameter(oracle::random_tensor(r, 16, 8, 8));
  list.push_back({"x", x});
  list.push_back({"y", y});
  const Tensor w = oracle::random_tensor(r, 16, 8, 8);
  auto loss = [&] {
    const CrossAttended q = cross_attend(x, y, params, RcamMode::kFullDuplex);
    return ag::add(ag::sum(ag::mul(q.q_x, Var::constant(w))), ag::sum(ag::mul(q.q_y, q.q_y)));
  };
  const auto result = oracle::check_gradients(loss, list, 64, 1);
  EXPECT_LT(result.worst_relative, 1e-3) << result.worst_name;
}

TEST(Rcam, PyramidForwardDependsOnMode) {
  const BackboneConfig toy = BackboneConfig::toy();
  nn::Rng rng = nn::make_rng(7, "rcam");
  const Rcam rcam(toy, rng);
  nn::Rng mrng = nn::make_rng(7, "merge");
  const MergeBlocks merge(toy, true, mrng);
  std::mt19937_64 r(7);
  FeaturePyramid app, mot;
  app.branch = Branch::kAppearance;
  mot.branch = Branch::kMotion;
  for (int k = 0; k < 4; ++k) {
    app.levels.push_back(Var::constant(oracle::random_tensor(r, toy.channel_widths[k], 8 >> k, 8 >> k)));
    mot.levels.push_back(Var::constant(oracle::random_tensor(r, toy.channel_widths[k], 8 >> k, 8 >> k)));
  }
  const FeaturePyramid full = rcam.forward(app, mot, merge, RcamMode::kFullDuplex);
  const FeaturePyramid simplex = rcam.forward(app, mot, merge, RcamMode::kMotionToApp);
  ASSERT_EQ(full.size(), 4u);
  EXPECT_NO_THROW(full.validate());
  EXPECT_GT(Tensor::max_abs_diff(full[3].value(), simplex[3].value()), 1e-9);
  nn::ParameterList list;
  rcam.collect("rcam", list);
  EXPECT_EQ(nn::count_parameters(list), Rcam::parameter_count(toy));
}

TEST(Rcam, ModeNamesRoundTrip) {
  for (RcamMode m : {RcamMode::kFullDuplex, RcamMode::kAppToMotion, RcamMode::kMotionToApp,
                     RcamMode::kIndependent}) {
    EXPECT_EQ(rcam_mode_from_string(to_string(m)), m);
  }
  EXPECT_THROW(rcam_mode_from_string("half-duplex"), ContractError);
}
