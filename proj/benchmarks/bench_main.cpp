#include <benchmark/benchmark.h>

#include <random>

#include "fslab/autograd.hpp"
#include "fslab/metrics.hpp"
#include "fslab/network.hpp"

using namespace fslab;
using ag::Var;

namespace {

Tensor noise(std::mt19937_64& rng, int c, int h, int w) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Tensor t(c, h, w);
  for (double& v : t.values()) v = u(rng);
  return t;
}

void BM_Conv3x3(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  std::mt19937_64 rng(1);
  const Var x = Var::constant(noise(rng, ch, 32, 32));
  const Var w = Var::constant(noise(rng, ch, ch, 9));
  ag::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(ag::conv2d(x, w, Var(), 3, 1, 1).value()[0]);
  state.SetItemsProcessed(state.iterations() * 32 * 32 * ch * ch * 9);
}
BENCHMARK(BM_Conv3x3)->Arg(16)->Arg(32)->Arg(64);

void BM_Forward(benchmark::State& state) {
  NetworkConfig nc;
  nc.bpm.units = static_cast<int>(state.range(0));
  const FsNet net(nc);
  std::mt19937_64 rng(2);
  const Var a = Var::constant(noise(rng, 3, 64, 64));
  const Var m = Var::constant(noise(rng, 3, 64, 64));
  ag::NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(a, m).s_a.value()[0]);
}
BENCHMARK(BM_Forward)->Arg(0)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_ForwardBackward(benchmark::State& state) {
  NetworkConfig nc;
  nc.bpm.units = 2;
  const FsNet net(nc);
  std::mt19937_64 rng(3);
  const Var a = Var::constant(noise(rng, 3, 64, 64));
  const Var m = Var::constant(noise(rng, 3, 64, 64));
  Tensor gt(1, 64, 64);
  for (int y = 16; y < 48; ++y) {
    for (int x = 16; x < 40; ++x) gt.at(0, y, x) = 1.0;
  }
  for (auto _ : state) {
    ag::backward(total_loss(net.forward(a, m), gt));
    for (auto p : net.parameters()) p.var.zero_grad();
  }
}
BENCHMARK(BM_ForwardBackward)->Unit(benchmark::kMillisecond);

void BM_FrameMetrics(benchmark::State& state) {
  const int size = static_cast<int>(state.range(0));
  std::mt19937_64 rng(4);
  const Tensor s = noise(rng, 1, size, size);
  const Tensor g = binarize(noise(rng, 1, size, size), 0.7);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate_frame("c", 0, s, g).s_alpha);
}
BENCHMARK(BM_FrameMetrics)->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
