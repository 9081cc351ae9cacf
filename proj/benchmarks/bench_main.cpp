#include <benchmark/benchmark.h>

#include <random>

#include "rubikssl/cubeops.hpp"
#include "rubikssl/layers.hpp"
#include "rubikssl/model.hpp"
#include "rubikssl/permbank.hpp"
#include "rubikssl/synthetic.hpp"

using namespace rubikssl;

static void BM_GenerateBank(benchmark::State& state) {
  const int k = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(generate_bank(8, k, 0));
}
BENCHMARK(BM_GenerateBank)->Arg(10)->Arg(100)->Unit(benchmark::kMillisecond);

static void BM_Conv3dForwardBackward(benchmark::State& state) {
  const auto c = state.range(0), s = state.range(1);
  ParamStore ps;
  nn::Conv3d conv(ps, "c", Role::encoder, c, c, 3);
  init_params(ps, 1);
  Tensor x({2, c, s, s, s});
  std::mt19937 g(0);
  std::normal_distribution<float> d;
  for (auto& v : x.values()) v = d(g);
  for (auto _ : state) {
    Tensor y = conv.forward(x);
    benchmark::DoNotOptimize(conv.backward(y, true));
  }
  state.SetItemsProcessed(state.iterations() * 2 * s * s * s);
}
BENCHMARK(BM_Conv3dForwardBackward)->Args({8, 16})->Args({16, 32})->Unit(benchmark::kMillisecond);

static void BM_ProxySample(benchmark::State& state) {
  const auto v = SyntheticGenerator(1, {1, 80, 80, 80}, 2, 0).make(0).volume;
  const auto bank = generate_bank(8, 100, 0);
  GridSpec grid;
  grid.cube = {32, 32, 32};
  std::uint64_t seed = 0;
  for (auto _ : state) benchmark::DoNotOptimize(make_proxy_sample(v, grid, bank, 0.5, seed++));
}
BENCHMARK(BM_ProxySample)->Unit(benchmark::kMicrosecond);

static void BM_ProxyForward(benchmark::State& state) {
  ProxyModel m(BackboneConfig::small(), {8, 100, {32, 32, 32}}, 0);
  const auto v = SyntheticGenerator(1, {1, 80, 80, 80}, 2, 0).make(0).volume;
  const auto bank = generate_bank(8, 100, 0);
  GridSpec grid;
  grid.cube = {32, 32, 32};
  std::vector<ProxySample> batch;
  for (int i = 0; i < 4; ++i) batch.push_back(make_proxy_sample(v, grid, bank, 0.5, static_cast<std::uint64_t>(i)));
  for (auto _ : state) benchmark::DoNotOptimize(m.forward(std::span<const ProxySample>(batch)));
}
BENCHMARK(BM_ProxyForward)->Unit(benchmark::kMillisecond);
BENCHMARK_MAIN();
