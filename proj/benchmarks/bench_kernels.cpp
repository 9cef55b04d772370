#include <benchmark/benchmark.h>

#include <random>

#include "stbp/arch.hpp"
#include "stbp/loss.hpp"
#include "stbp/neuron.hpp"
#include "stbp/tdbn.hpp"

namespace {

using namespace stbp;

Tensor random_tensor(const Shape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> d(0.0f, 1.0f);
  Tensor t(s);
  for (auto& v : t.values()) v = d(rng);
  return t;
}

void BM_Conv2d(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const Tensor x = random_tensor(Shape{2, 8, ch, 16, 16}, 1);
  ConvParams p(ch, ch, 3, 1, 1);
  std::mt19937_64 rng(2);
  std::normal_distribution<float> d(0.0f, 0.1f);
  for (auto& w : p.weight) w = d(rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.values().size()) * ch * 9);
}
BENCHMARK(BM_Conv2d)->Arg(8)->Arg(32);

void BM_LifForward(benchmark::State& state) {
  const Tensor x = random_tensor(Shape{8, 8, 32, 16, 16}, 3);
  LifHyper h;
  for (auto _ : state) benchmark::DoNotOptimize(lif_forward(x, h));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.values().size()));
}
BENCHMARK(BM_LifForward);

void BM_TdBnTrain(benchmark::State& state) {
  const Tensor x = random_tensor(Shape{8, 8, 32, 16, 16}, 4);
  TdBnParams p(32);
  for (auto _ : state) benchmark::DoNotOptimize(tdbn_forward_train(x, p));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(x.values().size()));
}
BENCHMARK(BM_TdBnTrain);

void BM_ResNetStep(benchmark::State& state) {
  ArchConfig arch;
  arch.input_hw = 16;
  Network net = build_network<float>(arch);
  init_weights(net, 5);
  const Tensor x = random_tensor(Shape{2, 4, 3, 16, 16}, 6);
  const Matrix y = one_hot<float>({0, 1, 2, 3}, 10);
  for (auto _ : state) {
    auto fr = forward_pass(net, x, Mode::kTrain);
    benchmark::DoNotOptimize(
        backward_pass(net, softmax_ce(fr.logits, y).grad_q, fr.tape));
  }
}
BENCHMARK(BM_ResNetStep)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
