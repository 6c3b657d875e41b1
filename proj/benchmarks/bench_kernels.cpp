#include <benchmark/benchmark.h>

#include "dermfuse/losses.hpp"
#include "dermfuse/ops.hpp"
#include "dermfuse/rng.hpp"

using namespace dermfuse;

static void BM_Matmul(benchmark::State& state) {
  const int64_t n = state.range(0);
  Rng rng(1);
  Tensor a = Tensor::randn({n, n}, rng);
  Tensor b = Tensor::randn({n, n}, rng);
  for (auto _ : state) {
    Tensor c = matmul(a, b);
    benchmark::DoNotOptimize(c.data().data());
  }
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128)->Arg(256);

static void BM_Softmax(benchmark::State& state) {
  Rng rng(2);
  Tensor x = Tensor::randn({64, 64}, rng);
  for (auto _ : state) {
    Tensor y = softmax(x, 1);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_Softmax);

static void BM_LayerNorm(benchmark::State& state) {
  Rng rng(3);
  Tensor x = Tensor::randn({64, 128}, rng);
  Tensor g = Tensor::full({128}, 1.0);
  Tensor b = Tensor::zeros({128});
  for (auto _ : state) {
    Tensor y = layer_norm(x, g, b);
    benchmark::DoNotOptimize(y.data().data());
  }
}
BENCHMARK(BM_LayerNorm);

static void BM_TwoWayLossForwardBackward(benchmark::State& state) {
  Rng rng(4);
  Tensor logits = Tensor::randn({32, 24}, rng, 2.0);
  logits.set_requires_grad(true);
  Tensor targets = Tensor::zeros({32, 24});
  for (int64_t i = 0; i < 32; ++i) {
    targets.data()[static_cast<size_t>(i * 24 + rng.below(24))] = 1.0;
  }
  for (auto _ : state) {
    logits.zero_grad();
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = two_way_loss(logits, targets, 4.0);
    }
    tape.backward(loss);
    benchmark::DoNotOptimize(logits.grad().data());
  }
}
BENCHMARK(BM_TwoWayLossForwardBackward);

BENCHMARK_MAIN();
