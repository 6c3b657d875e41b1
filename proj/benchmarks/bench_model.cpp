#include <benchmark/benchmark.h>

#include "dermfuse/data.hpp"
#include "dermfuse/losses.hpp"
#include "dermfuse/model.hpp"
#include "dermfuse/train.hpp"

using namespace dermfuse;

namespace {

RunConfig bench_cfg() {
  RunConfig cfg;
  cfg.data.n_train = 32;
  cfg.data.n_val = 8;
  cfg.data.n_test = 8;
  return cfg;
}

}  // namespace

static void BM_SampleForward(benchmark::State& state) {
  RunConfig cfg = bench_cfg();
  Model model(cfg);
  Dataset data = generate_dataset(cfg);
  const Sample& s = data.samples[0];
  for (auto _ : state) {
    Tensor logits = model.forward(s.x_cli, s.x_der, s.x_meta);
    benchmark::DoNotOptimize(logits.data().data());
  }
}
BENCHMARK(BM_SampleForward);

static void BM_TrainStep(benchmark::State& state) {
  RunConfig cfg = bench_cfg();
  cfg.train.batch_size = static_cast<int>(state.range(0));
  Model model(cfg);
  Dataset data = generate_dataset(cfg);
  std::vector<TrainExample> batch;
  for (int i = 0; i < cfg.train.batch_size; ++i) {
    batch.push_back(to_example(data.samples[static_cast<size_t>(i)]));
  }
  Adam adam(cfg.train);
  for (auto _ : state) {
    Tape tape;
    Tensor loss;
    {
      Tape::Scope scope(tape);
      loss = batch_loss(model, batch, cfg.train);
    }
    for (NamedParam& p : model.parameters()) p.tensor.zero_grad();
    tape.backward(loss);
    adam.step(model.parameters(), 1e-4);
    benchmark::DoNotOptimize(loss.value());
  }
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

static void BM_GenerateDataset(benchmark::State& state) {
  RunConfig cfg = bench_cfg();
  cfg.data.n_train = static_cast<int>(state.range(0));
  cfg.data.n_val = 0;
  cfg.data.n_test = 0;
  for (auto _ : state) {
    Dataset ds = generate_dataset(cfg);
    benchmark::DoNotOptimize(ds.samples.size());
  }
}
BENCHMARK(BM_GenerateDataset)->Arg(64)->Arg(413)->Unit(benchmark::kMillisecond);
