#include <benchmark/benchmark.h>

#include "fusionsam/data.hpp"
#include "fusionsam/lstg.hpp"
#include "fusionsam/ops.hpp"
#include "fusionsam/random.hpp"
#include "fusionsam/training.hpp"

using namespace fusionsam;

namespace {

Tensor uniform(Shape shape, Rng& rng) {
  Tensor t = Tensor::zeros(shape);
  for (Scalar& v : t.mutable_data()) v = rng.uniform(-1, 1);
  return t;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(0);
  const Tensor a = uniform({n, n}, rng), b = uniform({n, n}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_Conv2d(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor x = uniform({1, 16, hw, hw}, rng), w = uniform({16, 16, 3, 3}, rng), b = uniform({16}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(conv2d(x, w, b, 1, 1));
}
BENCHMARK(BM_Conv2d)->Arg(16)->Arg(32)->Arg(64);

void BM_Quantize(benchmark::State& state) {
  const auto k = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Codebook cb = Codebook::init(k, 32, rng);
  const Tensor z = uniform({8, 8, 32}, rng);
  for (auto _ : state) benchmark::DoNotOptimize(quantize(z, cb, false));
}
BENCHMARK(BM_Quantize)->Arg(128)->Arg(512);

// One epoch of one batch: a full generator plus discriminator update.
void BM_TrainStep(benchmark::State& state) {
  SynthConfig s;
  std::vector<PairedSample> data;
  for (std::size_t i = 0; i < 4; ++i) data.push_back(synth_sample(s, Split::train, i));
  TrainConfig c;
  c.model.num_classes = 4;
  c.model.latent_dim = 32;
  c.model.codebook_size = 128;
  c.batch_size = 4;
  c.epochs = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train(c, data).steps_done);
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
