// Copyright 2026 The Triad Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "triad/trainer.hpp"

namespace triad {
namespace {

Tensor random_tensor(Shape shape, Rng& rng) {
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> data(numel(shape));
  for (double& v : data) v = dist(rng);
  return Tensor(std::move(shape), std::move(data));
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = random_tensor({n, n}, rng), b = random_tensor({n, n}, rng);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_AttentionForwardBackward(benchmark::State& state) {
  const auto len = static_cast<std::size_t>(state.range(0));
  Rng rng(2);
  Tensor x = random_tensor({8, len, 64}, rng);
  x.set_requires_grad(true);
  for (auto _ : state) {
    backward(sum(attention(x, x, x, 4, AttentionMask::causal(len))));
    x.zero_grad();
  }
}
BENCHMARK(BM_AttentionForwardBackward)->Arg(16)->Arg(32);

void BM_FineSimilarityMatrix(benchmark::State& state) {
  const auto batch = static_cast<std::size_t>(state.range(0));
  Rng rng(3);
  const Tensor q = l2_normalize(random_tensor({batch, 16, 64}, rng));
  const Tensor t = l2_normalize(random_tensor({batch, 8, 64}, rng));
  const Tensor qw = softmax(random_tensor({batch, 16}, rng), 1), tw = softmax(random_tensor({batch, 8}, rng), 1);
  const std::vector<std::uint8_t> qmask(batch * 16, 1), tmask(batch * 8, 1);
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(fine_similarity_matrix(q, qmask, qw, t, tmask, tw));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch * batch));
}
BENCHMARK(BM_FineSimilarityMatrix)->Arg(16)->Arg(32)->Arg(64);

void BM_TrainStep(benchmark::State& state) {
  TrainConfig config;
  config.batch_size = static_cast<std::size_t>(state.range(0));
  config.total_steps = 1000000;
  Trainer trainer(config);
  const Batch batch = trainer.batch_for_step(0);
  for (auto _ : state) benchmark::DoNotOptimize(trainer.train_step(batch));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_TrainStep)->Arg(8)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_GreedyCaption(benchmark::State& state) {
  const Trainer trainer{TrainConfig{}};
  const Batch batch = trainer.batch_for_step(0);
  NoGradGuard guard;
  const EncodedBatch enc =
      trainer.model().encode(nullptr, slice(batch.frames, 0, 0, 1), slice(batch.spectrograms, 0, 0, 1));
  const ConditionalFeatures cond = trainer.model().decoder().build_conditions(enc.vision, enc.audio);
  GenerationConfig gen;
  gen.max_length = 14;
  for (auto _ : state) benchmark::DoNotOptimize(generate_caption(trainer.model().decoder(), cond, gen));
}
BENCHMARK(BM_GreedyCaption)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace triad

BENCHMARK_MAIN();
