/* Copyright 2026 The rtdetr-desk Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

// Hot paths: matching at the default query count, one forward pass, one
// training step, and scoring a prediction set.

#include <benchmark/benchmark.h>

#include "rtdetr/matching.hpp"
#include "rtdetr/metrics.hpp"
#include "rtdetr/rng.hpp"
#include "rtdetr/synth.hpp"
#include "rtdetr/training.hpp"

namespace rtdetr {
namespace {

void BM_Hungarian(benchmark::State& state) {
  const auto m = static_cast<std::size_t>(state.range(0));
  const auto n = static_cast<std::size_t>(state.range(1));
  Rng rng(1);
  CostMatrix cost(m, n);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) cost(i, j) = rng.uniform(-2, 2);
  }
  for (auto _ : state) benchmark::DoNotOptimize(hungarian(cost));
}
BENCHMARK(BM_Hungarian)->Args({10, 100})->Args({50, 300});

void BM_Forward(benchmark::State& state) {
  const DetectionModel model(ModelConfig{}, 7);
  const AnnotatedImage scene = generate_scene(SceneSpec{}, 0);
  for (auto _ : state) benchmark::DoNotOptimize(model.forward(scene.image));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_TrainEpochOneImage(benchmark::State& state) {
  DetectionModel model(ModelConfig{}, 7);
  const auto data = generate_dataset(SceneSpec{}, 1);
  const TrainConfig config;
  OptimizerState opt;
  std::size_t epoch = 1;
  for (auto _ : state) benchmark::DoNotOptimize(train_epoch(model, data, config, opt, epoch++));
}
BENCHMARK(BM_TrainEpochOneImage)->Unit(benchmark::kMillisecond);

void BM_Evaluate(benchmark::State& state) {
  const DetectionModel model(ModelConfig{}, 7);
  const auto data = generate_dataset(SceneSpec{}, static_cast<std::size_t>(state.range(0)));
  const auto samples = predict_samples(model, data);
  for (auto _ : state) benchmark::DoNotOptimize(evaluate(samples));
}
BENCHMARK(BM_Evaluate)->Arg(8)->Arg(64)->Unit(benchmark::kMillisecond);

}  // namespace
}  // namespace rtdetr

BENCHMARK_MAIN();
