// Copyright 2026 The CSN Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#include <numeric>
#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "csn/autodiff.hpp"
#include "csn/metrics.hpp"
#include "csn/model.hpp"
#include "csn/synthgen.hpp"
#include "csn/training.hpp"

using namespace csn;

namespace {

Tensor uniform(Shape shape, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  Tensor t(std::move(shape));
  for (auto& v : t.mutable_data()) v = u(rng);
  return t;
}

void BM_Conv2dForward(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const Tensor x = uniform({c, 32, 32}, 1), k = uniform({16, c, 3, 3}, 2);
  for (auto _ : state) {
    ad::Tape tape;
    benchmark::DoNotOptimize(ad::conv2d(tape.constant(x), tape.constant(k), 1).value().data().data());
  }
}
BENCHMARK(BM_Conv2dForward)->Arg(3)->Arg(8)->Arg(16);

void BM_Conv2dBackward(benchmark::State& state) {
  const Tensor x = uniform({8, 32, 32}, 1), k = uniform({16, 8, 3, 3}, 2);
  for (auto _ : state) {
    ad::Tape tape;
    const ad::Var kv = tape.leaf(k);
    tape.backward(ad::sum(ad::conv2d(tape.leaf(x), kv, 2)));
    benchmark::DoNotOptimize(tape.grad(kv).data().data());
  }
}
BENCHMARK(BM_Conv2dBackward);

void BM_BackboneForward(benchmark::State& state) {
  const BackboneConfig config;
  const BackboneParams params = init_backbone(config, 3);
  const Tensor image = uniform({3, 32, 32}, 4, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(extract_features(image, params, config).values.data().data());
}
BENCHMARK(BM_BackboneForward);

struct Fixture {
  GenConfig gen;
  ConceptRegistry registry = default_registry(gen);
  GeneratedDataset data = generate_scenes(gen, registry, 64, 9);
  TrainingSet set = to_training_set(data.images, data.eval_records);
};

const Fixture& fixture() {
  static const Fixture f;
  return f;
}

// Loss and gradients for every label of `range(0)` images.
void BM_BatchGradients(benchmark::State& state) {
  const Fixture& f = fixture();
  const auto mode = static_cast<SharingMode>(state.range(1));
  const CsnModel model = make_model(BackboneConfig{}, f.registry, mode, 5);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < f.set.examples.size(); ++i)
    if (f.set.examples[i].image < static_cast<std::size_t>(state.range(0))) idx.push_back(i);
  for (auto _ : state) benchmark::DoNotOptimize(batch_gradients(model, f.set, idx).loss);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) * state.range(0));
}
BENCHMARK(BM_BatchGradients)
    ->ArgsProduct({{1, 4}, {static_cast<int>(SharingMode::kNone), static_cast<int>(SharingMode::kPartAndPattern),
                            static_cast<int>(SharingMode::kSoft)}});

void BM_TrainEpoch(benchmark::State& state) {
  const Fixture& f = fixture();
  TrainConfig tc;
  tc.epochs = 1;
  tc.batch_size = 4;
  const CsnModel model = make_model(BackboneConfig{}, f.registry, SharingMode::kPartAndPattern, 5);
  for (auto _ : state) benchmark::DoNotOptimize(train(model, f.set, tc).history.back().mean_loss);
  state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations() * f.set.images.size()));
}
BENCHMARK(BM_TrainEpoch)->Unit(benchmark::kMillisecond);

void BM_AveragePrecision(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    s[i] = u(rng);
    y[i] = u(rng) < 0.2 || i == 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(average_precision(s, y));
}
BENCHMARK(BM_AveragePrecision)->Arg(300)->Arg(10000);

}  // namespace

BENCHMARK_MAIN();
