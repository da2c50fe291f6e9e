/**
 * Copyright 2026 The ltuda Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 * http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

#include "ltuda/augment.hpp"
#include "ltuda/backbone.hpp"
#include "ltuda/evaluate.hpp"
#include "ltuda/prototypes.hpp"

namespace {

using namespace ltuda;

Tensor<float> noise(int n, int size) {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> d;
  Tensor<float> x(n, 1, size, size);
  for (auto& v : x.data) v = d(rng);
  return x;
}

BackboneConfig desk_config() {
  BackboneConfig c;
  c.num_classes = 4;
  c.depth = 3;
  c.base_width = 8;
  c.embed_dim = 64;
  return c;
}

void BM_UNetForward(benchmark::State& state) {
  UNet<float> net(desk_config(), 1);
  const auto x = noise(2, static_cast<int>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(net.forward(x, Mode::kEval).probs.data.data());
}
BENCHMARK(BM_UNetForward)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_UNetTrainStep(benchmark::State& state) {
  UNet<float> net(desk_config(), 1);
  const auto x = noise(2, static_cast<int>(state.range(0)));
  for (auto _ : state) {
    const auto& out = net.forward(x, Mode::kTrain);
    Tensor<float> g = out.probs;
    net.zero_grad();
    net.backward(g, nullptr);
  }
}
BENCHMARK(BM_UNetTrainStep)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_CutMix(benchmark::State& state) {
  const Size2 s{128, 128};
  const PseudoSample a{ImageGrid(s, 0.2f), HardLabelMap{LabelGrid(s, 1)}, LabelGrid(s, 1)};
  const PseudoSample b{ImageGrid(s, 0.8f), HardLabelMap{LabelGrid(s, 2)}, LabelGrid(s, 2)};
  Rng rng(3);
  for (auto _ : state) {
    const auto spec = sample_mixspec(s, rng);
    benchmark::DoNotOptimize(cutmix(a, b, spec).image.values().data());
  }
}
BENCHMARK(BM_CutMix);

void BM_ProtoPredict(benchmark::State& state) {
  const int dim = 64;
  PrototypeBank bank(4, static_cast<int>(state.range(0)), dim, 0.999);
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d;
  for (auto& v : bank.protos) v = d(rng);
  for (int c = 0; c < bank.num_classes; ++c) {
    for (int k = 0; k < bank.per_class; ++k) {
      auto p = bank.proto(c, k);
      double n = 0.0;
      for (double v : p) n += v * v;
      for (double& v : p) v /= std::sqrt(n);
      bank.initialized[bank.slot(c, k)] = 1;
    }
  }
  EmbeddingMap e(dim, Size2{128, 128});
  for (auto& v : e.values) v = d(rng);
  const auto unit = l2_normalize(e);
  for (auto _ : state) benchmark::DoNotOptimize(proto_predict(unit, bank));
}
BENCHMARK(BM_ProtoPredict)->Arg(1)->Arg(2)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_Hausdorff(benchmark::State& state) {
  const int n = static_cast<int>(state.range(0));
  HardLabelMap a{LabelGrid(n, n, 0)};
  HardLabelMap b{LabelGrid(n, n, 0)};
  for (int y = n / 4; y < 3 * n / 4; ++y) {
    for (int x = n / 4; x < 3 * n / 4; ++x) {
      a.classes(y, x) = 1;
      b.classes(y, (x + n / 8) % n) = 1;
    }
  }
  for (auto _ : state) benchmark::DoNotOptimize(hausdorff(a, b, 1));
}
BENCHMARK(BM_Hausdorff)->Arg(128)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
