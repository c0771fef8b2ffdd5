// Copyright 2026 The irisdeform Authors
// SPDX-License-Identifier: Apache-2.0

#include <benchmark/benchmark.h>

#include "irisdeform/deform_net.hpp"
#include "irisdeform/geometry.hpp"
#include "irisdeform/iris_code.hpp"
#include "irisdeform/ops.hpp"
#include "irisdeform/random.hpp"
#include "irisdeform/synth.hpp"
#include "irisdeform/tensor.hpp"

namespace {

using namespace irisdeform;

nn::Tensor<float> random_tensor(nn::Shape shape, std::uint64_t seed) {
  nn::Tensor<float> t(shape);
  Rng rng(seed);
  for (auto& v : t.values()) v = static_cast<float>(rng.uniform(-1.0, 1.0));
  return t;
}

synth::SynthFrame frame() {
  synth::SynthConfig c;
  c.seed = 1;
  c.n_eyes = 1;
  return synth::render_frame(c, 0, 0);
}

void BM_Conv2d3x3(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  nn::NoGradGuard guard;
  const nn::Var<float> x(random_tensor({1, ch, 96, 128}, 1));
  const nn::Var<float> w(random_tensor({ch, ch, 3, 3}, 2));
  const nn::Var<float> b(random_tensor({ch}, 3));
  for (auto _ : state) benchmark::DoNotOptimize(nn::conv2d(x, w, b, 1, 1));
  state.SetItemsProcessed(state.iterations() * 96 * 128 * ch * ch * 9);
}
BENCHMARK(BM_Conv2d3x3)->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);

void BM_Normalize(benchmark::State& state) {
  const auto f = frame();
  for (auto _ : state) benchmark::DoNotOptimize(geometry::normalize(f.image, f.ann, 512, 64));
}
BENCHMARK(BM_Normalize)->Unit(benchmark::kMicrosecond);

void BM_Denormalize(benchmark::State& state) {
  const auto f = frame();
  const auto n = geometry::normalize(f.image, f.ann, 512, 64);
  for (auto _ : state) benchmark::DoNotOptimize(geometry::denormalize(n, f.ann, 96, 128));
}
BENCHMARK(BM_Denormalize)->Unit(benchmark::kMicrosecond);

void BM_EncodeIris(benchmark::State& state) {
  const auto f = frame();
  const FilterBank bank = default_filter_bank();
  for (auto _ : state) benchmark::DoNotOptimize(eval::encode_iris(f.image, f.ann, f.mask, bank, 512, 64));
}
BENCHMARK(BM_EncodeIris)->Unit(benchmark::kMillisecond);

void BM_CompareCodes(benchmark::State& state) {
  eval::IrisCode a(48, 512, 7), b(48, 512, 7);
  Rng rng(4);
  for (int r = 0; r < 48; ++r)
    for (int c = 0; c < 512; ++c)
      for (int k = 0; k < 7; ++k) {
        a.set(r, c, k, rng.uniform() < 0.5, true);
        b.set(r, c, k, rng.uniform() < 0.5, rng.uniform() < 0.9);
      }
  for (auto _ : state) benchmark::DoNotOptimize(eval::compare_codes(a, b, 8));
}
BENCHMARK(BM_CompareCodes)->Unit(benchmark::kMicrosecond);

void BM_DeformNetInfer(benchmark::State& state) {
  nn::ModelConfig c;
  c.depth = 4;
  c.base_channels = 16;
  c.seed = 1;
  const nn::DeformNet<float> net(c);
  const auto f = frame();
  for (auto _ : state) benchmark::DoNotOptimize(net.infer(f.image, f.mask));
}
BENCHMARK(BM_DeformNetInfer)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
