// SPDX-License-Identifier: Apache-2.0
// Serial reference kernels against the OpenMP ones.
#include <benchmark/benchmark.h>

#include <cmath>
#include <random>
#include <vector>

#include "rcs/features.hpp"
#include "rcs/kernels/conv.hpp"

namespace {

using rcs::kernels::ConvShape;

std::vector<float> noise(std::size_t n, unsigned seed) {
  std::mt19937 g(seed);
  std::normal_distribution<float> d;
  std::vector<float> v(n);
  for (auto& x : v) x = d(g);
  return v;
}

// One training batch of a 500 x 39 segment, 32 -> 32 channels.
ConvShape conv_shape(benchmark::State& state) {
  return {static_cast<std::size_t>(state.range(0)), 500, 39, 32, 32};
}

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto in = noise(s.input_size(), 1), k = noise(s.kernel_size(), 2), b = noise(s.out_channels, 3);
  std::vector<float> out(s.output_size());
  for (auto _ : state) {
    if constexpr (Reference)
      rcs::kernels::reference::conv2d_forward<float>(s, in, k, b, out);
    else
      rcs::kernels::conv2d_forward<float>(s, in, k, b, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(s.batch));
}

template <bool Reference>
void BM_ConvBackward(benchmark::State& state) {
  const auto s = conv_shape(state);
  const auto in = noise(s.input_size(), 1), k = noise(s.kernel_size(), 2), go = noise(s.output_size(), 3);
  std::vector<float> gi(s.input_size()), gk(s.kernel_size()), gb(s.out_channels);
  for (auto _ : state) {
    if constexpr (Reference)
      rcs::kernels::reference::conv2d_backward<float>(s, in, k, go, gi, gk, gb);
    else
      rcs::kernels::conv2d_backward<float>(s, in, k, go, gi, gk, gb);
    benchmark::DoNotOptimize(gk.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(s.batch));
}

template <bool Reference>
void BM_LogMel(benchmark::State& state) {
  rcs::AudioSignal a;
  a.sample_rate = 16000;
  a.samples = noise(static_cast<std::size_t>(state.range(0)) * 16000, 4);
  const rcs::FeatureConfig fc;
  for (auto _ : state) {
    auto s = Reference ? rcs::reference::compute_log_mel(a, fc) : rcs::compute_log_mel(a, fc);
    benchmark::DoNotOptimize(s.data.data());
  }
  state.SetItemsProcessed(state.iterations() * state.range(0));
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/openmp")->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/reference")->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/openmp")->Arg(1)->Arg(4)->Unit(benchmark::kMillisecond);
// Seconds of audio; the reference uses a direct DFT so keep it short.
BENCHMARK(BM_LogMel<true>)->Name("log_mel/reference")->Arg(2)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_LogMel<false>)->Name("log_mel/openmp")->Arg(2)->Arg(60)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
