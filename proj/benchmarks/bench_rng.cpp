#include <benchmark/benchmark.h>

#include "sqdiff/rng.hpp"

using namespace sqdiff::rng;

static void BM_Philox(benchmark::State& state) {
  Block c{0, 0, 0, 0};
  const Key k{1, 2};
  for (auto _ : state) {
    c = philox4x32(c, k);
    benchmark::DoNotOptimize(c);
  }
}
BENCHMARK(BM_Philox);

static void BM_Uniform(benchmark::State& state) {
  PathRng r(1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(r.uniform());
}
BENCHMARK(BM_Uniform);

static void BM_Normal(benchmark::State& state) {
  PathRng r(1, 0);
  for (auto _ : state) benchmark::DoNotOptimize(r.normal());
}
BENCHMARK(BM_Normal);
