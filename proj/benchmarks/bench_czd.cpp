#include <benchmark/benchmark.h>

#include <random>

#include "sqdiff/czdecomp.hpp"

using namespace sqdiff;

namespace {

czd::GridSet random_set(const geometry::HyperCube& q, double p) {
  czd::GridSet g(q, 27, 27);
  std::mt19937_64 gen(9);
  std::bernoulli_distribution coin(p);
  for (std::size_t k = 0; k < g.cell_count(); ++k) g.set(k, coin(gen));
  return g;
}

}  // namespace

static void BM_UnionMeasure(benchmark::State& state) {
  std::mt19937_64 gen(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::vector<czd::Box> boxes;
  for (int k = 0; k < state.range(0); ++k) {
    const double t = u(gen), a = u(gen), b = u(gen);
    boxes.push_back({t, t + 0.1, {a, b}, {a + 0.1, b + 0.1}});
  }
  for (auto _ : state) benchmark::DoNotOptimize(czd::union_measure(boxes));
}
BENCHMARK(BM_UnionMeasure)->Arg(16)->Arg(64)->Arg(256);

static void BM_Decompose(benchmark::State& state) {
  const geometry::HyperCube q(0.0, 1.0, geometry::AnisoCube(geometry::SqrtPoint({0.0, 1.0}), 1.0));
  const auto g = random_set(q, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(czd::cz_decompose(q, g, 0.5));
}
BENCHMARK(BM_Decompose)->Unit(benchmark::kMillisecond);

static void BM_VerifyA(benchmark::State& state) {
  const geometry::HyperCube q(0.0, 1.0, geometry::AnisoCube(geometry::SqrtPoint({0.0, 0.0}), 1.0));
  const auto g = random_set(q, 0.3);
  for (auto _ : state) benchmark::DoNotOptimize(czd::verify_a(g, q, 0.5));
}
BENCHMARK(BM_VerifyA)->Unit(benchmark::kMillisecond);
