#include <benchmark/benchmark.h>

#include "sqdiff/sde.hpp"

using namespace sqdiff;

static void BM_EulerStep(benchmark::State& state) {
  const auto n = static_cast<Eigen::Index>(state.range(0));
  const auto f = coeffs::CoefficientField::constant(coeffs::Matrix::Identity(n, n), coeffs::Vector::Ones(n), 2.0);
  sde::Stepper stepper(f, sde::Scheme::FullTruncationEuler);
  rng::PathRng r(3, 0);
  std::vector<double> x(static_cast<std::size_t>(n), 0.5);
  for (auto _ : state) {
    stepper.step(x, 1e-3, r);
    benchmark::DoNotOptimize(x.data());
  }
}
BENCHMARK(BM_EulerStep)->Arg(1)->Arg(2)->Arg(4);

static void BM_ExactCirStep(benchmark::State& state) {
  rng::PathRng r(4, 0);
  double x = 1.0;
  for (auto _ : state) {
    x = sde::exact_cir_step(x, 1.0, 0.5, 1.0, 0.01, r);
    benchmark::DoNotOptimize(x);
  }
}
BENCHMARK(BM_ExactCirStep);

static void BM_HitProb(benchmark::State& state) {
  const auto f = coeffs::CoefficientField::constant(coeffs::Matrix::Identity(2, 2), coeffs::Vector::Ones(2), 2.0);
  const geometry::HyperCube q(0.0, 1.0, geometry::AnisoCube(geometry::SqrtPoint({0.0, 0.0}), 1.0));
  czd::GridSet g(q, 27, 27);
  for (std::size_t c = 0; c < g.cell_count(); ++c) g.set(c, g.multi_index(c)[0] >= 13);
  sde::SimConfig cfg;
  cfg.h = 1e-3;
  cfg.path_count = 100;
  const std::vector<double> x{0.0, 0.0};
  for (auto _ : state) benchmark::DoNotOptimize(sde::simulate_stopped_many(cfg, f, q, &g, 0.0, x));
  state.SetItemsProcessed(state.iterations() * 100);
}
BENCHMARK(BM_HitProb)->Unit(benchmark::kMillisecond);
