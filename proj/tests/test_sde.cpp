#include <doctest.h>

#include <cmath>
#include <sstream>

#include "sqdiff/errors.hpp"
#include "sqdiff/sde.hpp"
#include "sqdiff/stats.hpp"

using namespace sqdiff;
using namespace sqdiff::sde;
using coeffs::Matrix;
using coeffs::Point;
using coeffs::Vector;
using geometry::AnisoCube;
using geometry::SqrtPoint;

namespace {

CoefficientField scalar_field(double a, double b, double lambda = 2.0) {
  return CoefficientField::constant(Matrix::Constant(1, 1, a), Vector::Constant(1, b), lambda);
}

CoefficientField cir1(double kappa, double m, double sigma2) {
  return CoefficientField::cir({{kappa}, {m}, {sigma2}}, 4.0);
}

}  // namespace

TEST_CASE("euler step by hand") {
  const auto f = scalar_field(1.0, 0.5);
  const std::vector<double> x{1.0}, z{1.0};
  CHECK(step_ft_euler(f, x, 0.01, z)[0] == doctest::Approx(1.0 + 0.005 + 0.1));
  const std::vector<double> small{0.01}, down{-10.0};
  CHECK(step_ft_euler(f, small, 0.01, down)[0] == 0.0);
  const std::vector<double> zero{0.0}, any{3.0};
  CHECK(step_ft_euler(f, zero, 0.01, any)[0] == doctest::Approx(0.005));

  const auto frozen = CoefficientField::custom(
      2, [](Point) { return Matrix::Identity(2, 2); }, [](Point) { return Vector::Zero(2); }, 1.0,
      [](Point) { return Matrix::Zero(2, 2); });
  const std::vector<double> x2{0.7, 2.5}, z2{1.3, -0.4};
  const auto y = step_ft_euler(frozen, x2, 0.1, z2);
  CHECK(y[0] == 0.7);
  CHECK(y[1] == 2.5);

  const std::vector<double> neg{-0.1};
  CHECK_THROWS_AS(step_ft_euler(f, neg, 0.01, z), InvalidArgument);
}

TEST_CASE("euler one-step mean and nonnegativity") {
  const auto f = scalar_field(1.0, 0.5);
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.seed = 11;
  cfg.path_count = 100000;
  cfg.workers = 4;
  const std::vector<double> x{1.0};
  const auto s = sample_marginal(cfg, f, cfg.h, x).component(0);
  const double se = stats::std_error(s);
  CHECK(std::abs(stats::mean(s) - (1.0 + 0.5e-3)) < 4.0 * se);

  const std::vector<double> low{0.001};
  cfg.path_count = 20000;
  const auto t = sample_marginal(cfg, f, 0.2, low).component(0);
  for (double v : t) REQUIRE(v >= 0.0);
}

TEST_CASE("exact cir transition") {
  const auto mo = cir_moments(1.0, 1.0, 0.5, 1.0, std::log(2.0));
  CHECK(mo.mean == doctest::Approx(0.75));
  const double e = 0.5;
  CHECK(mo.variance == doctest::Approx(1.0 * (e - e * e) + 0.5 / 2.0 * (1 - e) * (1 - e)));

  rng::PathRng r(5, 0);
  const int n = 200000;
  std::vector<double> d(n);
  for (auto& v : d) v = exact_cir_step(1.0, 1.0, 0.5, 1.0, std::log(2.0), r);
  CHECK(std::abs(stats::mean(d) - 0.75) < 4.0 * stats::std_error(d));
  CHECK(stats::variance(d) == doctest::Approx(mo.variance).epsilon(0.03));

  for (int k = 0; k < 100; ++k) CHECK(exact_cir_step(0.0, 1.0, 0.0, 1.0, 0.5, r) == 0.0);
  CHECK(exact_cir_step(2.0, 1.0, 0.5, 1.0, 0.0, r) == 2.0);
  CHECK_THROWS_AS(exact_cir_step(1.0, -1.0, 0.5, 1.0, 0.1, r), InvalidArgument);
}

TEST_CASE("stopped paths") {
  const auto f = scalar_field(1.0, 0.5);
  const HyperCube q(0.0, 1.0, AnisoCube(SqrtPoint({0.0}), 1.0));
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.seed = 3;
  const std::vector<double> x{0.25};

  const auto full = GridSet::full(q, 27, 27);
  const auto hit = simulate_stopped(cfg, f, q, &full, 0.2, x, 0);
  CHECK(hit.kind == StopKind::Hit);
  CHECK(hit.time == 0.2);

  const HyperCube thin(0.0, 1e-4, AnisoCube(SqrtPoint({0.0}), 1.0));
  const auto r = simulate_stopped(cfg, f, thin, nullptr, 0.0, x, 0);
  CHECK((r.kind == StopKind::Horizon || r.kind == StopKind::Exit));
  CHECK(r.time == doctest::Approx(1e-4));

  std::size_t calls = 0;
  double last_t = -1.0;
  const auto obs = simulate_stopped(cfg, f, q, nullptr, 0.0, x, 1, [&](double t, std::span<const double>, double dt) {
    CHECK(t > last_t);
    CHECK(dt <= cfg.h + 1e-15);
    last_t = t;
    ++calls;
  });
  CHECK(calls >= 1);
  CHECK(obs.time <= 1.0 + 1e-12);
  if (obs.kind == StopKind::Exit) CHECK(obs.state[0] >= 1.0);

  const std::vector<double> outside{1.5};
  CHECK_THROWS_AS(simulate_stopped(cfg, f, q, nullptr, 0.0, outside, 0), InvalidArgument);
}

TEST_CASE("results do not depend on the worker count") {
  const auto f = CoefficientField::constant(Matrix::Identity(2, 2), Vector::Ones(2), 2.0);
  const HyperCube q(0.0, 1.0, AnisoCube(SqrtPoint({0.0, 0.0}), 1.0));
  GridSet g(q, 27, 27);
  for (std::size_t k = 0; k < g.cell_count(); k += 5) g.set(k, true);
  SimConfig cfg;
  cfg.h = 1e-3;
  cfg.seed = 99;
  cfg.path_count = 500;
  const std::vector<double> x{0.1, 0.2};
  cfg.workers = 1;
  const auto a = simulate_stopped_many(cfg, f, q, &g, 0.0, x);
  cfg.workers = 7;
  const auto b = simulate_stopped_many(cfg, f, q, &g, 0.0, x);
  REQUIRE(a.size() == b.size());
  for (std::size_t p = 0; p < a.size(); ++p) {
    CHECK(a[p].kind == b[p].kind);
    CHECK(a[p].time == b[p].time);
    CHECK(a[p].state == b[p].state);
    CHECK(a[p].path_id == p);
  }
}

TEST_CASE("marginals and rescaling") {
  const auto f = scalar_field(1.0, 0.5);
  SimConfig cfg;
  cfg.h = 1e-2;
  cfg.path_count = 10;
  const std::vector<double> x{0.6};
  const auto s0 = sample_marginal(cfg, f, 0.0, x);
  REQUIRE(s0.size() == 10);
  for (double v : s0.values) CHECK(v == 0.6);

  cfg.path_count = 20000;
  cfg.workers = 4;
  const auto [a, b] = rescaled_pair(cfg, f, 1.0, 0.5, x);
  const auto ca = a.component(0), cb = b.component(0);
  CHECK(ca != cb);
  CHECK(stats::ks_statistic(ca, cb) < stats::ks_critical_95(ca.size(), cb.size()) * 1.3);
  CHECK_THROWS_AS(rescaled_pair(cfg, cir1(1.0, 0.5, 1.0), 4.0, 0.5, x), InvalidArgument);
  CHECK_THROWS_AS(rescaled_pair(cfg, f, 0.0, 0.5, x), InvalidArgument);
}

TEST_CASE("config validation and schemes") {
  const auto f = scalar_field(1.0, 0.5);
  SimConfig cfg;
  cfg.h = 0.0;
  CHECK_THROWS_AS(cfg.validate(f), InvalidArgument);
  cfg.h = 2.0;
  CHECK_THROWS_AS(cfg.validate(f), InvalidArgument);
  cfg.h = 1e-3;
  cfg.scheme = Scheme::ExactCir;
  CHECK_THROWS_AS(cfg.validate(f), InvalidArgument);
  CHECK_NOTHROW(cfg.validate(cir1(1.0, 0.5, 1.0)));
  CHECK(scheme_from_string("exact-cir") == Scheme::ExactCir);
  CHECK(scheme_from_string(to_string(Scheme::FullTruncationEuler)) == Scheme::FullTruncationEuler);
  CHECK_THROWS_AS(scheme_from_string("milstein"), InvalidArgument);
}

TEST_CASE("trajectory serialization") {
  const auto f = CoefficientField::cir({{1.0, 2.0}, {0.5, 1.0}, {1.0, 0.5}}, 3.0);
  SimConfig cfg;
  cfg.h = 0.01;
  cfg.path_count = 3;
  const std::vector<double> x{1.0, 0.2};
  const auto tr = simulate_paths(cfg, f, x, 10);
  CHECK(tr.at(2, 1, 0) == 0.2);
  std::stringstream bin;
  write_trajectory_binary(bin, tr);
  const auto back = read_trajectory_binary(bin);
  CHECK(back.dim == 2);
  CHECK(back.steps == 10);
  CHECK(back.paths == 3);
  CHECK(back.h == tr.h);
  CHECK(back.data == tr.data);

  std::stringstream csv;
  write_trajectory_csv(csv, tr);
  std::string line;
  std::size_t rows = 0;
  std::getline(csv, line);
  CHECK(line == "path,k,t,x0,x1");
  while (std::getline(csv, line)) ++rows;
  CHECK(rows == 3 * 11);

  std::stringstream cut(bin.str().substr(0, 20));
  CHECK_THROWS_AS(read_trajectory_binary(cut), InvalidArgument);
}
