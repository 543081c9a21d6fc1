#include <doctest.h>

#include <cmath>
#include <random>

#include "sqdiff/coeffs.hpp"
#include "sqdiff/errors.hpp"

using namespace sqdiff;
using namespace sqdiff::coeffs;

namespace {

CoefficientField scalar_field(double a, double b, double lambda) {
  return CoefficientField::constant(Matrix::Constant(1, 1, a), Vector::Constant(1, b), lambda);
}

SmoothProbe power_probe(double p) {
  SmoothProbe pr;
  pr.u = [p](double, Point x) { return std::pow(x[0], p); };
  pr.du_dt = [](double, Point) { return 0.0; };
  pr.grad = [p](double, Point x) { return Vector::Constant(1, p >= 1.0 ? p * std::pow(x[0], p - 1.0) : 0.0); };
  pr.hessian = [p](double, Point x) {
    return Matrix::Constant(1, 1, p >= 2.0 ? p * (p - 1.0) * std::pow(x[0], p - 2.0) : 0.0);
  };
  return pr;
}

// u(t, x) = exp(-t) (x1^2 x2 + 3 x1 + sin x2) in two dimensions.
SmoothProbe mixed_probe() {
  SmoothProbe pr;
  pr.u = [](double t, Point x) { return std::exp(-t) * (x[0] * x[0] * x[1] + 3 * x[0] + std::sin(x[1])); };
  pr.du_dt = [](double t, Point x) {
    return -std::exp(-t) * (x[0] * x[0] * x[1] + 3 * x[0] + std::sin(x[1]));
  };
  pr.grad = [](double t, Point x) {
    Vector g(2);
    g << 2 * x[0] * x[1] + 3, x[0] * x[0] + std::cos(x[1]);
    return Vector(std::exp(-t) * g);
  };
  pr.hessian = [](double t, Point x) {
    Matrix h(2, 2);
    h << 2 * x[1], 2 * x[0], 2 * x[0], -std::sin(x[1]);
    return Matrix(std::exp(-t) * h);
  };
  return pr;
}

double fd_generator(const CoefficientField& f, const SmoothProbe& pr, double t, std::vector<double> x) {
  const double e = 1e-4;
  const std::size_t n = x.size();
  const Matrix a = f.a(x);
  const Vector b = f.b(x);
  double out = (pr.u(t + e, x) - pr.u(t - e, x)) / (2 * e);
  for (std::size_t i = 0; i < n; ++i) {
    auto xp = x, xm = x;
    xp[i] += e;
    xm[i] -= e;
    out += b(static_cast<Eigen::Index>(i)) * (pr.u(t, xp) - pr.u(t, xm)) / (2 * e);
    for (std::size_t j = 0; j < n; ++j) {
      auto pp = x, pm = x, mp = x, mm = x;
      pp[i] += e; pp[j] += e;
      pm[i] += e; pm[j] -= e;
      mp[i] -= e; mp[j] += e;
      mm[i] -= e; mm[j] -= e;
      const double d2 = (pr.u(t, pp) - pr.u(t, pm) - pr.u(t, mp) + pr.u(t, mm)) / (4 * e * e);
      out += 0.5 * a(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * std::sqrt(x[i] * x[j]) * d2;
    }
  }
  return out;
}

}  // namespace

TEST_CASE("generator on polynomial probes") {
  const auto f = scalar_field(1.0, 0.5, 2.0);
  for (double x : {0.0, 0.3, 1.0, 7.0}) {
    const std::vector<double> p{x};
    CHECK(generator_apply(f, power_probe(1.0), 0.0, p) == doctest::Approx(0.5));
  }
  const std::vector<double> one{1.0};
  CHECK(generator_apply(f, power_probe(2.0), 0.0, one) == doctest::Approx(2.0));
  CHECK(generator_apply(f, power_probe(0.0), 0.0, one) == 0.0);
}

TEST_CASE("generator is linear in the probe") {
  const auto f = CoefficientField::almost_diagonal(Vector::Constant(2, 1.0), 0.2, Vector::Constant(2, 0.7), 2.0);
  const auto u = mixed_probe();
  SmoothProbe v;
  v.u = [](double, Point x) { return x[0] * x[1]; };
  v.du_dt = [](double, Point) { return 0.0; };
  v.grad = [](double, Point x) { Vector g(2); g << x[1], x[0]; return g; };
  v.hessian = [](double, Point) { Matrix h(2, 2); h << 0, 1, 1, 0; return h; };
  const double al = 1.7, be = -0.4;
  SmoothProbe w;
  w.u = [&](double t, Point x) { return al * u.u(t, x) + be * v.u(t, x); };
  w.du_dt = [&](double t, Point x) { return al * u.du_dt(t, x) + be * v.du_dt(t, x); };
  w.grad = [&](double t, Point x) { return Vector(al * u.grad(t, x) + be * v.grad(t, x)); };
  w.hessian = [&](double t, Point x) { return Matrix(al * u.hessian(t, x) + be * v.hessian(t, x)); };
  std::mt19937_64 gen(3);
  std::uniform_real_distribution<double> d(0.0, 3.0);
  for (int k = 0; k < 50; ++k) {
    const std::vector<double> x{d(gen), d(gen)};
    const double t = d(gen);
    const double lhs = generator_apply(f, w, t, x);
    const double rhs = al * generator_apply(f, u, t, x) + be * generator_apply(f, v, t, x);
    CHECK(std::abs(lhs - rhs) <= 1e-10 * std::max(1.0, std::abs(rhs)));
  }
}

TEST_CASE("generator agrees with finite differences") {
  const auto f = CoefficientField::almost_diagonal(Vector::Constant(2, 1.2), 0.3, Vector::Constant(2, 0.9), 2.0);
  const auto pr = mixed_probe();
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> d(0.2, 2.0);
  for (int k = 0; k < 30; ++k) {
    const std::vector<double> x{d(gen), d(gen)};
    const double t = d(gen);
    const double an = generator_apply(f, pr, t, x);
    const double fd = fd_generator(f, pr, t, x);
    CHECK(std::abs(an - fd) / std::max(1.0, std::abs(an)) <= 1e-5);
    CHECK(probe_fd_error(pr, t, x) <= 1e-5);
  }
  const std::vector<double> x{1.0, 1.0};
  CHECK(generator_apply(f, pr, 0.0, x, false) - generator_apply(f, pr, 0.0, x) ==
        doctest::Approx(-pr.du_dt(0.0, x)));
}

TEST_CASE("sqrt factor") {
  CHECK(sqrt_factor(Matrix::Identity(3, 3)).isApprox(Matrix::Identity(3, 3)));
  Matrix a(2, 2);
  a << 4, 0, 0, 9;
  Matrix expected(2, 2);
  expected << 2, 0, 0, 3;
  CHECK(sqrt_factor(a).isApprox(expected));

  std::mt19937_64 gen(7);
  std::normal_distribution<double> z;
  for (int k = 0; k < 20; ++k) {
    Matrix m(3, 3);
    for (int i = 0; i < 9; ++i) m(i / 3, i % 3) = z(gen);
    const Matrix spd = m * m.transpose() + 0.1 * Matrix::Identity(3, 3);
    const Matrix l = sqrt_factor(spd);
    CHECK((l * l.transpose() - spd).norm() <= 1e-10 * spd.norm());
    CHECK(l(0, 1) == 0.0);
    CHECK(l(0, 2) == 0.0);
    CHECK(l(1, 2) == 0.0);
  }
  Matrix bad(2, 2);
  bad << 1, 2, 2, 1;
  CHECK_THROWS_AS(sqrt_factor(bad), FactorizationError);
  Matrix asym(2, 2);
  asym << 2, 1, 0, 2;
  CHECK_THROWS_AS(sqrt_factor(asym), FactorizationError);
}

TEST_CASE("fields reproduce their coefficients") {
  const auto cir = CoefficientField::cir({{1.0, 2.0}, {0.5, 1.0}, {1.0, 0.5}}, 3.0);
  const std::vector<double> x{2.0, 0.25};
  const Vector b = cir.b(x);
  CHECK(b(0) == doctest::Approx(-1.5));
  CHECK(b(1) == doctest::Approx(1.5));
  CHECK(cir.a(x)(1, 1) == doctest::Approx(0.5));
  CHECK(cir.sigma(x)(1, 1) == doctest::Approx(std::sqrt(0.5)));

  const auto ad = CoefficientField::almost_diagonal(Vector::Constant(2, 1.0), 0.4, Vector::Zero(2), 2.0);
  CHECK(ad.a(x)(0, 1) == doctest::Approx(0.4 / 3.25));
  const Matrix s = ad.sigma(x);
  CHECK((s * s.transpose()).isApprox(ad.a(x)));

  std::vector<double> out(2);
  const std::vector<double> z{0.3, -1.1};
  ad.diffuse_into(x, z, out);
  const Vector ref = s * Eigen::Map<const Vector>(z.data(), 2);
  CHECK(out[0] == doctest::Approx(ref(0)));
  CHECK(out[1] == doctest::Approx(ref(1)));
  cir.drift_into(x, out);
  CHECK(out[0] == doctest::Approx(-1.5));

  CHECK_THROWS_AS(CoefficientField::constant(Matrix::Identity(2, 2), Vector::Zero(3), 1.0), InvalidArgument);
  CHECK_THROWS_AS(scalar_field(1.0, 0.0, 0.5), InvalidArgument);
}

TEST_CASE("condition C' checks") {
  using geometry::AnisoCube;
  using geometry::SqrtPoint;
  const auto good = CoefficientField::constant(Matrix::Identity(2, 2), Vector::Ones(2), 2.0);
  for (double s : {0.0, 1.0, 3.0}) {
    CHECK(check_condition_cprime(good, AnisoCube(SqrtPoint({s, 0.0}), 1.0)).passed);
  }
  const auto zero_b = CoefficientField::constant(Matrix::Identity(2, 2), Vector::Zero(2), 2.0);
  const auto r0 = check_condition_cprime(zero_b, AnisoCube(SqrtPoint({0.0, 0.0}), 1.0));
  CHECK_FALSE(r0.passed);
  REQUIRE(r0.clause("b_boundary"));
  CHECK_FALSE(r0.clause("b_boundary")->passed);
  for (const auto& p : r0.boundary_profile) CHECK(p.margin == doctest::Approx(-0.5));
  CHECK(r0.clause("a_lower")->passed);

  const auto cir = CoefficientField::cir({{1.0}, {0.5}, {1.0}}, 2.0);
  const auto rc = check_condition_cprime(cir, AnisoCube(SqrtPoint({0.0}), 1.0));
  CHECK_FALSE(rc.clause("b_boundary")->passed);
  REQUIRE(rc.boundary_profile.size() >= 2);
  // margin kappa (m - x) - 1/lambda: zero at x = 0, then decreasing
  CHECK(rc.boundary_profile.front().margin == doctest::Approx(0.0).scale(1.0));
  for (std::size_t k = 1; k < rc.boundary_profile.size(); ++k) {
    const auto& p = rc.boundary_profile[k];
    CHECK(p.margin == doctest::Approx(0.5 - p.x[0] - 0.5).scale(1.0));
    CHECK(p.margin < rc.boundary_profile[k - 1].margin);
  }
  CHECK(rc.clause("b_boundary")->worst_margin < -0.8);

  // an axis far from 0 carries no boundary band
  const auto far = check_condition_cprime(zero_b, AnisoCube(SqrtPoint({3.0, 3.0}), 1.0));
  CHECK(far.boundary_profile.empty());
  CHECK(far.passed);
}

TEST_CASE("invariant measure conditions") {
  const std::vector<double> lo{0.0}, hi{10.0};
  const auto grid = box_grid(lo, hi, 11);
  REQUIRE(grid.size() == 11);
  CHECK(grid.back()[0] == 10.0);
  CHECK(check_inv_conditions(CoefficientField::cir({{1.0}, {1.0}, {1.0}}, 1.0), grid).passed);
  CHECK(check_inv_conditions(CoefficientField::cir({{1.5}, {1.0}, {1.0}}, 2.0), grid).passed);

  const double lam = 2.0;
  const auto pull = CoefficientField::custom(
      1, [](Point) { return Matrix::Identity(1, 1); },
      [lam](Point x) { return Vector::Constant(1, -2.0 * lam * x[0]); }, lam);
  const auto rp = check_inv_conditions(pull, grid);
  CHECK_FALSE(rp.passed);
  CHECK_FALSE(rp.clause("b_lower")->passed);
  CHECK(rp.clause("b_lower")->worst_margin == doctest::Approx(-20.0));

  const auto wide = scalar_field(lam + 1.0, 0.0, lam);
  const auto rw = check_inv_conditions(wide, grid);
  CHECK_FALSE(rw.clause("a_upper")->passed);
  CHECK(rw.clause("a_upper")->worst_margin == doctest::Approx(-1.0));
}
