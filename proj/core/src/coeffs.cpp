#include "sqdiff/coeffs.hpp"

#include <algorithm>
#include <cmath>

#include "sqdiff/errors.hpp"

namespace sqdiff::coeffs {
namespace {

void check_lambda(double lambda) {
  if (!(lambda >= 1.0) || !std::isfinite(lambda)) {
    throw InvalidArgument("coefficient field: lambda must be >= 1");
  }
}

void check_dim(Point x, std::size_t n) {
  if (x.size() != n) throw InvalidArgument("coefficient field: point dimension mismatch");
}

double rel_diff(double a, double b) {
  return std::abs(a - b) / std::max({1.0, std::abs(a), std::abs(b)});
}

void update(ClauseResult& c, double margin, Point x) {
  ++c.points_checked;
  if (c.points_checked == 1 || margin < c.worst_margin) {
    c.worst_margin = margin;
    c.worst_point.assign(x.begin(), x.end());
  }
  if (margin < 0.0) c.passed = false;
}

ClauseResult clause_named(const char* name) {
  ClauseResult c;
  c.name = name;
  return c;
}

std::pair<double, double> eigen_range(const Matrix& a) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(a, Eigen::EigenvaluesOnly);
  return {es.eigenvalues().minCoeff(), es.eigenvalues().maxCoeff()};
}

ConditionReport finish(std::vector<ClauseResult> clauses) {
  ConditionReport r;
  r.clauses = std::move(clauses);
  for (const auto& c : r.clauses) r.passed = r.passed && c.passed;
  return r;
}

}  // namespace

const char* to_string(FieldKind k) {
  switch (k) {
    case FieldKind::Constant:
      return "constant";
    case FieldKind::Cir:
      return "cir";
    case FieldKind::AlmostDiagonal:
      return "almost_diagonal";
    case FieldKind::Custom:
      return "custom";
  }
  return "custom";
}

Matrix sqrt_factor(const Matrix& a) {
  if (a.rows() != a.cols() || a.rows() == 0) throw FactorizationError("sqrt_factor: matrix must be square");
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) {
    throw FactorizationError("sqrt_factor: matrix is not symmetric");
  }
  Eigen::LLT<Matrix> llt(a);
  if (llt.info() != Eigen::Success) throw FactorizationError("sqrt_factor: matrix is not positive definite");
  return llt.matrixL();
}

CoefficientField CoefficientField::constant(Matrix a, Vector b, double lambda) {
  check_lambda(lambda);
  if (a.rows() != b.size() || a.cols() != b.size()) {
    throw InvalidArgument("constant field: a must be n x n and b of length n");
  }
  CoefficientField f;
  f.n_ = static_cast<std::size_t>(b.size());
  f.lambda_ = lambda;
  f.kind_ = FieldKind::Constant;
  f.const_sigma_ = sqrt_factor(a);
  f.const_a_ = std::move(a);
  f.const_b_ = std::move(b);
  return f;
}

CoefficientField CoefficientField::cir(CirParams p, double lambda) {
  check_lambda(lambda);
  const std::size_t n = p.kappa.size();
  if (n == 0 || p.m.size() != n || p.sigma2.size() != n) {
    throw InvalidArgument("cir field: kappa, m and sigma2 must have equal nonzero length");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!(p.kappa[i] > 0.0) || !(p.m[i] >= 0.0) || !(p.sigma2[i] > 0.0)) {
      throw InvalidArgument("cir field: need kappa > 0, m >= 0, sigma2 > 0");
    }
  }
  CoefficientField f;
  f.n_ = n;
  f.lambda_ = lambda;
  f.kind_ = FieldKind::Cir;
  Matrix a = Matrix::Zero(n, n);
  Matrix s = Matrix::Zero(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = p.sigma2[i];
    s(i, i) = std::sqrt(p.sigma2[i]);
  }
  f.const_a_ = std::move(a);
  f.const_sigma_ = std::move(s);
  f.cir_ = std::move(p);
  return f;
}

CoefficientField CoefficientField::almost_diagonal(Vector diag, double epsilon, Vector b,
                                                   double lambda) {
  check_lambda(lambda);
  if (diag.size() != b.size() || diag.size() == 0) {
    throw InvalidArgument("almost_diagonal field: diag and b must have equal nonzero length");
  }
  if ((diag.array() <= 0.0).any()) throw InvalidArgument("almost_diagonal field: diag must be positive");
  const auto n = static_cast<std::size_t>(diag.size());
  CoefficientField f;
  f.n_ = n;
  f.lambda_ = lambda;
  f.kind_ = FieldKind::AlmostDiagonal;
  f.epsilon_ = epsilon;
  f.a_fn_ = [diag, epsilon, n](Point x) {
    double total = 0.0;
    for (double v : x) total += v;
    const double c = epsilon / (1.0 + total);
    Matrix a = Matrix::Constant(n, n, c);
    for (std::size_t i = 0; i < n; ++i) a(i, i) = diag(i);
    return a;
  };
  f.const_b_ = std::move(b);
  return f;
}

CoefficientField CoefficientField::custom(std::size_t n, MatrixFn a, VectorFn b, double lambda,
                                          MatrixFn sigma) {
  check_lambda(lambda);
  if (n == 0 || !a || !b) throw InvalidArgument("custom field: need n > 0 and callables a, b");
  CoefficientField f;
  f.n_ = n;
  f.lambda_ = lambda;
  f.kind_ = FieldKind::Custom;
  f.a_fn_ = std::move(a);
  f.b_fn_ = std::move(b);
  f.sigma_fn_ = std::move(sigma);
  return f;
}

Matrix CoefficientField::a(Point x) const {
  check_dim(x, n_);
  if (const_a_) return *const_a_;
  return a_fn_(x);
}

Vector CoefficientField::b(Point x) const {
  check_dim(x, n_);
  Vector out(static_cast<Eigen::Index>(n_));
  drift_into(x, std::span<double>(out.data(), n_));
  return out;
}

Matrix CoefficientField::sigma(Point x) const {
  check_dim(x, n_);
  if (const_sigma_) return *const_sigma_;
  if (sigma_fn_) return sigma_fn_(x);
  return sqrt_factor(a_fn_(x));
}

void CoefficientField::drift_into(Point x, std::span<double> out) const {
  if (const_b_) {
    for (std::size_t i = 0; i < n_; ++i) out[i] = (*const_b_)(static_cast<Eigen::Index>(i));
  } else if (cir_) {
    for (std::size_t i = 0; i < n_; ++i) out[i] = cir_->kappa[i] * (cir_->m[i] - x[i]);
  } else {
    const Vector v = b_fn_(x);
    for (std::size_t i = 0; i < n_; ++i) out[i] = v(static_cast<Eigen::Index>(i));
  }
}

void CoefficientField::diffuse_into(Point x, std::span<const double> z, std::span<double> out) const {
  if (cir_) {
    for (std::size_t i = 0; i < n_; ++i) out[i] = (*const_sigma_)(i, i) * z[i];
    return;
  }
  const Matrix s = const_sigma_ ? *const_sigma_ : sigma(x);
  for (std::size_t i = 0; i < n_; ++i) {
    double acc = 0.0;
    for (std::size_t k = 0; k < n_; ++k) acc += s(i, k) * z[k];
    out[i] = acc;
  }
}

double generator_apply(const CoefficientField& field, const SmoothProbe& probe, double t, Point x,
                       bool include_time) {
  const std::size_t n = field.dim();
  check_dim(x, n);
  const Matrix a = field.a(x);
  const Vector b = field.b(x);
  const Vector g = probe.grad(t, x);
  const Matrix h = probe.hessian(t, x);
  double second = 0.0;
  double first = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    first += b(i) * g(i);
    for (std::size_t j = 0; j < n; ++j) {
      second += a(i, j) * std::sqrt(x[i] * x[j]) * h(i, j);
    }
  }
  double out = 0.5 * second + first;
  if (include_time && probe.du_dt) out += probe.du_dt(t, x);
  return out;
}

double probe_fd_error(const SmoothProbe& probe, double t, Point x, double step) {
  const std::size_t n = x.size();
  std::vector<double> xp(x.begin(), x.end());
  std::vector<double> xm(x.begin(), x.end());
  double worst = 0.0;
  if (probe.du_dt) {
    const double fd = (probe.u(t + step, x) - probe.u(t - step, x)) / (2.0 * step);
    worst = std::max(worst, rel_diff(fd, probe.du_dt(t, x)));
  }
  const Vector g = probe.grad(t, x);
  const Matrix h = probe.hessian(t, x);
  for (std::size_t j = 0; j < n; ++j) {
    xp[j] = x[j] + step;
    xm[j] = x[j] - step;
    const double fd = (probe.u(t, xp) - probe.u(t, xm)) / (2.0 * step);
    worst = std::max(worst, rel_diff(fd, g(j)));
    const Vector gp = probe.grad(t, xp);
    const Vector gm = probe.grad(t, xm);
    for (std::size_t i = 0; i < n; ++i) {
      worst = std::max(worst, rel_diff((gp(i) - gm(i)) / (2.0 * step), h(i, j)));
    }
    xp[j] = x[j];
    xm[j] = x[j];
  }
  return worst;
}

const ClauseResult* ConditionReport::clause(const std::string& name) const {
  for (const auto& c : clauses) {
    if (c.name == name) return &c;
  }
  return nullptr;
}

ConditionReport check_condition_cprime(const CoefficientField& field, const geometry::AnisoCube& k,
                                       int grid_density) {
  if (grid_density < 2) throw InvalidArgument("check_condition_cprime: grid density must be >= 2");
  if (k.dim() != field.dim()) throw InvalidArgument("check_condition_cprime: dimension mismatch");
  const std::size_t n = field.dim();
  const double lam = field.lambda();
  const double rho = k.rho();

  std::vector<std::vector<double>> axis_s(n);
  std::vector<std::pair<double, double>> band(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto sp = k.span(i);
    for (int j = 0; j < grid_density; ++j) {
      axis_s[i].push_back(sp.lo + (sp.hi - sp.lo) * j / grid_density);
    }
    const double s0 = k.center()[i];
    band[i] = {std::max(0.0, s0 - rho), std::min(rho, s0 + rho)};
  }

  ClauseResult lower = clause_named("a_lower");
  ClauseResult upper = clause_named("a_upper");
  ClauseResult norm = clause_named("b_norm");
  ClauseResult boundary = clause_named("b_boundary");
  std::vector<ProfilePoint> profile;
  std::vector<std::size_t> idx(n, 0);
  std::vector<double> x(n);
  while (true) {
    for (std::size_t i = 0; i < n; ++i) x[i] = axis_s[i][idx[i]] * axis_s[i][idx[i]];
    const auto [emin, emax] = eigen_range(field.a(x));
    update(lower, emin - 1.0 / lam, x);
    update(upper, lam - emax, x);
    const Vector b = field.b(x);
    update(norm, lam - b.norm(), x);
    for (std::size_t i = 0; i < n; ++i) {
      const double s = axis_s[i][idx[i]];
      if (s >= band[i].first && s <= band[i].second) {
        const double margin = b(static_cast<Eigen::Index>(i)) - 1.0 / lam;
        update(boundary, margin, x);
        profile.push_back({x, i, margin});
      }
    }
    std::size_t d = n;
    bool done = true;
    while (d-- > 0) {
      if (++idx[d] < axis_s[d].size()) {
        done = false;
        break;
      }
      idx[d] = 0;
    }
    if (done) break;
  }
  auto r = finish({lower, upper, norm, boundary});
  r.boundary_profile = std::move(profile);
  return r;
}

ConditionReport check_inv_conditions(const CoefficientField& field,
                                     const std::vector<std::vector<double>>& points) {
  const double lam = field.lambda();
  ClauseResult lower = clause_named("a_lower");
  ClauseResult upper = clause_named("a_upper");
  ClauseResult b_up = clause_named("b_upper");
  ClauseResult b_low = clause_named("b_lower");
  for (const auto& x : points) {
    check_dim(x, field.dim());
    const auto [emin, emax] = eigen_range(field.a(x));
    update(lower, emin - 1.0 / lam, x);
    update(upper, lam - emax, x);
    const Vector b = field.b(x);
    double up = INFINITY;
    double low = INFINITY;
    for (std::size_t i = 0; i < x.size(); ++i) {
      up = std::min(up, lam - b(static_cast<Eigen::Index>(i)));
      low = std::min(low, b(static_cast<Eigen::Index>(i)) + lam * x[i]);
    }
    update(b_up, up, x);
    update(b_low, low, x);
  }
  return finish({lower, upper, b_up, b_low});
}

std::vector<std::vector<double>> box_grid(std::span<const double> lo, std::span<const double> hi,
                                          int density) {
  if (lo.size() != hi.size() || density < 2) throw InvalidArgument("box_grid: bad arguments");
  const std::size_t n = lo.size();
  std::vector<std::vector<double>> out;
  std::vector<int> idx(n, 0);
  while (true) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = lo[i] + (hi[i] - lo[i]) * idx[i] / (density - 1);
    out.push_back(std::move(x));
    std::size_t d = n;
    bool done = true;
    while (d-- > 0) {
      if (++idx[d] < density) {
        done = false;
        break;
      }
      idx[d] = 0;
    }
    if (done) break;
  }
  return out;
}

}  // namespace sqdiff::coeffs
