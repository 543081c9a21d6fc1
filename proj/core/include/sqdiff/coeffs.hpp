#pragma once

// Coefficient fields (a, b, sigma) of the degenerate square-root diffusion
//
//   dX^i = b^i(X) dt + sqrt(X^i) sum_k sigma^{ik}(X) dW^k,   sigma sigma^T = a,
//
// the generator applied to smooth probes, and grid-sampled condition checks.
// User callables must be reentrant: fields are shared by all workers.

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqdiff/geometry.hpp"

namespace sqdiff::coeffs {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Point = std::span<const double>;

enum class FieldKind { Constant, Cir, AlmostDiagonal, Custom };

const char* to_string(FieldKind k);

/// Decoupled CIR: b^i = kappa_i (m_i - x^i), a = diag(sigma2).
struct CirParams {
  std::vector<double> kappa;
  std::vector<double> m;
  std::vector<double> sigma2;
};

/// Lower-triangular factor of a symmetric positive-definite matrix.
Matrix sqrt_factor(const Matrix& a);

class CoefficientField {
 public:
  using MatrixFn = std::function<Matrix(Point)>;
  using VectorFn = std::function<Vector(Point)>;

  static CoefficientField constant(Matrix a, Vector b, double lambda);
  static CoefficientField cir(CirParams params, double lambda);
  /// a(x) = diag(d) + epsilon / (1 + sum x) * (ones - I), constant drift b.
  static CoefficientField almost_diagonal(Vector diag, double epsilon, Vector b, double lambda);
  /// `sigma` may be empty; it is then the lower-triangular factor of a(x).
  static CoefficientField custom(std::size_t n, MatrixFn a, VectorFn b, double lambda,
                                 MatrixFn sigma = {});

  std::size_t dim() const { return n_; }
  double lambda() const { return lambda_; }
  FieldKind kind() const { return kind_; }
  bool is_constant() const { return kind_ == FieldKind::Constant; }
  const std::optional<CirParams>& cir_params() const { return cir_; }
  double almost_diagonal_epsilon() const { return epsilon_; }

  Matrix a(Point x) const;
  Vector b(Point x) const;
  Matrix sigma(Point x) const;

  /// Allocation-free drift for the stepping loop.
  void drift_into(Point x, std::span<double> out) const;
  /// out = sigma(x) z.
  void diffuse_into(Point x, std::span<const double> z, std::span<double> out) const;

 private:
  CoefficientField() = default;

  std::size_t n_ = 0;
  double lambda_ = 1.0;
  FieldKind kind_ = FieldKind::Custom;
  MatrixFn a_fn_;
  VectorFn b_fn_;
  MatrixFn sigma_fn_;
  std::optional<Matrix> const_sigma_;
  std::optional<Matrix> const_a_;
  std::optional<Vector> const_b_;
  std::optional<CirParams> cir_;
  double epsilon_ = 0.0;
};

/// A C^{1,2} test function with its analytic derivatives.
struct SmoothProbe {
  std::function<double(double, Point)> u;
  std::function<double(double, Point)> du_dt;
  std::function<Vector(double, Point)> grad;
  std::function<Matrix(double, Point)> hessian;
};

/// du/dt + 1/2 sum a^{ij} sqrt(x^i x^j) u_ij + sum b^i u_i. With
/// include_time = false the du/dt term is dropped.
double generator_apply(const CoefficientField& field, const SmoothProbe& probe, double t, Point x,
                       bool include_time = true);

/// Largest relative discrepancy between the probe's derivatives and central
/// finite differences at (t, x).
double probe_fd_error(const SmoothProbe& probe, double t, Point x, double step = 1e-4);

struct ClauseResult {
  std::string name;
  bool passed = true;
  double worst_margin = 0.0;  // >= 0 on success
  std::vector<double> worst_point;
  std::size_t points_checked = 0;
};

struct ProfilePoint {
  std::vector<double> x;
  std::size_t axis = 0;
  double margin = 0.0;
};

struct ConditionReport {
  bool passed = true;
  std::vector<ClauseResult> clauses;
  std::vector<ProfilePoint> boundary_profile;

  const ClauseResult* clause(const std::string& name) const;
};

/// Non-degeneracy and inward-drift checks on a grid over K:
/// "a_lower"  a >= lambda^-1 I, "a_upper" a <= lambda I, "b_norm" |b| <= lambda,
/// "b_boundary" b^i >= lambda^-1 where sqrt(x^i) lies in
/// [0, rho] intersected with [(s0 - rho)^+, s0 + rho].
ConditionReport check_condition_cprime(const CoefficientField& field,
                                       const geometry::AnisoCube& k, int grid_density = 32);

/// Global conditions used for the invariant measure on the given points:
/// "a_lower", "a_upper", "b_upper" b^i <= lambda, "b_lower" b^i >= -lambda x^i.
ConditionReport check_inv_conditions(const CoefficientField& field,
                                     const std::vector<std::vector<double>>& points);

/// Tensor grid with `density` points per axis over prod [lo_i, hi_i] in x.
std::vector<std::vector<double>> box_grid(std::span<const double> lo, std::span<const double> hi,
                                          int density);

}  // namespace sqdiff::coeffs
