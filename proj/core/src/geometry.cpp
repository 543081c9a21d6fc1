#include "sqdiff/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "sqdiff/errors.hpp"

namespace sqdiff::geometry {
namespace {

void require_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) {
    throw InvalidArgument(std::string(what) + ": dimension mismatch (" + std::to_string(a) +
                          " vs " + std::to_string(b) + ")");
  }
}

bool close(double a, double b, double tol) {
  return std::abs(a - b) <= tol * std::max({1.0, std::abs(a), std::abs(b)});
}

bool leq(double a, double b) { return a <= b || close(a, b, kGeomTol); }

}  // namespace

SqrtPoint::SqrtPoint(std::vector<double> s) : s_(std::move(s)) {
  for (double v : s_) {
    if (!std::isfinite(v) || v < 0.0) {
      throw InvalidArgument("SqrtPoint: coordinates must be finite and nonnegative");
    }
  }
}

SqrtPoint SqrtPoint::from_x(std::span<const double> x) {
  std::vector<double> s(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (!std::isfinite(x[i]) || x[i] < 0.0) {
      throw InvalidArgument("SqrtPoint::from_x: point outside the orthant");
    }
    s[i] = std::sqrt(x[i]);
  }
  return SqrtPoint(std::move(s));
}

std::vector<double> SqrtPoint::to_x() const {
  std::vector<double> x(s_.size());
  std::transform(s_.begin(), s_.end(), x.begin(), [](double v) { return v * v; });
  return x;
}

SqrtSpan sqrt_span(double s, double rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("interval: rho must be > 0");
  if (!(s >= 0.0) || !std::isfinite(s)) throw InvalidArgument("interval: s must be >= 0");
  // s <= rho takes the boundary branch [0, (s + rho)^2).
  return {s <= rho ? 0.0 : s - rho, s + rho};
}

Interval interval(double s, double rho) {
  const SqrtSpan sp = sqrt_span(s, rho);
  return {sp.lo * sp.lo, sp.hi * sp.hi};
}

AnisoCube::AnisoCube(SqrtPoint center, double rho) : center_(std::move(center)), rho_(rho) {
  if (!(rho > 0.0) || !std::isfinite(rho)) throw InvalidArgument("AnisoCube: rho must be > 0");
}

Interval AnisoCube::interval(std::size_t axis) const {
  return geometry::interval(center_[axis], rho_);
}

SqrtSpan AnisoCube::span(std::size_t axis) const { return sqrt_span(center_[axis], rho_); }

HyperCube::HyperCube(double t0, double theta, AnisoCube cube)
    : t0_(t0), theta_(theta), cube_(std::move(cube)) {
  if (!(t0 >= 0.0) || !std::isfinite(t0)) throw InvalidArgument("HyperCube: t0 must be >= 0");
  if (!(theta > 0.0 && theta <= 1.0)) throw InvalidArgument("HyperCube: theta must lie in (0, 1]");
}

bool cube_contains(const AnisoCube& k, const SqrtPoint& p) {
  require_same_dim(k.dim(), p.dim(), "cube_contains");
  for (std::size_t i = 0; i < k.dim(); ++i) {
    const SqrtSpan sp = k.span(i);
    if (p[i] < sp.lo || p[i] >= sp.hi) return false;
  }
  return true;
}

bool cube_contains_x(const AnisoCube& k, std::span<const double> x) {
  require_same_dim(k.dim(), x.size(), "cube_contains_x");
  for (std::size_t i = 0; i < k.dim(); ++i) {
    const SqrtSpan sp = k.span(i);
    const double s = std::sqrt(std::max(x[i], 0.0));
    if (s < sp.lo || s >= sp.hi) return false;
  }
  return true;
}

bool hypercube_contains(const HyperCube& q, double t, const SqrtPoint& p) {
  return q.contains_time(t) && cube_contains(q.cube(), p);
}

double cube_measure(const AnisoCube& k) {
  double m = 1.0;
  for (std::size_t i = 0; i < k.dim(); ++i) m *= k.interval(i).length();
  return m;
}

double hypercube_measure(const HyperCube& q) { return q.duration() * cube_measure(q.cube()); }

double truncated_width(const AnisoCube& k, std::size_t axis, double delta) {
  if (axis >= k.dim()) throw InvalidArgument("truncated_width: axis out of range");
  if (!(delta > 0.0 && delta < k.rho())) {
    throw InvalidArgument("truncated_width: delta must lie in (0, rho)");
  }
  const Interval iv = k.interval(axis);
  return iv.hi - std::max(iv.lo, delta * delta);
}

double sqrt_distance(const SqrtPoint& x, const SqrtPoint& y) {
  require_same_dim(x.dim(), y.dim(), "sqrt_distance");
  double d = 0.0;
  for (std::size_t i = 0; i < x.dim(); ++i) d = std::max(d, std::abs(x[i] - y[i]));
  return d;
}

HyperCube rescale(const HyperCube& q, double r, double t_offset) {
  if (!(r > 0.0) || !std::isfinite(r)) throw InvalidArgument("rescale: r must be > 0");
  const double sr = std::sqrt(r);
  std::vector<double> s(q.dim());
  for (std::size_t i = 0; i < q.dim(); ++i) s[i] = sr * q.cube().center()[i];
  return HyperCube(t_offset, q.theta(), AnisoCube(SqrtPoint(std::move(s)), sr * q.rho()));
}

bool is_regular(const AnisoCube& k) {
  for (std::size_t i = 0; i < k.dim(); ++i) {
    const double s = k.center()[i];
    if (!(s == 0.0 || s >= k.rho())) return false;
  }
  return true;
}

bool is_regular(const HyperCube& q) { return is_regular(q.cube()); }

bool cube_includes(const AnisoCube& outer, const AnisoCube& inner) {
  require_same_dim(outer.dim(), inner.dim(), "cube_includes");
  for (std::size_t i = 0; i < outer.dim(); ++i) {
    const SqrtSpan o = outer.span(i);
    const SqrtSpan in = inner.span(i);
    if (!leq(o.lo, in.lo) || !leq(in.hi, o.hi)) return false;
  }
  return true;
}

bool hypercube_includes(const HyperCube& outer, const HyperCube& inner) {
  return leq(outer.t0(), inner.t0()) && leq(inner.t1(), outer.t1()) &&
         cube_includes(outer.cube(), inner.cube());
}

HyperCube shift_shrink(const HyperCube& q) {
  if (q.rho() != 1.0) throw InvalidArgument("shift_shrink: hypercube must have size 1");
  std::vector<double> shifted(q.dim());
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const double s = q.cube().center()[i];
    if (s < 1.0 / 3.0) {
      shifted[i] = 0.0;
    } else if (s < 1.0) {
      shifted[i] = s + 1.0 / 3.0;
    } else {
      shifted[i] = s;
    }
  }
  HyperCube out(q.t0(), q.theta(), AnisoCube(SqrtPoint(std::move(shifted)), 2.0 / 3.0));

  const AnisoCube inner(q.cube().center(), 1.0 / 6.0);
  const AnisoCube middle(out.cube().center(), 0.5);
  if (!is_regular(out) || !cube_includes(middle, inner) || !hypercube_includes(q, out)) {
    throw PreconditionError("shift_shrink: postcondition violated");
  }
  return out;
}

bool approx_equal(const HyperCube& a, const HyperCube& b, double rel_tol) {
  if (a.dim() != b.dim()) return false;
  if (!close(a.t0(), b.t0(), rel_tol) || !close(a.theta(), b.theta(), rel_tol) ||
      !close(a.rho(), b.rho(), rel_tol)) {
    return false;
  }
  for (std::size_t i = 0; i < a.dim(); ++i) {
    if (!close(a.cube().center()[i], b.cube().center()[i], rel_tol)) return false;
  }
  return true;
}

}  // namespace sqdiff::geometry
