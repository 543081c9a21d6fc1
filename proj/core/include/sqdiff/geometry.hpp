#pragma once

// Anisotropic cubes and parabolic hypercubes on the nonnegative orthant.
//
// Points are stored in square-root coordinates s = sqrt(x). In these
// coordinates the cube K(x, rho) is an ordinary box of half-width rho,
// truncated at s = 0, and the Hoelder metric max_i |sqrt(x^i) - sqrt(y^i)|
// is the sup-norm. All intervals are closed-open.

#include <cstddef>
#include <span>
#include <vector>

namespace sqdiff::geometry {

/// Relative tolerance for geometric equality assertions (never membership).
inline constexpr double kGeomTol = 1e-12;

class SqrtPoint {
 public:
  SqrtPoint() = default;
  explicit SqrtPoint(std::vector<double> s);

  static SqrtPoint from_x(std::span<const double> x);

  std::size_t dim() const { return s_.size(); }
  double operator[](std::size_t i) const { return s_[i]; }
  std::span<const double> coords() const { return s_; }
  std::vector<double> to_x() const;

  friend bool operator==(const SqrtPoint&, const SqrtPoint&) = default;

 private:
  std::vector<double> s_;
};

/// [lo, hi) in x-space.
struct Interval {
  double lo = 0.0;
  double hi = 0.0;

  double length() const { return hi - lo; }
  bool contains(double x) const { return lo <= x && x < hi; }
};

/// L(s^2, rho): [((s - rho)^+)^2, (s + rho)^2).
Interval interval(double s, double rho);

/// Lower and upper bound of L(s^2, rho) in square-root coordinates.
struct SqrtSpan {
  double lo = 0.0;
  double hi = 0.0;
};
SqrtSpan sqrt_span(double s, double rho);

class AnisoCube {
 public:
  AnisoCube(SqrtPoint center, double rho);

  std::size_t dim() const { return center_.dim(); }
  const SqrtPoint& center() const { return center_; }
  double rho() const { return rho_; }

  Interval interval(std::size_t axis) const;
  SqrtSpan span(std::size_t axis) const;

 private:
  SqrtPoint center_;
  double rho_;
};

class HyperCube {
 public:
  HyperCube(double t0, double theta, AnisoCube cube);

  double t0() const { return t0_; }
  double theta() const { return theta_; }
  double t1() const { return t0_ + duration(); }
  /// theta * rho^2
  double duration() const { return theta_ * cube_.rho() * cube_.rho(); }
  double rho() const { return cube_.rho(); }
  std::size_t dim() const { return cube_.dim(); }
  const AnisoCube& cube() const { return cube_; }

  bool contains_time(double t) const { return t0_ <= t && t < t1(); }

 private:
  double t0_;
  double theta_;
  AnisoCube cube_;
};

bool cube_contains(const AnisoCube& k, const SqrtPoint& p);
bool cube_contains_x(const AnisoCube& k, std::span<const double> x);
bool hypercube_contains(const HyperCube& q, double t, const SqrtPoint& p);

double cube_measure(const AnisoCube& k);
double hypercube_measure(const HyperCube& q);

/// Width of L along `axis` after removing the strip sqrt(x) < delta.
double truncated_width(const AnisoCube& k, std::size_t axis, double delta);

double sqrt_distance(const SqrtPoint& x, const SqrtPoint& y);

/// Image of q under (t0 + t, x) -> (t_offset + r t, r x).
HyperCube rescale(const HyperCube& q, double r, double t_offset);

bool is_regular(const AnisoCube& k);
bool is_regular(const HyperCube& q);

/// Set inclusion of the underlying closed-open boxes, up to kGeomTol.
bool cube_includes(const AnisoCube& outer, const AnisoCube& inner);
bool hypercube_includes(const HyperCube& outer, const HyperCube& inner);

/// Regular hypercube of size 2/3 inside a size-1 hypercube q whose spatial
/// section contains K(x0, 1/6) of q's center x0.
HyperCube shift_shrink(const HyperCube& q);

bool approx_equal(const HyperCube& a, const HyperCube& b, double rel_tol = kGeomTol);

}  // namespace sqdiff::geometry
