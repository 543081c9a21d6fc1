#pragma once

// Sets Gamma represented as masks over a (t, sqrt(x)) grid laid on a base
// hypercube, plus exact measure arithmetic on axis-aligned boxes.
//
// Measures are always taken in (t, x)-space: a box [t0,t1) x prod [a_i,b_i)
// in square-root coordinates has measure (t1 - t0) * prod (b_i^2 - a_i^2).

#include <cstdint>
#include <span>
#include <vector>

#include "sqdiff/geometry.hpp"

namespace sqdiff::czd {

using geometry::HyperCube;
using geometry::SqrtPoint;

struct Box {
  double t_lo = 0.0;
  double t_hi = 0.0;
  std::vector<double> s_lo;
  std::vector<double> s_hi;

  std::size_t dim() const { return s_lo.size(); }
  bool empty() const;
};

Box to_box(const HyperCube& q);
double box_measure(const Box& b);
/// Componentwise intersection; may be empty().
Box intersect(const Box& a, const Box& b);
/// Exact measure of a union of boxes by coordinate compression.
double union_measure(std::span<const Box> boxes);

class GridSet {
 public:
  /// Empty set over `base` with `time_res` slabs and `space_res` cells per
  /// spatial axis. An axis whose center is 0 carries the restriction to
  /// s >= 0 of the uniform space_res-cell grid on [-rho, rho); every other
  /// axis is uniform over its own sqrt-span.
  GridSet(HyperCube base, int time_res, int space_res);

  static GridSet full(HyperCube base, int time_res, int space_res);

  const HyperCube& base() const { return base_; }
  int time_resolution() const { return time_res_; }
  int space_resolution() const { return space_res_; }
  std::size_t dim() const { return base_.dim(); }

  std::size_t cell_count() const { return mask_.size(); }
  /// Number of cells along axis 0 (time) and 1..n (space).
  std::size_t axis_cells(std::size_t axis) const { return edges_[axis].size() - 1; }
  std::span<const double> edges(std::size_t axis) const { return edges_[axis]; }

  bool marked(std::size_t cell) const { return mask_[cell] != 0; }
  void set(std::size_t cell, bool on) { mask_[cell] = on ? 1 : 0; }
  std::size_t marked_count() const;

  /// Flat index from per-axis indices (time first).
  std::size_t flat_index(std::span<const std::size_t> idx) const;
  std::vector<std::size_t> multi_index(std::size_t cell) const;

  Box cell_box(std::size_t cell) const;
  double cell_measure(std::size_t cell) const;

  double measure() const;
  /// |Gamma intersected with b|, exact for any box.
  double measure_in(const Box& b) const;

  bool contains(double t, const SqrtPoint& p) const;
  bool contains_x(double t, std::span<const double> x) const;

  std::span<const std::uint8_t> mask() const { return mask_; }

  /// Mark every cell whose box lies inside `region`.
  void mark_inside(const Box& region);

 private:
  long locate(std::size_t axis, double v) const;

  HyperCube base_;
  int time_res_;
  int space_res_;
  std::vector<std::vector<double>> edges_;  // axis 0 = time, in t; others in s
  std::vector<std::size_t> strides_;
  std::vector<std::uint8_t> mask_;
};

}  // namespace sqdiff::czd
