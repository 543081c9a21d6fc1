#include "sqdiff/gridset.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "sqdiff/errors.hpp"

namespace sqdiff::czd {
namespace {

double sq(double v) { return v * v; }

// Odometer over the product of [lo[d], hi[d]) index ranges.
template <typename Fn>
void for_each_index(std::span<const std::size_t> lo, std::span<const std::size_t> hi, Fn&& fn) {
  const std::size_t dims = lo.size();
  for (std::size_t d = 0; d < dims; ++d) {
    if (lo[d] >= hi[d]) return;
  }
  std::vector<std::size_t> idx(lo.begin(), lo.end());
  while (true) {
    fn(std::span<const std::size_t>(idx));
    std::size_t d = dims;
    while (d > 0) {
      --d;
      if (++idx[d] < hi[d]) break;
      idx[d] = lo[d];
      if (d == 0) return;
    }
    if (dims == 0) return;
  }
}

std::vector<double> merged_breaks(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::vector<double> out;
  for (double x : v) {
    const double tol = 1e-12 * std::max(1.0, std::abs(x));
    if (out.empty() || x - out.back() > tol) out.push_back(x);
  }
  return out;
}

std::size_t break_index(const std::vector<double>& breaks, double v) {
  const double tol = 1e-12 * std::max(1.0, std::abs(v));
  auto it = std::lower_bound(breaks.begin(), breaks.end(), v - tol);
  return static_cast<std::size_t>(it - breaks.begin());
}

}  // namespace

bool Box::empty() const {
  if (!(t_hi > t_lo)) return true;
  for (std::size_t i = 0; i < s_lo.size(); ++i) {
    if (!(s_hi[i] > s_lo[i])) return true;
  }
  return false;
}

Box to_box(const HyperCube& q) {
  Box b;
  b.t_lo = q.t0();
  b.t_hi = q.t1();
  for (std::size_t i = 0; i < q.dim(); ++i) {
    const auto sp = q.cube().span(i);
    b.s_lo.push_back(sp.lo);
    b.s_hi.push_back(sp.hi);
  }
  return b;
}

double box_measure(const Box& b) {
  if (b.empty()) return 0.0;
  double m = b.t_hi - b.t_lo;
  for (std::size_t i = 0; i < b.dim(); ++i) m *= sq(b.s_hi[i]) - sq(b.s_lo[i]);
  return m;
}

Box intersect(const Box& a, const Box& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("intersect: dimension mismatch");
  Box r;
  r.t_lo = std::max(a.t_lo, b.t_lo);
  r.t_hi = std::min(a.t_hi, b.t_hi);
  r.s_lo.resize(a.dim());
  r.s_hi.resize(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) {
    r.s_lo[i] = std::max(a.s_lo[i], b.s_lo[i]);
    r.s_hi[i] = std::min(a.s_hi[i], b.s_hi[i]);
  }
  return r;
}

double union_measure(std::span<const Box> boxes) {
  std::vector<const Box*> live;
  for (const Box& b : boxes) {
    if (!b.empty()) live.push_back(&b);
  }
  if (live.empty()) return 0.0;
  const std::size_t n = live.front()->dim();
  const std::size_t dims = n + 1;

  std::vector<std::vector<double>> breaks(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    std::vector<double> v;
    v.reserve(2 * live.size());
    for (const Box* b : live) {
      if (b->dim() != n) throw InvalidArgument("union_measure: dimension mismatch");
      v.push_back(d == 0 ? b->t_lo : b->s_lo[d - 1]);
      v.push_back(d == 0 ? b->t_hi : b->s_hi[d - 1]);
    }
    breaks[d] = merged_breaks(std::move(v));
  }

  std::vector<std::size_t> extent(dims), stride(dims);
  std::size_t total = 1;
  for (std::size_t d = dims; d-- > 0;) {
    extent[d] = breaks[d].size() - 1;
    stride[d] = total;
    total *= std::max<std::size_t>(extent[d], 1);
  }
  if (total > 200'000'000) throw InvalidArgument("union_measure: compressed grid too large");
  std::vector<std::uint8_t> covered(total, 0);

  std::vector<std::size_t> lo(dims), hi(dims);
  for (const Box* b : live) {
    for (std::size_t d = 0; d < dims; ++d) {
      lo[d] = break_index(breaks[d], d == 0 ? b->t_lo : b->s_lo[d - 1]);
      hi[d] = break_index(breaks[d], d == 0 ? b->t_hi : b->s_hi[d - 1]);
    }
    for_each_index(lo, hi, [&](std::span<const std::size_t> idx) {
      std::size_t flat = 0;
      for (std::size_t d = 0; d < dims; ++d) flat += idx[d] * stride[d];
      covered[flat] = 1;
    });
  }

  std::vector<std::vector<double>> width(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    for (std::size_t j = 0; j < extent[d]; ++j) {
      const double a = breaks[d][j];
      const double c = breaks[d][j + 1];
      width[d].push_back(d == 0 ? c - a : sq(c) - sq(a));
    }
  }
  std::vector<std::size_t> zero(dims, 0);
  double total_measure = 0.0;
  for_each_index(zero, extent, [&](std::span<const std::size_t> idx) {
    std::size_t flat = 0;
    double m = 1.0;
    for (std::size_t d = 0; d < dims; ++d) {
      flat += idx[d] * stride[d];
      m *= width[d][idx[d]];
    }
    if (covered[flat]) total_measure += m;
  });
  return total_measure;
}

GridSet::GridSet(HyperCube base, int time_res, int space_res)
    : base_(std::move(base)), time_res_(time_res), space_res_(space_res) {
  if (time_res < 1 || space_res < 1) throw InvalidArgument("GridSet: resolution must be positive");
  const std::size_t n = base_.dim();
  edges_.resize(n + 1);
  for (int k = 0; k <= time_res; ++k) {
    edges_[0].push_back(base_.t0() + base_.duration() * k / time_res);
  }
  edges_[0].back() = base_.t1();
  const double rho = base_.rho();
  for (std::size_t i = 0; i < n; ++i) {
    auto& e = edges_[i + 1];
    const double c = base_.cube().center()[i];
    if (c == 0.0) {
      e.push_back(0.0);
      for (int k = 0; k <= space_res; ++k) {
        const double v = -rho + 2.0 * rho * k / space_res;
        if (v > 1e-15 * rho) e.push_back(v);
      }
      e.back() = rho;
    } else {
      const auto sp = base_.cube().span(i);
      for (int k = 0; k <= space_res; ++k) {
        e.push_back(sp.lo + (sp.hi - sp.lo) * k / space_res);
      }
      e.back() = sp.hi;
    }
  }
  strides_.assign(n + 1, 1);
  std::size_t total = 1;
  for (std::size_t d = n + 1; d-- > 0;) {
    strides_[d] = total;
    total *= edges_[d].size() - 1;
  }
  mask_.assign(total, 0);
}

GridSet GridSet::full(HyperCube base, int time_res, int space_res) {
  GridSet g(std::move(base), time_res, space_res);
  std::fill(g.mask_.begin(), g.mask_.end(), std::uint8_t{1});
  return g;
}

std::size_t GridSet::marked_count() const {
  return static_cast<std::size_t>(std::count(mask_.begin(), mask_.end(), std::uint8_t{1}));
}

std::size_t GridSet::flat_index(std::span<const std::size_t> idx) const {
  if (idx.size() != edges_.size()) throw InvalidArgument("GridSet::flat_index: wrong arity");
  std::size_t flat = 0;
  for (std::size_t d = 0; d < idx.size(); ++d) {
    if (idx[d] >= axis_cells(d)) throw InvalidArgument("GridSet::flat_index: index out of range");
    flat += idx[d] * strides_[d];
  }
  return flat;
}

std::vector<std::size_t> GridSet::multi_index(std::size_t cell) const {
  std::vector<std::size_t> idx(edges_.size());
  for (std::size_t d = 0; d < edges_.size(); ++d) {
    idx[d] = cell / strides_[d];
    cell %= strides_[d];
  }
  return idx;
}

Box GridSet::cell_box(std::size_t cell) const {
  const auto idx = multi_index(cell);
  Box b;
  b.t_lo = edges_[0][idx[0]];
  b.t_hi = edges_[0][idx[0] + 1];
  for (std::size_t i = 1; i < edges_.size(); ++i) {
    b.s_lo.push_back(edges_[i][idx[i]]);
    b.s_hi.push_back(edges_[i][idx[i] + 1]);
  }
  return b;
}

double GridSet::cell_measure(std::size_t cell) const { return box_measure(cell_box(cell)); }

double GridSet::measure() const { return measure_in(to_box(base_)); }

double GridSet::measure_in(const Box& b) const {
  const std::size_t dims = edges_.size();
  if (b.dim() + 1 != dims) throw InvalidArgument("GridSet::measure_in: dimension mismatch");
  std::vector<std::size_t> lo(dims), hi(dims);
  std::vector<std::vector<double>> w(dims);
  for (std::size_t d = 0; d < dims; ++d) {
    const double a = d == 0 ? b.t_lo : b.s_lo[d - 1];
    const double c = d == 0 ? b.t_hi : b.s_hi[d - 1];
    const auto& e = edges_[d];
    if (!(c > a)) return 0.0;
    auto first = std::upper_bound(e.begin(), e.end(), a);
    lo[d] = first == e.begin() ? 0 : static_cast<std::size_t>(first - e.begin()) - 1;
    auto last = std::lower_bound(e.begin(), e.end(), c);
    hi[d] = std::min<std::size_t>(static_cast<std::size_t>(last - e.begin()), e.size() - 1);
    for (std::size_t j = lo[d]; j < hi[d]; ++j) {
      const double l = std::max(a, e[j]);
      const double u = std::min(c, e[j + 1]);
      double len = 0.0;
      if (u > l) len = d == 0 ? u - l : sq(u) - sq(l);
      w[d].push_back(len);
    }
  }
  double total = 0.0;
  for_each_index(lo, hi, [&](std::span<const std::size_t> idx) {
    std::size_t flat = 0;
    for (std::size_t d = 0; d < dims; ++d) flat += idx[d] * strides_[d];
    if (!mask_[flat]) return;
    double m = 1.0;
    for (std::size_t d = 0; d < dims; ++d) m *= w[d][idx[d] - lo[d]];
    total += m;
  });
  return total;
}

long GridSet::locate(std::size_t axis, double v) const {
  const auto& e = edges_[axis];
  if (v < e.front() || v >= e.back()) return -1;
  auto it = std::upper_bound(e.begin(), e.end(), v);
  return static_cast<long>(it - e.begin()) - 1;
}

bool GridSet::contains(double t, const SqrtPoint& p) const {
  if (p.dim() + 1 != edges_.size()) throw InvalidArgument("GridSet::contains: dimension mismatch");
  std::size_t flat = 0;
  const long it = locate(0, t);
  if (it < 0) return false;
  flat += static_cast<std::size_t>(it) * strides_[0];
  for (std::size_t i = 0; i < p.dim(); ++i) {
    const long j = locate(i + 1, p[i]);
    if (j < 0) return false;
    flat += static_cast<std::size_t>(j) * strides_[i + 1];
  }
  return mask_[flat] != 0;
}

bool GridSet::contains_x(double t, std::span<const double> x) const {
  if (x.size() + 1 != edges_.size()) throw InvalidArgument("GridSet::contains_x: dimension mismatch");
  const long it = locate(0, t);
  if (it < 0) return false;
  std::size_t flat = static_cast<std::size_t>(it) * strides_[0];
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long j = locate(i + 1, std::sqrt(std::max(x[i], 0.0)));
    if (j < 0) return false;
    flat += static_cast<std::size_t>(j) * strides_[i + 1];
  }
  return mask_[flat] != 0;
}

void GridSet::mark_inside(const Box& region) {
  for (std::size_t cell = 0; cell < mask_.size(); ++cell) {
    const Box c = cell_box(cell);
    const Box r = intersect(c, region);
    if (!r.empty() && box_measure(r) >= box_measure(c) * (1.0 - 1e-12)) mask_[cell] = 1;
  }
}

}  // namespace sqdiff::czd
