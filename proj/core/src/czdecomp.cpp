#include "sqdiff/czdecomp.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

#include "sqdiff/errors.hpp"

namespace sqdiff::czd {
namespace {

using geometry::AnisoCube;

double occupancy(const GridSet& gamma, const HyperCube& node) {
  const Box b = to_box(node);
  const double m = box_measure(b);
  return m > 0.0 ? gamma.measure_in(b) / m : 0.0;
}

void check_mu(double mu, const char* what) {
  if (!(mu > 0.0 && mu < 1.0)) throw InvalidArgument(std::string(what) + ": mu must lie in (0, 1)");
}

Box spatial_dilation(const HyperCube& member, const HyperCube& q, double t_lo, double t_hi) {
  Box b;
  b.t_lo = t_lo;
  b.t_hi = t_hi;
  const double rho3 = 3.0 * member.rho();
  for (std::size_t i = 0; i < member.dim(); ++i) {
    const auto dil = geometry::sqrt_span(member.cube().center()[i], rho3);
    const auto base = q.cube().span(i);
    b.s_lo.push_back(std::max(dil.lo, base.lo));
    b.s_hi.push_back(std::min(dil.hi, base.hi));
  }
  return b;
}

double d1_measure_of(std::span<const CubeRecord> family, const HyperCube& q) {
  std::vector<Box> boxes;
  boxes.reserve(family.size());
  for (const auto& rec : family) boxes.push_back(d1_box(rec.cube, q));
  return union_measure(boxes);
}

}  // namespace

std::vector<HyperCube> subdivide(const HyperCube& node) {
  if (!geometry::is_regular(node)) throw InvalidArgument("subdivide: hypercube is not regular");
  const double rho = node.rho();
  const double child_rho = rho / 3.0;
  const std::size_t n = node.dim();

  std::vector<std::vector<double>> centers(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double s = node.cube().center()[i];
    if (s == 0.0) {
      centers[i] = {0.0, 2.0 * child_rho};
    } else {
      // s >= rho guarantees s - 2 rho/3 >= rho/3. At s = rho the lower child
      // must land exactly on rho/3 so that it keeps the boundary branch.
      double low = s - 2.0 * child_rho;
      if (low - child_rho <= 1e-12 * s) low = child_rho;
      centers[i] = {low, s, s + 2.0 * child_rho};
    }
  }

  std::vector<HyperCube> out;
  std::size_t spatial = 1;
  for (const auto& c : centers) spatial *= c.size();
  out.reserve(9 * spatial);
  const double slab = node.duration() / 9.0;
  std::vector<std::size_t> pick(n, 0);
  for (int k = 0; k < 9; ++k) {
    const double t0 = node.t0() + slab * k;
    std::fill(pick.begin(), pick.end(), 0);
    for (std::size_t combo = 0; combo < spatial; ++combo) {
      std::vector<double> s(n);
      for (std::size_t i = 0; i < n; ++i) s[i] = centers[i][pick[i]];
      out.emplace_back(t0, node.theta(), AnisoCube(geometry::SqrtPoint(std::move(s)), child_rho));
      for (std::size_t i = n; i-- > 0;) {
        if (++pick[i] < centers[i].size()) break;
        pick[i] = 0;
      }
    }
  }
  return out;
}

SubdivisionNode subdivision_tree(const HyperCube& root, const GridSet& gamma, int max_level) {
  std::function<SubdivisionNode(const HyperCube&, int)> build = [&](const HyperCube& c, int level) {
    SubdivisionNode node{c, level, occupancy(gamma, c), {}};
    if (level < max_level) {
      for (const auto& child : subdivide(c)) node.children.push_back(build(child, level + 1));
    }
    return node;
  };
  return build(root, 0);
}

int aligned_level(const GridSet& gamma) {
  auto log3 = [](int m) {
    int k = 0;
    while (m % 3 == 0) {
      m /= 3;
      ++k;
    }
    return m == 1 ? k : -1;
  };
  const int a = log3(gamma.space_resolution());
  const int c = log3(gamma.time_resolution());
  if (a < 0 || c < 0) return -1;
  return std::max(a, (c + 1) / 2);
}

Decomposition cz_decompose(const HyperCube& q, const GridSet& gamma, double mu, int max_level) {
  check_mu(mu, "cz_decompose");
  if (!geometry::is_regular(q)) throw InvalidArgument("cz_decompose: hypercube is not regular");
  if (!geometry::hypercube_includes(q, gamma.base())) {
    throw InvalidArgument("cz_decompose: gamma does not lie inside Q");
  }
  if (max_level < 0) {
    max_level = aligned_level(gamma);
    if (max_level < 0) max_level = 6;
  }

  Decomposition dec;
  dec.mu = mu;
  dec.max_level = max_level;
  dec.gamma_measure = gamma.measure_in(to_box(q));

  const double root_occ = occupancy(gamma, q);
  if (root_occ >= mu) {
    dec.root_dense = true;
    dec.stopped.push_back({q, 0, root_occ});
    dec.dense.push_back({q, 0, root_occ});
    dec.covered_measure = dec.gamma_measure;
    return dec;
  }

  // Only nodes with occupancy < mu are expanded; empty children are skipped
  // since no descendant of theirs can reach mu.
  std::function<void(const HyperCube&, int, bool)> visit = [&](const HyperCube& node, int level,
                                                                bool inside_stopped) {
    if (level >= max_level) return;
    const auto children = subdivide(node);
    std::vector<double> occ(children.size());
    bool any_dense = false;
    for (std::size_t k = 0; k < children.size(); ++k) {
      occ[k] = occupancy(gamma, children[k]);
      any_dense = any_dense || occ[k] >= mu;
    }
    if (any_dense) {
      dec.stopped.push_back({node, level, occupancy(gamma, node)});
      if (!inside_stopped) dec.covered_measure += gamma.measure_in(to_box(node));
    }
    for (std::size_t k = 0; k < children.size(); ++k) {
      if (occ[k] >= mu) {
        dec.dense.push_back({children[k], level + 1, occ[k]});
      } else if (occ[k] > 0.0) {
        visit(children[k], level + 1, inside_stopped || any_dense);
      }
    }
  };
  if (root_occ > 0.0) visit(q, 0, false);
  dec.residual = std::max(0.0, dec.gamma_measure - dec.covered_measure);
  return dec;
}

Box d1_box(const HyperCube& member, const HyperCube& q) {
  const double w = member.duration();
  Box b = spatial_dilation(member, q, member.t0() - 3.0 * w, member.t0() + 4.0 * w);
  b.t_lo = std::max(b.t_lo, q.t0());
  b.t_hi = std::min(b.t_hi, q.t1());
  return b;
}

Box d2_box(const HyperCube& member, const HyperCube& q, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("d2_box: eta must be > 0");
  const double w = member.duration();
  return spatial_dilation(member, q, member.t0() - w - 4.0 * w / eta, member.t0() - w);
}

DilationSets build_dilations(std::span<const CubeRecord> family, const HyperCube& q, double eta) {
  if (!(eta > 0.0)) throw InvalidArgument("build_dilations: eta must be > 0");
  DilationSets out;
  out.eta = eta;
  const Box qbox = to_box(q);
  std::vector<Box> d2_in_q;
  for (const auto& rec : family) {
    if (!geometry::is_regular(rec.cube) || !geometry::hypercube_includes(q, rec.cube)) {
      throw InvalidArgument("build_dilations: family member is not a regular subcube of Q");
    }
    out.d1.push_back(d1_box(rec.cube, q));
    out.d2.push_back(d2_box(rec.cube, q, eta));
    d2_in_q.push_back(intersect(out.d2.back(), qbox));
  }
  out.d1_measure = union_measure(out.d1);
  out.d2_measure = union_measure(out.d2);
  out.d2_in_q_measure = union_measure(d2_in_q);
  return out;
}

VerifyAResult verify_a(const GridSet& gamma, const HyperCube& q, double mu, int max_level) {
  check_mu(mu, "verify_a");
  VerifyAResult r;
  r.mu = mu;
  r.q_measure = geometry::hypercube_measure(q);
  r.gamma_measure = gamma.measure_in(to_box(q));
  if (r.gamma_measure > mu * r.q_measure) {
    throw PreconditionError("verify_a: requires |Gamma| <= mu |Q|");
  }
  r.decomposition = cz_decompose(q, gamma, mu, max_level);
  r.d1_measure = d1_measure_of(r.decomposition.stopped, q);
  r.holds = r.gamma_measure <= mu * r.d1_measure;
  return r;
}

VerifyBResult verify_b(std::span<const CubeRecord> family, const HyperCube& q, double eta,
                       int resolution) {
  if (resolution < 1) throw InvalidArgument("verify_b: resolution must be positive");
  const DilationSets d = build_dilations(family, q, eta);
  VerifyBResult r;
  r.eta = eta;
  r.d1_measure = d.d1_measure;
  r.d2_measure = d.d2_measure;
  r.tol = 2.0 / resolution;
  if (d.d2_measure > 0.0) {
    r.ratio = d.d1_measure / d.d2_measure;
  } else {
    r.ratio = d.d1_measure > 0.0 ? INFINITY : 0.0;
  }
  r.holds = d.d1_measure <= (1.0 + eta) * d.d2_measure * (1.0 + r.tol);
  return r;
}

double dichotomy_eta(double mu) { return std::pow(mu, -0.25) - 1.0; }

double dichotomy_rho_bound(double mu_prime, double mu) {
  return (1.0 - std::sqrt(mu)) * std::sqrt(mu_prime) / 4.0;
}

DichotomyReport dichotomy(const GridSet& gamma, const HyperCube& q, double mu_prime, double mu,
                          int max_level) {
  if (!(mu_prime > 0.0 && mu_prime < mu && mu < 1.0)) {
    throw PreconditionError("dichotomy: requires 0 < mu' < mu < 1");
  }
  DichotomyReport r;
  r.mu_prime = mu_prime;
  r.mu = mu;
  r.eta = dichotomy_eta(mu);
  r.q_measure = geometry::hypercube_measure(q);
  r.gamma_measure = gamma.measure_in(to_box(q));
  r.branch1_threshold = std::pow(mu, -0.25) * mu_prime * r.q_measure;
  r.rho_bound = dichotomy_rho_bound(mu_prime, mu);
  if (r.gamma_measure < mu_prime * r.q_measure) {
    throw PreconditionError("dichotomy: requires |Gamma| >= mu' |Q|");
  }

  const Decomposition dec = cz_decompose(q, gamma, mu, max_level);
  auto certify_branch2 = [&] {
    const auto best = std::max_element(dec.dense.begin(), dec.dense.end(),
                                       [](const CubeRecord& a, const CubeRecord& b) {
                                         return a.cube.rho() < b.cube.rho();
                                       });
    if (best != dec.dense.end() && best->occupancy >= mu && best->cube.rho() >= r.rho_bound) {
      r.branch = 2;
      r.certified = true;
      r.witness = *best;
    }
  };

  if (dec.root_dense) {
    r.case_split = 2;
    certify_branch2();
    return r;
  }

  const DilationSets d = build_dilations(dec.stopped, q, r.eta);
  r.d2_in_q = d.d2_in_q_measure;
  r.d2_outside_q = std::max(0.0, d.d2_measure - d.d2_in_q_measure);
  const double split = std::pow(mu, -0.25) * (std::pow(mu, -0.25) - 1.0) * mu_prime * r.q_measure;
  r.case_split = r.d2_outside_q <= split ? 1 : 2;
  if (r.case_split == 1 && r.d2_in_q >= r.branch1_threshold) {
    r.branch = 1;
    r.certified = true;
    return r;
  }
  certify_branch2();
  return r;
}

}  // namespace sqdiff::czd
