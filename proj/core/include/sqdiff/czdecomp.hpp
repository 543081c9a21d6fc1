#pragma once

// Calderon-Zygmund type decomposition of a regular hypercube relative to a
// grid set Gamma, with the dilation sets D1/D2 and exact checks of the
// measure inequalities they satisfy.

#include <optional>
#include <span>
#include <vector>

#include "sqdiff/geometry.hpp"
#include "sqdiff/gridset.hpp"

namespace sqdiff::czd {

/// Children of a regular hypercube: 9 time slabs times, per axis, a two-way
/// split at sqrt(x) = rho/3 (center 0) or a three-way split at s -/+ rho/3
/// (center s >= rho). Every child is regular with size rho/3.
std::vector<HyperCube> subdivide(const HyperCube& node);

struct SubdivisionNode {
  HyperCube cube;
  int level = 0;
  double occupancy = 0.0;
  std::vector<SubdivisionNode> children;
};

/// Complete subdivision tree down to `max_level` with occupancies.
SubdivisionNode subdivision_tree(const HyperCube& root, const GridSet& gamma, int max_level);

struct CubeRecord {
  HyperCube cube;
  int level = 0;
  double occupancy = 0.0;
};

struct Decomposition {
  double mu = 0.0;
  int max_level = 0;
  bool root_dense = false;
  /// Nodes with occupancy < mu having at least one child with occupancy >= mu.
  /// When the root itself reaches mu it is the only member.
  std::vector<CubeRecord> stopped;
  /// Maximal cubes reaching occupancy mu (children that triggered a stop).
  std::vector<CubeRecord> dense;
  double gamma_measure = 0.0;
  /// |Gamma intersected with the union of `stopped`|.
  double covered_measure = 0.0;
  /// |Gamma outside the union of `stopped`|.
  double residual = 0.0;
};

/// Smallest level whose cubes each lie in a single grid cell, or -1.
int aligned_level(const GridSet& gamma);

/// max_level < 0 selects aligned_level(gamma) (or 6 when unaligned).
Decomposition cz_decompose(const HyperCube& q, const GridSet& gamma, double mu, int max_level = -1);

struct DilationSets {
  double eta = 0.0;
  std::vector<Box> d1;
  std::vector<Box> d2;
  double d1_measure = 0.0;
  double d2_measure = 0.0;
  double d2_in_q_measure = 0.0;
};

/// D1 box of Q~ = Q_theta(t, x, rho): q intersected with
/// (t - 3 theta rho^2, t + 4 theta rho^2) x K(x, 3 rho).
Box d1_box(const HyperCube& member, const HyperCube& q);
/// D2 box: (t - theta rho^2 - 4 theta rho^2 / eta, t - theta rho^2) x
/// [K(x, 3 rho) intersected with the spatial section of q].
Box d2_box(const HyperCube& member, const HyperCube& q, double eta);

DilationSets build_dilations(std::span<const CubeRecord> family, const HyperCube& q, double eta);

struct VerifyAResult {
  bool holds = false;
  double mu = 0.0;
  double gamma_measure = 0.0;
  double d1_measure = 0.0;
  double q_measure = 0.0;
  Decomposition decomposition;
};

/// |Gamma| <= mu |Q| implies |Gamma| <= mu |D1|; throws PreconditionError
/// when |Gamma| > mu |Q|.
VerifyAResult verify_a(const GridSet& gamma, const HyperCube& q, double mu, int max_level = -1);

struct VerifyBResult {
  bool holds = false;
  double eta = 0.0;
  double d1_measure = 0.0;
  double d2_measure = 0.0;
  double ratio = 0.0;  // |D1| / |D2|, 0 when both vanish
  double tol = 0.0;
};

/// |D1| <= (1 + eta) |D2| (1 + 2 / resolution).
VerifyBResult verify_b(std::span<const CubeRecord> family, const HyperCube& q, double eta,
                       int resolution);

struct DichotomyReport {
  double mu_prime = 0.0;
  double mu = 0.0;
  double eta = 0.0;
  double q_measure = 0.0;
  double gamma_measure = 0.0;
  int case_split = 0;  // 1: |D2 \ Q| small, 2: otherwise
  int branch = 0;      // certified branch, 0 when neither could be certified
  bool certified = false;
  double d2_in_q = 0.0;
  double d2_outside_q = 0.0;
  double branch1_threshold = 0.0;  // mu^{-1/4} mu' |Q|
  double rho_bound = 0.0;          // (1 - sqrt(mu)) sqrt(mu') / 4
  std::optional<CubeRecord> witness;
};

double dichotomy_eta(double mu);
double dichotomy_rho_bound(double mu_prime, double mu);

DichotomyReport dichotomy(const GridSet& gamma, const HyperCube& q, double mu_prime, double mu,
                          int max_level = -1);

}  // namespace sqdiff::czd
