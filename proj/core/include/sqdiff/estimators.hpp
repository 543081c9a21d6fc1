#pragma once

// Monte Carlo estimators for hitting probabilities, small-cube events,
// Feynman-Kac values, oscillation decay, martingale identities and
// invariant laws.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sqdiff/coeffs.hpp"
#include "sqdiff/geometry.hpp"
#include "sqdiff/gridset.hpp"
#include "sqdiff/sde.hpp"
#include "sqdiff/stats.hpp"

namespace sqdiff::est {

using coeffs::CoefficientField;
using czd::GridSet;
using geometry::HyperCube;
using geometry::SqrtPoint;
using sde::SimConfig;

/// f(t, x) or g(t, x).
using SpaceTimeFn = std::function<double(double, std::span<const double>)>;

struct EstimateReport {
  double estimate = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double std_error = 0.0;
  std::size_t n_paths = 0;
  std::size_t successes = 0;
  std::uint64_t seed = 0;
  std::string config_digest;
  std::string scheme;
  double h = 0.0;
  std::string variant;
};

/// Digest of the run parameters (scheme, h, seed, paths) plus `extra`.
std::string run_digest(const SimConfig& cfg, const std::string& extra);

/// P[sigma_Gamma <= tau_Q] from (t0, x0) with a Wilson interval.
EstimateReport est_hit_prob(const SimConfig& cfg, const CoefficientField& field, const HyperCube& q,
                            const GridSet* gamma, double t0, std::span<const double> x0);

struct UniformHitReport {
  std::vector<std::vector<double>> starts;
  std::vector<EstimateReport> per_start;
  double min_lower = 0.0;
  std::size_t argmin = 0;
};

/// est_hit_prob from every x in `starts` (x-coordinates) at time Q.t0. Every
/// start must lie in K(x0, rho / 6); start k runs on seed splitmix(seed + k).
UniformHitReport est_uniform_hit(const SimConfig& cfg, const CoefficientField& field,
                                 const HyperCube& q, const GridSet* gamma,
                                 const std::vector<std::vector<double>>& starts);

/// Start grid in K(x0, rho/6): `per_axis` values of sqrt(x^i) per axis over
/// [lo, lo + (hi - lo) * (per_axis - 1) / per_axis], always containing the
/// lower corner.
std::vector<std::vector<double>> start_grid(const geometry::AnisoCube& k, int per_axis);

struct SmallCubeSpec {
  SqrtPoint x0;  // center of the unit cube K(x0, 1)
  SqrtPoint x;   // center of K(x, l)
  double l = 0.5;
  double c = 1.0;
  double beta = 2.0;
  double r = 0.5;
  double eps = 0.1;
  double alpha = 1.0;
  double t = 0.1;
  std::vector<double> y;  // start, x-coordinates
};

/// Checks the geometric preconditions (PreconditionError on failure) and
/// returns "interior" when c l <= min sqrt(x^i) also holds, else
/// "near_boundary".
std::string small_cube_variant(const SmallCubeSpec& spec);

/// P^y[X_t in K(x, 3cl/4), t <= tau_{Q_1(0, x0, 1)}]. The report's variant
/// is "interior" when c l <= min sqrt(x^i) also holds, else "near_boundary".
EstimateReport est_small_cube(const SimConfig& cfg, const CoefficientField& field,
                              const SmallCubeSpec& spec);

/// u(t, x) = E[g(tau, X_tau)] + E[sum_k f(t_k, X_k) dt_k] with tau the exit
/// time from Q. The interval is mean +- 1.96 standard errors.
EstimateReport feynman_kac_eval(const SimConfig& cfg, const CoefficientField& field,
                                const HyperCube& q, const SpaceTimeFn& g, const SpaceTimeFn& f,
                                double t, std::span<const double> x);

/// Where the nested cubes sit inside the base cube in time.
enum class Anchor { Start, End };

struct OscReport {
  std::vector<double> scales;
  std::vector<double> osc;
  std::vector<double> noise;  // largest standard error on each scale's grid
  std::vector<double> nu_hat;
  double f_sup = 0.0;
  double alpha_hat = 0.0;
  double c_hat = 0.0;
  double r2 = 0.0;
  bool inconclusive = false;
  std::string note;
};

/// Q(rho) = [a, a + theta rho^2) x K(x0, rho) with a = base.t0 (Start) or
/// base.t1 - theta rho^2 (End). u is the Feynman-Kac solution on `base`,
/// evaluated on a closed grid of `per_axis` points per axis of every Q(rho);
/// grid points outside base take the boundary value g.
OscReport est_osc_decay(const SimConfig& cfg, const CoefficientField& field, const HyperCube& base,
                        std::span<const double> scales, const SpaceTimeFn& g, const SpaceTimeFn& f,
                        Anchor anchor = Anchor::End, int per_axis = 5);

struct HolderPair {
  double t1 = 0.0;
  std::vector<double> s1;
  double u1 = 0.0;
  double t2 = 0.0;
  std::vector<double> s2;
  double u2 = 0.0;
};

struct HolderFit {
  double alpha_hat = 0.0;
  double c_hat = 0.0;
  double r2 = 0.0;
  std::size_t used_pairs = 0;
  std::vector<double> residuals;
  bool poor_fit = false;  // r2 < 0.9
};

/// log|u1 - u2| against log(|t1 - t2|^(1/2) + max_i |s1 - s2|) over pairs
/// whose difference exceeds noise_floor.
HolderFit fit_holder(std::span<const HolderPair> pairs, double noise_floor = 0.0);

struct MartingaleReport {
  std::vector<double> checkpoints;
  std::vector<double> deviation;
  std::vector<double> std_error;
  double max_ratio = 0.0;  // max |deviation| / SE
  double final_ratio = 0.0;
  bool passed = false;
};

/// M_s = u(t0 + s ^ tau, X_{s ^ tau}) - sum f(t_k, X_k) dt_k over steps before
/// s ^ tau, with f = generator applied to u unless `f_override` is given.
/// Passes iff |E M_s - u(t0, x0)| < 4 SE at every checkpoint.
MartingaleReport martingale_check(const SimConfig& cfg, const CoefficientField& field,
                                  const coeffs::SmoothProbe& probe, const HyperCube& q, double t0,
                                  std::span<const double> x0, std::span<const double> checkpoints,
                                  const std::optional<SpaceTimeFn>& f_override = std::nullopt);

struct InvariantConfig {
  double burn_in = 50.0;
  double horizon = 5000.0;
  double thinning = 1.0;
  std::size_t paths_per_start = 64;
  double h = 1e-2;  // Euler step; ignored by the exact scheme
  sde::Scheme scheme = sde::Scheme::ExactCir;
  std::uint64_t seed = 0;
  unsigned workers = 1;
};

struct StartSummary {
  std::vector<double> start;
  std::size_t n_samples = 0;
  std::vector<double> mean;       // per component
  std::vector<double> mean_se;    // across independent paths
  std::vector<double> variance;   // per component
  std::vector<std::vector<double>> quantiles;  // per component at kQuantileLevels
  std::optional<double> w1_reference;
};

inline constexpr double kQuantileLevels[] = {0.05, 0.25, 0.5, 0.75, 0.95};

struct InvariantReport {
  InvariantConfig config;
  std::vector<StartSummary> per_start;
  std::vector<std::vector<double>> w1;  // pairwise between starts
  double max_w1 = 0.0;
};

/// Time-averaged empirical laws after burn-in from each start. `reference`
/// is compared with component 0. The field
/// must pass check_inv_conditions on `check_points` (default: a grid over
/// [0, 2 max(1, max start)]^n).
InvariantReport est_invariant(const CoefficientField& field, const InvariantConfig& cfg,
                              const std::vector<std::vector<double>>& starts,
                              const std::vector<double>* reference = nullptr,
                              const std::vector<std::vector<double>>* check_points = nullptr);

struct TailReport {
  double level = 0.0;
  double eps = 0.0;
  std::vector<double> times;
  std::vector<EstimateReport> exceed;
  double sup_p = 0.0;
  bool passed = false;
};

/// P[|X_t| > level] on the time grid, one path per sample observed at every
/// grid time. Passes iff every estimate is <= eps.
TailReport tail_check(const SimConfig& cfg, const CoefficientField& field,
                      std::span<const double> start, double level, std::span<const double> times,
                      double eps);

}  // namespace sqdiff::est
