#pragma once

// Path simulation of dX^i = b^i dt + sqrt(X^i) (sigma dW)^i on the orthant.

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sqdiff/coeffs.hpp"
#include "sqdiff/geometry.hpp"
#include "sqdiff/gridset.hpp"
#include "sqdiff/rng.hpp"

namespace sqdiff::sde {

using coeffs::CoefficientField;
using czd::GridSet;
using geometry::HyperCube;

enum class Scheme { FullTruncationEuler, ExactCir };

const char* to_string(Scheme s);
Scheme scheme_from_string(const std::string& s);

struct SimConfig {
  double h = 1e-3;
  double horizon = 1.0;
  Scheme scheme = Scheme::FullTruncationEuler;
  std::uint64_t seed = 0;
  std::size_t path_count = 1;
  unsigned workers = 1;

  /// Throws InvalidArgument on h <= 0, h > horizon, no paths, or exact-cir
  /// requested for a field that is not a CIR preset.
  void validate(const CoefficientField& field) const;
};

enum class StopKind { Hit, Exit, Horizon };

const char* to_string(StopKind k);

struct StoppedSample {
  StopKind kind = StopKind::Horizon;
  double time = 0.0;
  std::vector<double> state;
  std::uint64_t path_id = 0;
};

/// Path-major sample of end states: values[p * dim + i].
struct Sample {
  std::size_t dim = 0;
  std::vector<double> values;

  std::size_t size() const { return dim == 0 ? 0 : values.size() / dim; }
  std::span<const double> path(std::size_t p) const { return {values.data() + p * dim, dim}; }
  std::vector<double> component(std::size_t i) const;
};

/// Paths on the grid t_k = k h. data is ordered [path][component][k].
struct Trajectory {
  std::size_t dim = 0;
  double h = 0.0;
  std::size_t steps = 0;
  std::size_t paths = 0;
  std::vector<double> data;

  double time(std::size_t k) const { return static_cast<double>(k) * h; }
  double at(std::size_t path, std::size_t comp, std::size_t k) const {
    return data[(path * dim + comp) * (steps + 1) + k];
  }
};

/// Scratch space for the in-place stepping kernels.
struct StepScratch {
  explicit StepScratch(std::size_t n) : drift(n), noise(n), diffusion(n) {}
  std::vector<double> drift;
  std::vector<double> noise;
  std::vector<double> diffusion;
};

/// X' = max(0, X + b(X) h + sqrt(X) * sigma(X) sqrt(h) z), componentwise.
std::vector<double> step_ft_euler(const CoefficientField& field, std::span<const double> x, double h,
                                  std::span<const double> normals);
void step_ft_euler_inplace(const CoefficientField& field, std::span<double> x, double h,
                           std::span<const double> normals, StepScratch& scratch);

/// Exact transition of dX = kappa (m - X) dt + sqrt(sigma2 X) dW over time h
/// as a Poisson mixture of Gamma laws.
double exact_cir_step(double x, double kappa, double m, double sigma2, double h, rng::PathRng& rng);

struct CirMoments {
  double mean;
  double variance;
};
CirMoments cir_moments(double x, double kappa, double m, double sigma2, double t);

/// One step of the configured scheme, drawing from `rng`.
class Stepper {
 public:
  Stepper(const CoefficientField& field, Scheme scheme);
  void step(std::span<double> x, double h, rng::PathRng& rng);

 private:
  const CoefficientField* field_;
  Scheme scheme_;
  StepScratch scratch_;
};

/// Called at the left end of every step with (t_k, X_k, step length).
using StepObserver = std::function<void(double, std::span<const double>, double)>;

/// One path from (t0, x0) until the first of: hit Gamma, leave Q spatially,
/// reach min(Q.t1, t0 + horizon). Grid times are checked for a hit first
/// and exit second. At the terminal time the path ends with `Horizon` when
/// still spatially inside Q and `Exit` otherwise.
StoppedSample simulate_stopped(const SimConfig& config, const CoefficientField& field,
                               const HyperCube& q, const GridSet* gamma, double t0,
                               std::span<const double> x0, std::uint64_t path_id,
                               const StepObserver& observer = {});

/// config.path_count paths with ids 0..N-1, run on config.workers threads.
std::vector<StoppedSample> simulate_stopped_many(const SimConfig& config,
                                                 const CoefficientField& field, const HyperCube& q,
                                                 const GridSet* gamma, double t0,
                                                 std::span<const double> x0);

/// End states at time t of config.path_count paths from `start`.
Sample sample_marginal(const SimConfig& config, const CoefficientField& field, double t,
                       std::span<const double> start,
                       std::uint64_t stream = rng::kPathStream);

/// Samples of X_t and of rho2 * Y_{t / rho2}, Y started at start / rho2 and
/// stepped with h / rho2 on an independent stream. Constant fields only.
std::pair<Sample, Sample> rescaled_pair(const SimConfig& config, const CoefficientField& field,
                                        double rho2, double t, std::span<const double> start);

/// Full paths on the grid k h for k = 0..steps.
Trajectory simulate_paths(const SimConfig& config, const CoefficientField& field,
                          std::span<const double> start, std::size_t steps);

/// Little-endian header {u64 n, f64 h, u64 steps, u64 paths} then data.
void write_trajectory_binary(std::ostream& os, const Trajectory& tr);
Trajectory read_trajectory_binary(std::istream& is);
/// Columns path,k,t,x0..x{n-1}.
void write_trajectory_csv(std::ostream& os, const Trajectory& tr);

}  // namespace sqdiff::sde
