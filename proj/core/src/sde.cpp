#include "sqdiff/sde.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <random>

#include "sqdiff/errors.hpp"
#include "sqdiff/parallel.hpp"

namespace sqdiff::sde {
namespace {

static_assert(std::endian::native == std::endian::little, "trajectory I/O assumes a little-endian host");

// Relative slack when deciding that a grid time has reached the terminal time.
constexpr double kTimeSlack = 1e-9;

struct SpatialBox {
  std::vector<double> lo;
  std::vector<double> hi;

  explicit SpatialBox(const geometry::AnisoCube& k) {
    for (std::size_t i = 0; i < k.dim(); ++i) {
      const auto sp = k.span(i);
      lo.push_back(sp.lo);
      hi.push_back(sp.hi);
    }
  }

  bool contains(std::span<const double> x) const {
    for (std::size_t i = 0; i < x.size(); ++i) {
      const double s = std::sqrt(x[i]);
      if (s < lo[i] || !(s < hi[i])) return false;
    }
    return true;
  }
};

std::size_t step_count(double t, double h) {
  if (t <= 0.0) return 0;
  return static_cast<std::size_t>(std::ceil(t / h * (1.0 - kTimeSlack)));
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <class T>
T get(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof v);
  if (!is) throw InvalidArgument("trajectory file truncated");
  return v;
}

}  // namespace

const char* to_string(Scheme s) {
  return s == Scheme::ExactCir ? "exact-cir" : "full-truncation-euler";
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "full-truncation-euler" || s == "euler") return Scheme::FullTruncationEuler;
  if (s == "exact-cir") return Scheme::ExactCir;
  throw InvalidArgument("unknown scheme: " + s);
}

const char* to_string(StopKind k) {
  switch (k) {
    case StopKind::Hit:
      return "hit";
    case StopKind::Exit:
      return "exit";
    case StopKind::Horizon:
      return "horizon";
  }
  return "horizon";
}

void SimConfig::validate(const CoefficientField& field) const {
  if (!(h > 0.0) || !std::isfinite(h)) throw InvalidArgument("step h must be positive");
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon must be positive");
  if (h > horizon) throw InvalidArgument("step h exceeds horizon");
  if (path_count == 0) throw InvalidArgument("path_count must be positive");
  if (scheme == Scheme::ExactCir && !field.cir_params()) {
    throw InvalidArgument("exact-cir scheme requires a CIR field");
  }
}

std::vector<double> Sample::component(std::size_t i) const {
  std::vector<double> out(size());
  for (std::size_t p = 0; p < out.size(); ++p) out[p] = values[p * dim + i];
  return out;
}

void step_ft_euler_inplace(const CoefficientField& field, std::span<double> x, double h,
                           std::span<const double> normals, StepScratch& scratch) {
  const std::size_t n = x.size();
  field.drift_into(x, scratch.drift);
  field.diffuse_into(x, normals, scratch.diffusion);
  const double sqrt_h = std::sqrt(h);
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i] + scratch.drift[i] * h + std::sqrt(x[i]) * scratch.diffusion[i] * sqrt_h;
    x[i] = v > 0.0 ? v : 0.0;
  }
}

std::vector<double> step_ft_euler(const CoefficientField& field, std::span<const double> x, double h,
                                  std::span<const double> normals) {
  if (x.size() != field.dim() || normals.size() != field.dim()) {
    throw InvalidArgument("step_ft_euler: dimension mismatch");
  }
  for (double v : x) {
    if (!(v >= 0.0)) throw InvalidArgument("step_ft_euler: state outside the orthant");
  }
  std::vector<double> out(x.begin(), x.end());
  StepScratch scratch(x.size());
  step_ft_euler_inplace(field, out, h, normals, scratch);
  return out;
}

double exact_cir_step(double x, double kappa, double m, double sigma2, double h, rng::PathRng& rng) {
  if (!(kappa > 0.0) || !(m >= 0.0) || !(sigma2 > 0.0) || !(x >= 0.0) || !(h >= 0.0)) {
    throw InvalidArgument("exact_cir_step: need kappa > 0, m >= 0, sigma2 > 0, x >= 0, h >= 0");
  }
  if (h == 0.0) return x;
  const double decay = std::exp(-kappa * h);
  const double c = sigma2 * (-std::expm1(-kappa * h)) / (4.0 * kappa);
  const double d = 4.0 * kappa * m / sigma2;
  const double nc = x * decay / c;
  long k = 0;
  if (nc > 0.0) k = std::poisson_distribution<long>(nc / 2.0)(rng);
  const double shape = d / 2.0 + static_cast<double>(k);
  if (shape <= 0.0) return 0.0;
  return c * std::gamma_distribution<double>(shape, 2.0)(rng);
}

CirMoments cir_moments(double x, double kappa, double m, double sigma2, double t) {
  const double e = std::exp(-kappa * t);
  const double one_minus = -std::expm1(-kappa * t);
  return {m + (x - m) * e,
          x * sigma2 * e * one_minus / kappa + m * sigma2 * one_minus * one_minus / (2.0 * kappa)};
}

Stepper::Stepper(const CoefficientField& field, Scheme scheme)
    : field_(&field), scheme_(scheme), scratch_(field.dim()) {
  if (scheme == Scheme::ExactCir && !field.cir_params()) {
    throw InvalidArgument("exact-cir scheme requires a CIR field");
  }
}

void Stepper::step(std::span<double> x, double h, rng::PathRng& rng) {
  if (scheme_ == Scheme::ExactCir) {
    const auto& p = *field_->cir_params();
    for (std::size_t i = 0; i < x.size(); ++i) {
      x[i] = exact_cir_step(x[i], p.kappa[i], p.m[i], p.sigma2[i], h, rng);
    }
    return;
  }
  for (auto& z : scratch_.noise) z = rng.normal();
  step_ft_euler_inplace(*field_, x, h, scratch_.noise, scratch_);
}

StoppedSample simulate_stopped(const SimConfig& config, const CoefficientField& field,
                               const HyperCube& q, const GridSet* gamma, double t0,
                               std::span<const double> x0, std::uint64_t path_id,
                               const StepObserver& observer) {
  if (x0.size() != field.dim() || q.dim() != field.dim()) {
    throw InvalidArgument("simulate_stopped: dimension mismatch");
  }
  if (gamma && gamma->dim() != q.dim()) throw InvalidArgument("simulate_stopped: gamma dimension mismatch");
  const SpatialBox box(q.cube());
  for (double v : x0) {
    if (!(v >= 0.0)) throw InvalidArgument("simulate_stopped: start outside the orthant");
  }
  if (!q.contains_time(t0) || !box.contains(x0)) {
    throw InvalidArgument("simulate_stopped: start outside Q");
  }

  StoppedSample out;
  out.path_id = path_id;
  out.state.assign(x0.begin(), x0.end());
  out.time = t0;
  if (gamma && gamma->contains_x(t0, out.state)) {
    out.kind = StopKind::Hit;
    return out;
  }

  const double t_end = std::min(q.t1(), t0 + config.horizon);
  const std::size_t steps = step_count(t_end - t0, config.h);
  rng::PathRng rng(config.seed, path_id);
  Stepper stepper(field, config.scheme);
  double t = t0;
  for (std::size_t k = 1; k <= steps; ++k) {
    const bool last = k == steps;
    const double t_next = last ? t_end : t0 + static_cast<double>(k) * config.h;
    if (observer) observer(t, out.state, t_next - t);
    stepper.step(out.state, t_next - t, rng);
    t = t_next;
    out.time = t;
    if (gamma && gamma->contains_x(t, out.state)) {
      out.kind = StopKind::Hit;
      return out;
    }
    if (!box.contains(out.state)) {
      out.kind = StopKind::Exit;
      return out;
    }
  }
  out.kind = StopKind::Horizon;
  return out;
}

std::vector<StoppedSample> simulate_stopped_many(const SimConfig& config,
                                                 const CoefficientField& field, const HyperCube& q,
                                                 const GridSet* gamma, double t0,
                                                 std::span<const double> x0) {
  config.validate(field);
  std::vector<StoppedSample> out(config.path_count);
  parallel_for(config.path_count, config.workers, [&](std::size_t p) {
    out[p] = simulate_stopped(config, field, q, gamma, t0, x0, p);
  });
  return out;
}

Sample sample_marginal(const SimConfig& config, const CoefficientField& field, double t,
                       std::span<const double> start, std::uint64_t stream) {
  if (start.size() != field.dim()) throw InvalidArgument("sample_marginal: dimension mismatch");
  if (!(t >= 0.0)) throw InvalidArgument("sample_marginal: negative time");
  if (!(config.h > 0.0) || config.path_count == 0) throw InvalidArgument("sample_marginal: bad config");
  if (config.scheme == Scheme::ExactCir && !field.cir_params()) {
    throw InvalidArgument("exact-cir scheme requires a CIR field");
  }
  const std::size_t n = field.dim();
  Sample out{n, std::vector<double>(config.path_count * n)};
  const std::size_t steps = config.scheme == Scheme::ExactCir ? (t > 0.0 ? 1 : 0) : step_count(t, config.h);
  const double h = config.scheme == Scheme::ExactCir ? t : config.h;
  parallel_for(config.path_count, config.workers, [&](std::size_t p) {
    rng::PathRng rng(config.seed, p, stream);
    Stepper stepper(field, config.scheme);
    std::span<double> x(out.values.data() + p * n, n);
    std::copy(start.begin(), start.end(), x.begin());
    for (std::size_t k = 1; k <= steps; ++k) {
      const double dt = k == steps ? t - static_cast<double>(k - 1) * h : h;
      stepper.step(x, dt, rng);
    }
  });
  return out;
}

std::pair<Sample, Sample> rescaled_pair(const SimConfig& config, const CoefficientField& field,
                                        double rho2, double t, std::span<const double> start) {
  if (!field.is_constant()) throw InvalidArgument("rescaled_pair: field must have constant coefficients");
  if (!(rho2 > 0.0)) throw InvalidArgument("rescaled_pair: rho2 must be positive");
  Sample direct = sample_marginal(config, field, t, start);
  SimConfig scaled = config;
  scaled.h = config.h / rho2;
  std::vector<double> y(start.begin(), start.end());
  for (auto& v : y) v /= rho2;
  Sample rescaled = sample_marginal(scaled, field, t / rho2, y, rng::kRescaledStream);
  for (auto& v : rescaled.values) v *= rho2;
  return {std::move(direct), std::move(rescaled)};
}

Trajectory simulate_paths(const SimConfig& config, const CoefficientField& field,
                          std::span<const double> start, std::size_t steps) {
  config.validate(field);
  if (start.size() != field.dim()) throw InvalidArgument("simulate_paths: dimension mismatch");
  const std::size_t n = field.dim();
  Trajectory tr{n, config.h, steps, config.path_count, {}};
  tr.data.resize(config.path_count * n * (steps + 1));
  parallel_for(config.path_count, config.workers, [&](std::size_t p) {
    rng::PathRng rng(config.seed, p);
    Stepper stepper(field, config.scheme);
    std::vector<double> x(start.begin(), start.end());
    for (std::size_t k = 0; k <= steps; ++k) {
      if (k > 0) stepper.step(x, config.h, rng);
      for (std::size_t i = 0; i < n; ++i) tr.data[(p * n + i) * (steps + 1) + k] = x[i];
    }
  });
  return tr;
}

void write_trajectory_binary(std::ostream& os, const Trajectory& tr) {
  put<std::uint64_t>(os, tr.dim);
  put<double>(os, tr.h);
  put<std::uint64_t>(os, tr.steps);
  put<std::uint64_t>(os, tr.paths);
  os.write(reinterpret_cast<const char*>(tr.data.data()),
           static_cast<std::streamsize>(tr.data.size() * sizeof(double)));
  if (!os) throw InvalidArgument("trajectory write failed");
}

Trajectory read_trajectory_binary(std::istream& is) {
  Trajectory tr;
  tr.dim = get<std::uint64_t>(is);
  tr.h = get<double>(is);
  tr.steps = get<std::uint64_t>(is);
  tr.paths = get<std::uint64_t>(is);
  tr.data.resize(tr.dim * tr.paths * (tr.steps + 1));
  is.read(reinterpret_cast<char*>(tr.data.data()), static_cast<std::streamsize>(tr.data.size() * sizeof(double)));
  if (!is) throw InvalidArgument("trajectory file truncated");
  return tr;
}

void write_trajectory_csv(std::ostream& os, const Trajectory& tr) {
  os << "path,k,t";
  for (std::size_t i = 0; i < tr.dim; ++i) os << ",x" << i;
  os << '\n';
  os.precision(17);
  for (std::size_t p = 0; p < tr.paths; ++p) {
    for (std::size_t k = 0; k <= tr.steps; ++k) {
      os << p << ',' << k << ',' << tr.time(k);
      for (std::size_t i = 0; i < tr.dim; ++i) os << ',' << tr.at(p, i, k);
      os << '\n';
    }
  }
}

}  // namespace sqdiff::sde
