#include "sqdiff/estimators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "sqdiff/errors.hpp"
#include "sqdiff/parallel.hpp"
#include "sqdiff/rng.hpp"

namespace sqdiff::est {
namespace {

constexpr double kZ95 = 1.959963984540054;

SimConfig fit_to(SimConfig cfg, double duration) {
  if (!(duration > 0.0)) throw InvalidArgument("simulation window must be positive");
  cfg.horizon = duration;
  cfg.h = std::min(cfg.h, duration);
  return cfg;
}

EstimateReport base_report(const SimConfig& cfg, const std::string& label) {
  EstimateReport r;
  r.n_paths = cfg.path_count;
  r.seed = cfg.seed;
  r.scheme = sde::to_string(cfg.scheme);
  r.h = cfg.h;
  r.config_digest = run_digest(cfg, label);
  return r;
}

void fill_binomial(EstimateReport& r, std::size_t successes, std::size_t n) {
  r.successes = successes;
  r.n_paths = n;
  r.estimate = static_cast<double>(successes) / static_cast<double>(n);
  const auto ci = stats::wilson(successes, n);
  r.ci_low = ci.low;
  r.ci_high = ci.high;
  r.std_error = std::sqrt(r.estimate * (1.0 - r.estimate) / static_cast<double>(n));
}

void fill_mean(EstimateReport& r, const std::vector<double>& values) {
  r.estimate = stats::mean(values);
  r.std_error = values.size() > 1 ? stats::std_error(values) : 0.0;
  r.ci_low = r.estimate - kZ95 * r.std_error;
  r.ci_high = r.estimate + kZ95 * r.std_error;
}

bool outside_base(const HyperCube& base, double t, std::span<const double> x) {
  return !base.contains_time(t) || !geometry::cube_contains_x(base.cube(), x);
}

std::string describe_point(std::span<const double> x) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ')';
  return os.str();
}

}  // namespace

std::string run_digest(const SimConfig& cfg, const std::string& extra) {
  std::ostringstream os;
  os.precision(17);
  os << sde::to_string(cfg.scheme) << '|' << cfg.h << '|' << cfg.seed << '|' << cfg.path_count << '|'
     << extra;
  return stats::digest(os.str());
}

EstimateReport est_hit_prob(const SimConfig& cfg, const CoefficientField& field, const HyperCube& q,
                            const GridSet* gamma, double t0, std::span<const double> x0) {
  const SimConfig run = fit_to(cfg, q.t1() - t0);
  const auto samples = sde::simulate_stopped_many(run, field, q, gamma, t0, x0);
  std::size_t hits = 0;
  for (const auto& s : samples) hits += s.kind == sde::StopKind::Hit ? 1 : 0;
  EstimateReport r = base_report(run, "hitprob");
  fill_binomial(r, hits, samples.size());
  return r;
}

std::vector<std::vector<double>> start_grid(const geometry::AnisoCube& k, int per_axis) {
  if (per_axis < 1) throw InvalidArgument("start_grid: need at least one point per axis");
  const std::size_t n = k.dim();
  std::vector<std::vector<double>> axis(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto sp = k.span(i);
    for (int j = 0; j < per_axis; ++j) {
      const double s = sp.lo + (sp.hi - sp.lo) * j / per_axis;
      axis[i].push_back(s * s);
    }
  }
  std::vector<std::vector<double>> out;
  std::vector<std::size_t> idx(n, 0);
  while (true) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = axis[i][idx[i]];
    out.push_back(std::move(x));
    std::size_t d = n;
    bool done = true;
    while (d-- > 0) {
      if (++idx[d] < axis[d].size()) {
        done = false;
        break;
      }
      idx[d] = 0;
    }
    if (done) break;
  }
  return out;
}

UniformHitReport est_uniform_hit(const SimConfig& cfg, const CoefficientField& field,
                                 const HyperCube& q, const GridSet* gamma,
                                 const std::vector<std::vector<double>>& starts) {
  if (starts.empty()) throw InvalidArgument("est_uniform_hit: empty start grid");
  const geometry::AnisoCube inner(q.cube().center(), q.rho() / 6.0);
  for (std::size_t k = 0; k < starts.size(); ++k) {
    if (starts[k].size() != q.dim() || !geometry::cube_contains_x(inner, starts[k])) {
      throw InvalidArgument("est_uniform_hit: start " + std::to_string(k) + " " +
                            describe_point(starts[k]) + " is outside K(x0, rho/6)");
    }
  }
  UniformHitReport out;
  out.starts = starts;
  for (std::size_t k = 0; k < starts.size(); ++k) {
    SimConfig run = cfg;
    run.seed = rng::splitmix64(cfg.seed + k);
    out.per_start.push_back(est_hit_prob(run, field, q, gamma, q.t0(), starts[k]));
    if (k == 0 || out.per_start[k].ci_low < out.min_lower) {
      out.min_lower = out.per_start[k].ci_low;
      out.argmin = k;
    }
  }
  return out;
}

std::string small_cube_variant(const SmallCubeSpec& spec) {
  const std::size_t n = spec.x0.dim();
  if (spec.x.dim() != n || spec.y.size() != n) throw InvalidArgument("small cube: dimension mismatch");
  auto require = [](bool ok, const char* what) {
    if (!ok) throw PreconditionError(std::string("small cube: ") + what);
  };
  require(spec.beta > 1.0, "need beta > 1");
  require(spec.c > 0.0 && spec.c <= 1.0, "need 0 < c <= 1");
  require(spec.alpha > spec.eps && spec.eps > 0.0, "need alpha > eps > 0");
  require(spec.r >= 0.5 && spec.r < 1.0, "need r in [1/2, 1)");
  require(spec.l > 0.0 && spec.l < 1.0, "need 0 < l < 1");
  const geometry::AnisoCube unit(spec.x0, 1.0);
  require(geometry::cube_includes(unit, geometry::AnisoCube(spec.x, spec.l)),
          "K(x, l) is not inside K(x0, 1)");
  const double l2 = spec.l * spec.l;
  require(spec.t >= spec.eps * l2 && spec.t <= spec.alpha * l2, "need t in [eps l^2, alpha l^2]");
  require(spec.t < 1.0, "need t inside the unit hypercube's time extent");
  require(geometry::cube_contains_x(geometry::AnisoCube(spec.x, spec.beta * spec.l), spec.y) &&
              geometry::cube_contains_x(geometry::AnisoCube(spec.x0, spec.r), spec.y),
          "y is not in K(x, beta l) intersected with K(x0, r)");
  double min_s = spec.x[0];
  for (std::size_t i = 1; i < n; ++i) min_s = std::min(min_s, spec.x[i]);
  return spec.c * spec.l <= min_s ? "interior" : "near_boundary";
}

EstimateReport est_small_cube(const SimConfig& cfg, const CoefficientField& field,
                              const SmallCubeSpec& spec) {
  if (spec.x0.dim() != field.dim()) throw InvalidArgument("est_small_cube: dimension mismatch");
  const std::string variant = small_cube_variant(spec);
  const geometry::AnisoCube unit(spec.x0, 1.0);
  const HyperCube q(0.0, 1.0, unit);
  const geometry::AnisoCube target(spec.x, 0.75 * spec.c * spec.l);
  const SimConfig run = fit_to(cfg, spec.t);
  std::vector<std::uint8_t> ok(run.path_count, 0);
  parallel_for(run.path_count, run.workers, [&](std::size_t p) {
    const auto s = sde::simulate_stopped(run, field, q, nullptr, 0.0, spec.y, p);
    ok[p] = s.kind == sde::StopKind::Horizon && geometry::cube_contains_x(target, s.state);
  });
  std::size_t hits = 0;
  for (auto v : ok) hits += v;
  EstimateReport r = base_report(run, "smallcube");
  fill_binomial(r, hits, ok.size());
  r.variant = variant;
  return r;
}

EstimateReport feynman_kac_eval(const SimConfig& cfg, const CoefficientField& field,
                                const HyperCube& q, const SpaceTimeFn& g, const SpaceTimeFn& f,
                                double t, std::span<const double> x) {
  const SimConfig run = fit_to(cfg, q.t1() - t);
  run.validate(field);
  std::vector<double> values(run.path_count);
  parallel_for(run.path_count, run.workers, [&](std::size_t p) {
    double integral = 0.0;
    sde::StepObserver obs;
    if (f) obs = [&](double tk, std::span<const double> xk, double dt) { integral += f(tk, xk) * dt; };
    const auto s = sde::simulate_stopped(run, field, q, nullptr, t, x, p, obs);
    values[p] = g(s.time, s.state) + integral;
  });
  EstimateReport r = base_report(run, "feynman-kac");
  fill_mean(r, values);
  return r;
}

OscReport est_osc_decay(const SimConfig& cfg, const CoefficientField& field, const HyperCube& base,
                        std::span<const double> scales, const SpaceTimeFn& g, const SpaceTimeFn& f,
                        Anchor anchor, int per_axis) {
  if (per_axis < 2) throw InvalidArgument("est_osc_decay: need at least two grid points per axis");
  if (scales.size() < 2) throw InvalidArgument("est_osc_decay: need at least two scales");
  for (std::size_t k = 0; k < scales.size(); ++k) {
    if (!(scales[k] > 0.0) || scales[k] > base.rho() || (k > 0 && !(scales[k] < scales[k - 1]))) {
      throw InvalidArgument("est_osc_decay: scales must decrease within (0, base rho]");
    }
  }
  const std::size_t n = base.dim();
  OscReport rep;
  rep.scales.assign(scales.begin(), scales.end());
  std::uint64_t job = 0;
  for (double rho : scales) {
    const double dur = base.theta() * rho * rho;
    const double ta = anchor == Anchor::Start ? base.t0() : base.t1() - dur;
    const geometry::AnisoCube k(base.cube().center(), rho);
    std::vector<std::vector<double>> axis(n + 1);
    for (int j = 0; j < per_axis; ++j) axis[0].push_back(ta + dur * j / (per_axis - 1));
    for (std::size_t i = 0; i < n; ++i) {
      const auto sp = k.span(i);
      for (int j = 0; j < per_axis; ++j) axis[i + 1].push_back(sp.lo + (sp.hi - sp.lo) * j / (per_axis - 1));
    }
    double lo = INFINITY, hi = -INFINITY, noise = 0.0;
    std::vector<std::size_t> idx(n + 1, 0);
    std::vector<double> x(n);
    while (true) {
      const double t = axis[0][idx[0]];
      for (std::size_t i = 0; i < n; ++i) x[i] = axis[i + 1][idx[i + 1]] * axis[i + 1][idx[i + 1]];
      double u;
      if (outside_base(base, t, x)) {
        u = g(t, x);
      } else {
        SimConfig run = cfg;
        run.seed = rng::splitmix64(cfg.seed + job++);
        const auto r = feynman_kac_eval(run, field, base, g, f, t, x);
        u = r.estimate;
        noise = std::max(noise, r.std_error);
      }
      if (f) rep.f_sup = std::max(rep.f_sup, std::abs(f(t, x)));
      lo = std::min(lo, u);
      hi = std::max(hi, u);
      std::size_t d = n + 1;
      bool done = true;
      while (d-- > 0) {
        if (++idx[d] < axis[d].size()) {
          done = false;
          break;
        }
        idx[d] = 0;
      }
      if (done) break;
    }
    rep.osc.push_back(hi - lo);
    rep.noise.push_back(noise);
  }
  for (std::size_t k = 0; k + 1 < rep.osc.size(); ++k) {
    const double rho = rep.scales[k];
    rep.nu_hat.push_back(rep.osc[k] > 0.0 ? (rep.osc[k + 1] - rho * rho * rep.f_sup) / rep.osc[k] : NAN);
  }
  for (std::size_t k = 0; k < rep.osc.size(); ++k) {
    if (!(rep.osc[k] > 4.0 * rep.noise[k])) {
      rep.inconclusive = true;
      rep.note = "oscillation at scale " + std::to_string(rep.scales[k]) + " is below the noise floor";
      break;
    }
  }
  if (!rep.inconclusive) {
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < rep.osc.size(); ++k) {
      lx.push_back(std::log(rep.scales[k]));
      ly.push_back(std::log(rep.osc[k]));
    }
    const auto fit = stats::linear_fit(lx, ly);
    rep.alpha_hat = fit.slope;
    rep.c_hat = std::exp(fit.intercept);
    rep.r2 = fit.r2;
  }
  return rep;
}

HolderFit fit_holder(std::span<const HolderPair> pairs, double noise_floor) {
  std::vector<double> lx, ly;
  for (const auto& p : pairs) {
    if (p.s1.size() != p.s2.size()) throw InvalidArgument("fit_holder: dimension mismatch");
    double d = std::sqrt(std::abs(p.t1 - p.t2));
    double ds = 0.0;
    for (std::size_t i = 0; i < p.s1.size(); ++i) ds = std::max(ds, std::abs(p.s1[i] - p.s2[i]));
    d += ds;
    const double du = std::abs(p.u1 - p.u2);
    if (d > 0.0 && du > noise_floor && du > 0.0) {
      lx.push_back(std::log(d));
      ly.push_back(std::log(du));
    }
  }
  if (lx.size() < 4) throw InsufficientData("fit_holder: fewer than 4 usable pairs");
  const auto fit = stats::linear_fit(lx, ly);
  HolderFit out;
  out.alpha_hat = fit.slope;
  out.c_hat = std::exp(fit.intercept);
  out.r2 = fit.r2;
  out.used_pairs = lx.size();
  out.residuals = fit.residuals;
  out.poor_fit = fit.r2 < 0.9;
  return out;
}

MartingaleReport martingale_check(const SimConfig& cfg, const CoefficientField& field,
                                  const coeffs::SmoothProbe& probe, const HyperCube& q, double t0,
                                  std::span<const double> x0, std::span<const double> checkpoints,
                                  const std::optional<SpaceTimeFn>& f_override) {
  if (checkpoints.empty()) throw InvalidArgument("martingale_check: no checkpoints");
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    if (!(checkpoints[k] > 0.0) || (k > 0 && !(checkpoints[k] > checkpoints[k - 1]))) {
      throw InvalidArgument("martingale_check: checkpoints must be positive and increasing");
    }
  }
  if (!probe.u) throw InvalidArgument("martingale_check: probe has no u");
  SpaceTimeFn f;
  if (f_override) {
    f = *f_override;
  } else {
    f = [&](double t, std::span<const double> x) { return coeffs::generator_apply(field, probe, t, x); };
  }
  const std::size_t m = checkpoints.size();
  const SimConfig run = fit_to(cfg, std::min(checkpoints.back(), q.t1() - t0));
  run.validate(field);
  std::vector<double> values(run.path_count * m);
  parallel_for(run.path_count, run.workers, [&](std::size_t p) {
    double integral = 0.0;
    std::size_t next = 0;
    double* row = values.data() + p * m;
    auto obs = [&](double tk, std::span<const double> xk, double dt) {
      while (next < m && tk >= t0 + checkpoints[next] - 0.5 * run.h) {
        row[next++] = probe.u(tk, xk) - integral;
      }
      if (f) integral += f(tk, xk) * dt;
    };
    const auto s = sde::simulate_stopped(run, field, q, nullptr, t0, x0, p, obs);
    const double tail = probe.u(s.time, s.state) - integral;
    while (next < m) row[next++] = tail;
  });

  MartingaleReport rep;
  rep.checkpoints.assign(checkpoints.begin(), checkpoints.end());
  const double m0 = probe.u(t0, x0);
  rep.passed = true;
  std::vector<double> col(run.path_count);
  for (std::size_t k = 0; k < m; ++k) {
    for (std::size_t p = 0; p < run.path_count; ++p) col[p] = values[p * m + k];
    const double dev = stats::mean(col) - m0;
    const double se = col.size() > 1 ? stats::std_error(col) : 0.0;
    rep.deviation.push_back(dev);
    rep.std_error.push_back(se);
    const double ratio = se > 0.0 ? std::abs(dev) / se : (dev == 0.0 ? 0.0 : INFINITY);
    rep.max_ratio = std::max(rep.max_ratio, ratio);
    if (!(ratio < 4.0)) rep.passed = false;
    rep.final_ratio = ratio;
  }
  return rep;
}

InvariantReport est_invariant(const CoefficientField& field, const InvariantConfig& cfg,
                              const std::vector<std::vector<double>>& starts,
                              const std::vector<double>* reference,
                              const std::vector<std::vector<double>>* check_points) {
  const std::size_t n = field.dim();
  if (starts.empty()) throw InvalidArgument("est_invariant: no starts");
  for (const auto& s : starts) {
    if (s.size() != n) throw InvalidArgument("est_invariant: start dimension mismatch");
  }
  if (!(cfg.thinning > 0.0) || !(cfg.burn_in >= 0.0)) {
    throw PreconditionError("est_invariant: need thinning > 0 and burn_in >= 0");
  }
  if (!(cfg.horizon - cfg.burn_in >= cfg.thinning)) {
    throw PreconditionError("est_invariant: horizon leaves no samples after burn-in");
  }
  if (cfg.paths_per_start == 0) throw PreconditionError("est_invariant: need at least one path per start");
  if (cfg.scheme == sde::Scheme::ExactCir && !field.cir_params()) {
    throw InvalidArgument("exact-cir scheme requires a CIR field");
  }
  if (cfg.scheme == sde::Scheme::FullTruncationEuler && !(cfg.h > 0.0 && cfg.h <= cfg.thinning)) {
    throw InvalidArgument("est_invariant: need 0 < h <= thinning");
  }

  std::vector<std::vector<double>> grid;
  if (!check_points) {
    double top = 1.0;
    for (const auto& s : starts) {
      for (double v : s) top = std::max(top, v);
    }
    const std::vector<double> lo(n, 0.0), hi(n, 2.0 * top);
    grid = coeffs::box_grid(lo, hi, 9);
    check_points = &grid;
  }
  const auto cond = coeffs::check_inv_conditions(field, *check_points);
  if (!cond.passed) {
    for (const auto& c : cond.clauses) {
      if (!c.passed) {
        throw PreconditionError("est_invariant: field violates clause " + c.name + " at " +
                                describe_point(c.worst_point));
      }
    }
  }

  const auto per_path =
      static_cast<std::size_t>(std::floor((cfg.horizon - cfg.burn_in) / cfg.thinning + 1e-9));
  const std::size_t paths = cfg.paths_per_start;
  InvariantReport rep;
  rep.config = cfg;
  std::vector<std::vector<std::vector<double>>> pooled(starts.size());  // [start][component]

  for (std::size_t j = 0; j < starts.size(); ++j) {
    std::vector<double> data(paths * per_path * n);
    parallel_for(paths, cfg.workers, [&](std::size_t p) {
      rng::PathRng rng(cfg.seed, j * paths + p);
      sde::Stepper stepper(field, cfg.scheme);
      std::vector<double> x = starts[j];
      auto advance = [&](double dt) {
        if (cfg.scheme == sde::Scheme::ExactCir) {
          stepper.step(x, dt, rng);
          return;
        }
        const auto k = static_cast<std::size_t>(std::ceil(dt / cfg.h * (1.0 - 1e-9)));
        for (std::size_t i = 1; i <= k; ++i) {
          stepper.step(x, i == k ? dt - static_cast<double>(k - 1) * cfg.h : cfg.h, rng);
        }
      };
      if (cfg.burn_in > 0.0) advance(cfg.burn_in);
      for (std::size_t k = 0; k < per_path; ++k) {
        advance(cfg.thinning);
        for (std::size_t i = 0; i < n; ++i) data[(p * per_path + k) * n + i] = x[i];
      }
    });

    StartSummary sum;
    sum.start = starts[j];
    sum.n_samples = paths * per_path;
    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> comp(paths * per_path);
      std::vector<double> path_means(paths, 0.0);
      for (std::size_t p = 0; p < paths; ++p) {
        for (std::size_t k = 0; k < per_path; ++k) {
          const double v = data[(p * per_path + k) * n + i];
          comp[p * per_path + k] = v;
          path_means[p] += v / static_cast<double>(per_path);
        }
      }
      sum.mean.push_back(stats::mean(comp));
      sum.variance.push_back(stats::variance(comp));
      sum.mean_se.push_back(paths > 1 ? stats::std_error(path_means)
                                      : stats::batch_means_se(comp, std::min<std::size_t>(32, per_path)));
      std::vector<double> q;
      for (double level : kQuantileLevels) q.push_back(stats::quantile(comp, level));
      sum.quantiles.push_back(std::move(q));
      pooled[j].push_back(std::move(comp));
    }
    if (reference) sum.w1_reference = stats::wasserstein1(pooled[j][0], *reference);
    rep.per_start.push_back(std::move(sum));
  }

  // In n > 1 the distance is the largest per-coordinate W1.
  rep.w1.assign(starts.size(), std::vector<double>(starts.size(), 0.0));
  for (std::size_t a = 0; a < starts.size(); ++a) {
    for (std::size_t b = a + 1; b < starts.size(); ++b) {
      double d = 0.0;
      for (std::size_t i = 0; i < n; ++i) d = std::max(d, stats::wasserstein1(pooled[a][i], pooled[b][i]));
      rep.w1[a][b] = rep.w1[b][a] = d;
      rep.max_w1 = std::max(rep.max_w1, d);
    }
  }
  return rep;
}

TailReport tail_check(const SimConfig& cfg, const CoefficientField& field,
                      std::span<const double> start, double level, std::span<const double> times,
                      double eps) {
  if (start.size() != field.dim()) throw InvalidArgument("tail_check: dimension mismatch");
  if (times.empty()) throw InvalidArgument("tail_check: empty time grid");
  for (std::size_t k = 0; k < times.size(); ++k) {
    if (!(times[k] >= 0.0) || (k > 0 && !(times[k] > times[k - 1]))) {
      throw InvalidArgument("tail_check: times must be nonnegative and increasing");
    }
  }
  if (!(cfg.h > 0.0) || cfg.path_count == 0) throw InvalidArgument("tail_check: bad config");
  if (cfg.scheme == sde::Scheme::ExactCir && !field.cir_params()) {
    throw InvalidArgument("exact-cir scheme requires a CIR field");
  }
  const std::size_t m = times.size();
  std::vector<std::uint8_t> over(cfg.path_count * m, 0);
  parallel_for(cfg.path_count, cfg.workers, [&](std::size_t p) {
    rng::PathRng rng(cfg.seed, p);
    sde::Stepper stepper(field, cfg.scheme);
    std::vector<double> x(start.begin(), start.end());
    double t = 0.0;
    for (std::size_t k = 0; k < m; ++k) {
      const double dt = times[k] - t;
      if (dt > 0.0) {
        if (cfg.scheme == sde::Scheme::ExactCir) {
          stepper.step(x, dt, rng);
        } else {
          const auto steps = static_cast<std::size_t>(std::ceil(dt / cfg.h * (1.0 - 1e-9)));
          for (std::size_t i = 1; i <= steps; ++i) {
            stepper.step(x, i == steps ? dt - static_cast<double>(steps - 1) * cfg.h : cfg.h, rng);
          }
        }
      }
      t = times[k];
      double norm2 = 0.0;
      for (double v : x) norm2 += v * v;
      over[p * m + k] = std::sqrt(norm2) > level;
    }
  });
  TailReport rep;
  rep.level = level;
  rep.eps = eps;
  rep.times.assign(times.begin(), times.end());
  rep.passed = true;
  for (std::size_t k = 0; k < m; ++k) {
    std::size_t count = 0;
    for (std::size_t p = 0; p < cfg.path_count; ++p) count += over[p * m + k];
    EstimateReport r = base_report(cfg, "tail");
    fill_binomial(r, count, cfg.path_count);
    rep.sup_p = std::max(rep.sup_p, r.estimate);
    if (r.estimate > eps) rep.passed = false;
    rep.exceed.push_back(std::move(r));
  }
  return rep;
}

}  // namespace sqdiff::est
