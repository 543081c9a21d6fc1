#include "sqdiff_cli/app.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "sqdiff/coeffs.hpp"
#include "sqdiff/czdecomp.hpp"
#include "sqdiff/errors.hpp"
#include "sqdiff/estimators.hpp"
#include "sqdiff/rng.hpp"
#include "sqdiff/sde.hpp"
#include "sqdiff/serialize.hpp"
#include "sqdiff/stats.hpp"

namespace sqdiff::cli {
namespace {

using coeffs::CoefficientField;
using czd::GridSet;
using geometry::HyperCube;

// ---- config access --------------------------------------------------------

const json& section(const json& cfg, const char* key) {
  if (!cfg.contains(key) || !cfg.at(key).is_object()) {
    throw InvalidArgument(std::string("missing object '") + key + "'");
  }
  return cfg.at(key);
}

const json& empty_object() {
  static const json e = json::object();
  return e;
}

const json& optional_section(const json& cfg, const char* key) {
  if (!cfg.contains(key)) return empty_object();
  if (!cfg.at(key).is_object()) throw InvalidArgument(std::string("'") + key + "' must be an object");
  return cfg.at(key);
}

double num(const json& j, const std::string& key, std::optional<double> def = std::nullopt) {
  if (!j.contains(key)) {
    if (def) return *def;
    throw InvalidArgument("missing number '" + key + "'");
  }
  if (!j.at(key).is_number()) throw InvalidArgument("'" + key + "' must be a number");
  const double v = j.at(key).get<double>();
  if (!std::isfinite(v)) throw InvalidArgument("'" + key + "' must be finite");
  return v;
}

std::size_t count(const json& j, const std::string& key, std::optional<std::size_t> def = std::nullopt) {
  if (!j.contains(key)) {
    if (def) return *def;
    throw InvalidArgument("missing integer '" + key + "'");
  }
  const json& v = j.at(key);
  const bool ok = v.is_number_unsigned() || (v.is_number_integer() && v.get<std::int64_t>() >= 0);
  if (!ok) throw InvalidArgument("'" + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

bool flag(const json& j, const std::string& key, bool def = false) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_boolean()) throw InvalidArgument("'" + key + "' must be true or false");
  return j.at(key).get<bool>();
}

std::string text(const json& j, const std::string& key, const std::string& def) {
  if (!j.contains(key)) return def;
  if (!j.at(key).is_string()) throw InvalidArgument("'" + key + "' must be a string");
  return j.at(key).get<std::string>();
}

std::vector<double> vec(const json& j, const std::string& key,
                        std::optional<std::vector<double>> def = std::nullopt) {
  if (!j.contains(key)) {
    if (def) return *def;
    throw InvalidArgument("missing array '" + key + "'");
  }
  const json& v = j.at(key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw InvalidArgument("'" + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw InvalidArgument("'" + key + "' must hold numbers only");
    out.push_back(e.get<double>());
  }
  return out;
}

std::vector<std::vector<double>> points(const json& j, const std::string& key) {
  if (!j.contains(key) || !j.at(key).is_array()) throw InvalidArgument("missing array of points '" + key + "'");
  std::vector<std::vector<double>> out;
  for (const auto& e : j.at(key)) {
    json wrap = {{"p", e}};
    out.push_back(vec(wrap, "p"));
  }
  return out;
}

std::string fmt_point(std::span<const double> x) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < x.size(); ++i) os << (i ? ", " : "") << x[i];
  os << ')';
  return os.str();
}

void need_dim(std::size_t got, std::size_t want, const std::string& what) {
  if (got != want) {
    throw InvalidArgument(what + " has dimension " + std::to_string(got) + ", expected " + std::to_string(want));
  }
}

// ---- shared pieces -----------------------------------------------------

struct Context {
  json cfg;
  std::uint64_t seed = 0;
  unsigned workers = 1;
  bool dry = false;
  std::vector<std::string> diagnostics;
};

sde::SimConfig sim_config(const Context& ctx, const json& ex, double default_h = 1e-3) {
  sde::SimConfig c;
  c.h = num(ex, "h", default_h);
  if (!(c.h > 0.0)) throw InvalidArgument("'h' must be positive");
  c.horizon = num(ex, "horizon", 1e300);
  c.scheme = sde::scheme_from_string(text(ex, "scheme", "full-truncation-euler"));
  c.seed = ctx.seed;
  c.path_count = count(ex, "paths", 10000);
  if (c.path_count == 0) throw InvalidArgument("'paths' must be positive");
  c.workers = ctx.workers;
  return c;
}

CoefficientField model(const Context& ctx) { return io::field_from_json(section(ctx.cfg, "model")); }

HyperCube geometry_cube(const Context& ctx) { return io::hypercube_from_json(section(ctx.cfg, "geometry")); }

GridSet build_gamma(const json& g, const HyperCube& q, std::uint64_t seed) {
  if (g.contains("runs")) return io::gridset_from_json(g);
  const HyperCube base = g.contains("base") ? io::hypercube_from_json(g.at("base")) : q;
  std::vector<double> res = vec(g, "resolution", std::vector<double>{27, 27});
  if (res.size() != 2 || res[0] < 1 || res[1] < 1) throw InvalidArgument("gamma 'resolution' must be [m_t, m_s]");
  GridSet out(base, static_cast<int>(res[0]), static_cast<int>(res[1]));
  const std::string kind = text(g, "kind", "");
  if (kind == "empty") return out;
  if (kind == "full") return GridSet::full(base, static_cast<int>(res[0]), static_cast<int>(res[1]));
  if (kind == "time_slab") {
    const std::size_t from = count(g, "from_cell");
    if (from > out.axis_cells(0)) throw InvalidArgument("gamma 'from_cell' beyond the time grid");
    for (std::size_t c = 0; c < out.cell_count(); ++c) {
      if (out.multi_index(c)[0] >= from) out.set(c, true);
    }
    return out;
  }
  if (kind == "random") {
    const double p = num(g, "fraction");
    if (!(p >= 0.0 && p <= 1.0)) throw InvalidArgument("gamma 'fraction' must be in [0, 1]");
    rng::PathRng r(g.contains("seed") ? count(g, "seed") : seed, 0, rng::kAuxStream);
    for (std::size_t c = 0; c < out.cell_count(); ++c) out.set(c, r.uniform() < p);
    return out;
  }
  if (kind == "box") {
    czd::Box b;
    const auto t = vec(g, "t");
    if (t.size() != 2) throw InvalidArgument("gamma box 't' must be [lo, hi]");
    b.t_lo = t[0];
    b.t_hi = t[1];
    b.s_lo = vec(g, "s_lo");
    b.s_hi = vec(g, "s_hi");
    need_dim(b.s_lo.size(), base.dim(), "gamma box s_lo");
    need_dim(b.s_hi.size(), base.dim(), "gamma box s_hi");
    out.mark_inside(b);
    return out;
  }
  throw InvalidArgument("gamma needs 'runs' or a kind in {empty, full, time_slab, random, box}");
}

std::optional<GridSet> maybe_gamma(Context& ctx, const HyperCube& q) {
  if (!ctx.cfg.contains("gamma") || ctx.cfg.at("gamma").is_null()) return std::nullopt;
  const json& g = ctx.cfg.at("gamma");
  if (!g.is_object()) throw InvalidArgument("'gamma' must be an object");
  GridSet out = build_gamma(g, q, ctx.seed);
  need_dim(out.dim(), q.dim(), "gamma");
  if (!geometry::hypercube_includes(q, out.base())) {
    ctx.diagnostics.push_back("gamma is not contained in Q: its base hypercube extends outside the geometry");
  }
  return out;
}

void check_start(Context& ctx, const HyperCube& q, double t, std::span<const double> x, const std::string& what) {
  need_dim(x.size(), q.dim(), what);
  for (double v : x) {
    if (!(v >= 0.0)) {
      ctx.diagnostics.push_back(what + " " + fmt_point(x) + " is outside the orthant");
      return;
    }
  }
  if (!q.contains_time(t) || !geometry::cube_contains_x(q.cube(), x)) {
    ctx.diagnostics.push_back(what + " (t=" + std::to_string(t) + ", x=" + fmt_point(x) + ") is outside Q");
  }
}

json digest_view(json cfg) {
  if (cfg.is_object()) {
    cfg.erase("workers");
    cfg.erase("output");
  }
  return cfg;
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

struct Outcome {
  bool passed = true;
  json report;
  std::vector<Artifact> artifacts;
};

std::string csv_number(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

// ---- subcommands ----------------------------------------------------------

// End-state law at time t: moments per component, optional targets.
Outcome simulate_marginal(Context& ctx, const CoefficientField& field, const json& ex, sde::SimConfig cfg,
                          const std::vector<double>& start) {
  const double t = num(ex, "t");
  if (!(t > 0.0)) throw InvalidArgument("'t' must be positive");
  cfg.horizon = t;
  cfg.validate(field);
  for (double v : start) {
    if (!(v >= 0.0)) ctx.diagnostics.push_back("experiment.start is outside the orthant");
  }
  std::vector<double> mean_target, var_target;
  if (ex.contains("mean_target")) {
    mean_target = vec(ex, "mean_target");
    need_dim(mean_target.size(), field.dim(), "experiment.mean_target");
  }
  if (ex.contains("variance_target")) {
    var_target = vec(ex, "variance_target");
    need_dim(var_target.size(), field.dim(), "experiment.variance_target");
  }
  const double mean_se = num(ex, "mean_se_band", 3.0);
  const double var_tol = num(ex, "variance_rel_tol", 0.05);
  if (ctx.dry || !ctx.diagnostics.empty()) return {};

  const auto sample = sde::sample_marginal(cfg, field, t, start);
  Outcome out;
  json comps = json::array();
  for (std::size_t i = 0; i < field.dim(); ++i) {
    const auto c = sample.component(i);
    const double m = stats::mean(c);
    const double se = stats::std_error(c);
    const double v = stats::variance(c);
    json row = {{"mean", m}, {"std_error", se}, {"variance", v}};
    if (!mean_target.empty()) {
      row["mean_target"] = mean_target[i];
      row["mean_ok"] = std::abs(m - mean_target[i]) <= mean_se * se;
      out.passed = out.passed && row["mean_ok"].get<bool>();
    }
    if (!var_target.empty()) {
      row["variance_target"] = var_target[i];
      row["variance_ok"] = std::abs(v - var_target[i]) <= var_tol * var_target[i];
      out.passed = out.passed && row["variance_ok"].get<bool>();
    }
    comps.push_back(std::move(row));
  }
  out.report = {{"n", field.dim()},
                {"t", t},
                {"h", cfg.h},
                {"paths", cfg.path_count},
                {"scheme", sde::to_string(cfg.scheme)},
                {"components", comps}};
  std::ostringstream csv;
  csv << "path";
  for (std::size_t i = 0; i < field.dim(); ++i) csv << ",x" << i;
  csv << '\n';
  for (std::size_t p = 0; p < sample.size(); ++p) {
    csv << p;
    for (double v : sample.path(p)) csv << ',' << csv_number(v);
    csv << '\n';
  }
  out.artifacts.push_back({"marginal.csv", csv.str(), false});
  return out;
}

Outcome cmd_simulate(Context& ctx) {
  const auto field = model(ctx);
  const json& ex = section(ctx.cfg, "experiment");
  auto cfg = sim_config(ctx, ex);
  const auto start = vec(ex, "start");
  need_dim(start.size(), field.dim(), "experiment.start");
  if (ex.contains("t")) return simulate_marginal(ctx, field, ex, cfg, start);
  const std::size_t steps = count(ex, "steps");
  if (steps == 0) throw InvalidArgument("'steps' must be positive");
  cfg.horizon = cfg.h * static_cast<double>(steps);
  cfg.validate(field);
  for (double v : start) {
    if (!(v >= 0.0)) ctx.diagnostics.push_back("experiment.start is outside the orthant");
  }
  if (ctx.dry || !ctx.diagnostics.empty()) return {};

  const auto tr = sde::simulate_paths(cfg, field, start, steps);
  Outcome out;
  std::vector<double> final_mean(tr.dim, 0.0);
  for (std::size_t p = 0; p < tr.paths; ++p) {
    for (std::size_t i = 0; i < tr.dim; ++i) final_mean[i] += tr.at(p, i, steps) / static_cast<double>(tr.paths);
  }
  out.report = {{"n", tr.dim},
                {"h", tr.h},
                {"steps", tr.steps},
                {"paths", tr.paths},
                {"scheme", sde::to_string(cfg.scheme)},
                {"final_mean", final_mean}};
  std::ostringstream bin;
  sde::write_trajectory_binary(bin, tr);
  out.artifacts.push_back({"trajectory.bin", bin.str(), true});
  json sidecar = {{"file", "trajectory.bin"},
                  {"n", tr.dim},
                  {"h", tr.h},
                  {"steps", tr.steps},
                  {"paths", tr.paths},
                  {"dtype", "float64-le"},
                  {"header", "u64 n, f64 h, u64 steps, u64 paths"},
                  {"layout", "[path][component][k]"}};
  out.artifacts.push_back({"trajectory.json", sidecar.dump(2) + "\n", true});
  if (tr.paths * (tr.steps + 1) <= 1'000'000) {
    std::ostringstream csv;
    sde::write_trajectory_csv(csv, tr);
    out.artifacts.push_back({"trajectory.csv", csv.str(), false});
  }
  return out;
}

Outcome cmd_hitprob(Context& ctx) {
  const auto field = model(ctx);
  const HyperCube q = geometry_cube(ctx);
  need_dim(q.dim(), field.dim(), "geometry");
  auto gamma = maybe_gamma(ctx, q);
  const json& ex = section(ctx.cfg, "experiment");
  const auto cfg = sim_config(ctx, ex);
  cfg.validate(field);
  const bool uniform = flag(ex, "uniform");
  const bool has_threshold = ex.contains("threshold");
  const double threshold = has_threshold ? num(ex, "threshold") : 0.0;
  std::vector<std::vector<double>> starts;
  double t0 = q.t0();
  if (uniform) {
    if (ex.contains("starts")) {
      starts = points(ex, "starts");
    } else {
      const geometry::AnisoCube inner(q.cube().center(), q.rho() / 6.0);
      starts = est::start_grid(inner, static_cast<int>(count(ex, "per_axis", 3)));
    }
    const geometry::AnisoCube inner(q.cube().center(), q.rho() / 6.0);
    for (std::size_t k = 0; k < starts.size(); ++k) {
      need_dim(starts[k].size(), q.dim(), "experiment.starts[" + std::to_string(k) + "]");
      if (!geometry::cube_contains_x(inner, starts[k])) {
        ctx.diagnostics.push_back("start " + std::to_string(k) + " " + fmt_point(starts[k]) +
                                  " is outside K(x0, rho/6)");
      }
    }
  } else {
    starts.push_back(vec(ex, "start"));
    t0 = num(ex, "start_time", q.t0());
    check_start(ctx, q, t0, starts[0], "experiment.start");
  }
  const bool cond = flag(ex, "condition_check");
  if (ctx.dry || !ctx.diagnostics.empty()) return {};

  Outcome out;
  const GridSet* g = gamma ? &*gamma : nullptr;
  std::ostringstream plot;
  plot << "start_index probability\n";
  if (uniform) {
    const auto rep = est::est_uniform_hit(cfg, field, q, g, starts);
    out.report = io::to_json(rep);
    out.artifacts.push_back({"hitprob.csv", io::uniform_hit_csv(rep), false});
    for (std::size_t k = 0; k < rep.per_start.size(); ++k) plot << k << ' ' << csv_number(rep.per_start[k].estimate) << '\n';
    if (has_threshold) out.passed = rep.min_lower > threshold;
  } else {
    const auto rep = est::est_hit_prob(cfg, field, q, g, t0, starts[0]);
    out.report = io::to_json(rep);
    std::ostringstream csv;
    csv << "start,estimate,ci_low,ci_high\n\"" << fmt_point(starts[0]) << "\"," << csv_number(rep.estimate) << ','
        << csv_number(rep.ci_low) << ',' << csv_number(rep.ci_high) << '\n';
    out.artifacts.push_back({"hitprob.csv", csv.str(), false});
    plot << 0 << ' ' << csv_number(rep.estimate) << '\n';
    if (has_threshold) out.passed = rep.ci_low > threshold;
  }
  out.artifacts.push_back({"hitprob_plot.dat", plot.str(), false});
  if (cond) {
    const auto c = coeffs::check_condition_cprime(field, q.cube(), static_cast<int>(count(ex, "grid_density", 32)));
    out.report["condition_cprime"] = io::to_json(c);
    out.passed = out.passed && c.passed;
  }
  return out;
}

Outcome cmd_smallcube(Context& ctx) {
  const auto field = model(ctx);
  const json& ex = section(ctx.cfg, "experiment");
  const auto cfg = sim_config(ctx, ex);
  cfg.validate(field);
  est::SmallCubeSpec spec;
  spec.x0 = geometry::SqrtPoint(vec(ex, "x0_sqrt"));
  spec.x = geometry::SqrtPoint(vec(ex, "x_sqrt"));
  spec.l = num(ex, "l");
  spec.c = num(ex, "c", 1.0);
  spec.beta = num(ex, "beta", 2.0);
  spec.r = num(ex, "r", 0.5);
  spec.eps = num(ex, "eps", 0.1);
  spec.alpha = num(ex, "alpha", 1.0);
  spec.t = num(ex, "t");
  spec.y = vec(ex, "y");
  need_dim(spec.x0.dim(), field.dim(), "experiment.x0_sqrt");
  need_dim(spec.x.dim(), field.dim(), "experiment.x_sqrt");
  need_dim(spec.y.size(), field.dim(), "experiment.y");
  try {
    est::small_cube_variant(spec);
  } catch (const PreconditionError& e) {
    ctx.diagnostics.push_back(e.what());
  }
  const double threshold = num(ex, "threshold", 0.0);
  if (ctx.dry || !ctx.diagnostics.empty()) return {};
  const auto rep = est::est_small_cube(cfg, field, spec);
  Outcome out;
  out.report = io::to_json(rep);
  out.passed = rep.estimate > threshold;
  return out;
}

Outcome cmd_czd(Context& ctx) {
  const HyperCube q = geometry_cube(ctx);
  if (!geometry::is_regular(q)) ctx.diagnostics.push_back("geometry is not a regular hypercube");
  auto gamma = maybe_gamma(ctx, q);
  if (!gamma) throw InvalidArgument("czd needs a 'gamma' object");
  const json& ex = optional_section(ctx.cfg, "experiment");
  const double mu = num(ex, "mu", 0.5);
  if (!(mu > 0.0 && mu < 1.0)) throw InvalidArgument("'mu' must be in (0, 1)");
  const bool has_mu_prime = ex.contains("mu_prime");
  const double mu_prime = has_mu_prime ? num(ex, "mu_prime") : 0.0;
  if (has_mu_prime && !(mu_prime > 0.0 && mu_prime < mu)) throw InvalidArgument("'mu_prime' must be in (0, mu)");
  const double eta = num(ex, "eta", czd::dichotomy_eta(mu));
  if (!(eta > 0.0)) throw InvalidArgument("'eta' must be positive");
  const int max_level = ex.contains("max_level") ? static_cast<int>(count(ex, "max_level")) : -1;
  if (ctx.dry || !ctx.diagnostics.empty()) return {};

  Outcome out;
  const auto dec = czd::cz_decompose(q, *gamma, mu, max_level);
  out.report["decomposition"] = io::to_json(dec);
  const double qm = geometry::hypercube_measure(q);
  if (dec.gamma_measure <= mu * qm) {
    const auto a = czd::verify_a(*gamma, q, mu, max_level);
    out.report["verify_a"] = io::to_json(a);
    out.passed = out.passed && a.holds;
  } else {
    out.report["verify_a"] = {{"skipped", "|Gamma| > mu |Q|"}};
  }
  const auto b = czd::verify_b(dec.stopped, q, eta, gamma->space_resolution());
  out.report["verify_b"] = io::to_json(b);
  out.passed = out.passed && b.holds;
  if (has_mu_prime) {
    if (dec.gamma_measure >= mu_prime * qm) {
      const auto d = czd::dichotomy(*gamma, q, mu_prime, mu, max_level);
      out.report["dichotomy"] = io::to_json(d);
      out.passed = out.passed && d.certified;
    } else {
      out.report["dichotomy"] = {{"skipped", "|Gamma| < mu' |Q|"}};
    }
  }
  out.report["gamma"] = io::to_json(*gamma);
  return out;
}

est::SpaceTimeFn boundary_fn(const json& g) {
  const std::string kind = text(g, "kind", "sqrt");
  if (kind == "sqrt") {
    return [](double, std::span<const double> x) { return std::sqrt(x[0]); };
  }
  if (kind == "constant") {
    const double v = num(g, "value", 1.0);
    return [v](double, std::span<const double>) { return v; };
  }
  if (kind == "linear") {
    return [](double, std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v;
      return s;
    };
  }
  throw InvalidArgument("boundary data kind must be sqrt, constant or linear");
}

Outcome cmd_holder(Context& ctx) {
  const auto field = model(ctx);
  const HyperCube base = geometry_cube(ctx);
  need_dim(base.dim(), field.dim(), "geometry");
  const json& ex = section(ctx.cfg, "experiment");
  const auto cfg = sim_config(ctx, ex);
  cfg.validate(field);
  const auto scales = vec(ex, "scales", std::vector<double>{base.rho(), base.rho() / 2, base.rho() / 4});
  const std::string anchor_s = text(ex, "anchor", "end");
  if (anchor_s != "end" && anchor_s != "start") throw InvalidArgument("'anchor' must be start or end");
  const auto anchor = anchor_s == "end" ? est::Anchor::End : est::Anchor::Start;
  const int per_axis = static_cast<int>(count(ex, "per_axis", 5));
  const auto g = boundary_fn(ex.contains("g") ? ex.at("g") : json::object());
  const double f_value = num(ex, "f", 0.0);
  est::SpaceTimeFn f;
  if (f_value != 0.0) f = [f_value](double, std::span<const double>) { return f_value; };
  const std::size_t sweep = count(ex, "sweep_points", 6);
  for (std::size_t k = 0; k < scales.size(); ++k) {
    if (!(scales[k] > 0.0 && scales[k] <= base.rho()) || (k > 0 && !(scales[k] < scales[k - 1]))) {
      ctx.diagnostics.push_back("scales must decrease within (0, rho]");
      break;
    }
  }
  if (scales.size() < 2) ctx.diagnostics.push_back("need at least two scales");
  if (ctx.dry || !ctx.diagnostics.empty()) return {};

  Outcome out;
  const auto osc = est::est_osc_decay(cfg, field, base, scales, g, f, anchor, per_axis);
  out.report["oscillation"] = io::to_json(osc);

  // Sweep along axis 0 from the lower corner at the base start time.
  std::vector<est::HolderPair> pairs;
  const double t = base.t0();
  std::vector<double> corner(base.dim());
  for (std::size_t i = 0; i < base.dim(); ++i) {
    const auto sp = base.cube().span(i);
    corner[i] = i == 0 ? sp.lo * sp.lo : base.cube().center()[i] * base.cube().center()[i];
  }
  sde::SimConfig run = cfg;
  run.seed = rng::splitmix64(cfg.seed ^ 0x5EEDull);
  const auto u0 = est::feynman_kac_eval(run, field, base, g, f, t, corner);
  double noise = u0.std_error;
  json sweep_rows = json::array();
  const auto span0 = base.cube().span(0);
  for (std::size_t k = 1; k <= sweep; ++k) {
    const double s = span0.lo + (span0.hi - span0.lo) * std::ldexp(1.0, -static_cast<int>(k));
    std::vector<double> x = corner;
    x[0] = s * s;
    run.seed = rng::splitmix64(cfg.seed + k);
    const auto u = est::feynman_kac_eval(run, field, base, g, f, t, x);
    noise = std::max(noise, u.std_error);
    std::vector<double> s1(base.dim()), s2(base.dim());
    for (std::size_t i = 0; i < base.dim(); ++i) {
      s1[i] = std::sqrt(corner[i]);
      s2[i] = std::sqrt(x[i]);
    }
    pairs.push_back({t, s1, u0.estimate, t, s2, u.estimate});
    sweep_rows.push_back({{"x", x}, {"u", u.estimate}, {"std_error", u.std_error}});
  }
  out.report["sweep"] = sweep_rows;
  try {
    out.report["holder_fit"] = io::to_json(est::fit_holder(pairs, 2.0 * noise));
  } catch (const InsufficientData& e) {
    out.report["holder_fit"] = {{"insufficient_data", e.what()}};
  }
  bool decreasing = true;
  for (std::size_t k = 1; k < osc.osc.size(); ++k) decreasing = decreasing && osc.osc[k] < osc.osc[k - 1];
  out.report["strictly_decreasing"] = decreasing;
  out.passed = !osc.inconclusive && decreasing && osc.alpha_hat > 0.0 && osc.alpha_hat < 1.0 && osc.r2 > 0.9;

  std::ostringstream plot;
  plot << "rho osc\n";
  for (std::size_t k = 0; k < osc.scales.size(); ++k) plot << csv_number(osc.scales[k]) << ' ' << csv_number(osc.osc[k]) << '\n';
  out.artifacts.push_back({"holder_plot.dat", plot.str(), false});
  std::ostringstream csv;
  csv << "rho,osc,noise\n";
  for (std::size_t k = 0; k < osc.scales.size(); ++k) {
    csv << csv_number(osc.scales[k]) << ',' << csv_number(osc.osc[k]) << ',' << csv_number(osc.noise[k]) << '\n';
  }
  out.artifacts.push_back({"holder.csv", csv.str(), false});
  return out;
}

coeffs::SmoothProbe probe_from(const std::string& kind, std::size_t n) {
  coeffs::SmoothProbe p;
  if (kind == "square") {
    p.u = [](double, std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v * v;
      return s;
    };
    p.grad = [](double, std::span<const double> x) {
      coeffs::Vector g(static_cast<Eigen::Index>(x.size()));
      for (std::size_t i = 0; i < x.size(); ++i) g(static_cast<Eigen::Index>(i)) = 2.0 * x[i];
      return g;
    };
    p.hessian = [n](double, std::span<const double>) {
      return coeffs::Matrix(2.0 * coeffs::Matrix::Identity(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    };
  } else if (kind == "linear") {
    p.u = [](double, std::span<const double> x) {
      double s = 0.0;
      for (double v : x) s += v;
      return s;
    };
    p.grad = [n](double, std::span<const double>) {
      return coeffs::Vector(coeffs::Vector::Ones(static_cast<Eigen::Index>(n)));
    };
    p.hessian = [n](double, std::span<const double>) {
      return coeffs::Matrix(coeffs::Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n)));
    };
  } else {
    throw InvalidArgument("probe must be square or linear");
  }
  p.du_dt = [](double, std::span<const double>) { return 0.0; };
  return p;
}

Outcome cmd_martingale(Context& ctx) {
  const auto field = model(ctx);
  const HyperCube q = geometry_cube(ctx);
  need_dim(q.dim(), field.dim(), "geometry");
  const json& ex = section(ctx.cfg, "experiment");
  const auto cfg = sim_config(ctx, ex);
  cfg.validate(field);
  const auto start = vec(ex, "start");
  const double t0 = num(ex, "start_time", q.t0());
  check_start(ctx, q, t0, start, "experiment.start");
  const auto checkpoints = vec(ex, "checkpoints");
  for (std::size_t k = 0; k < checkpoints.size(); ++k) {
    if (!(checkpoints[k] > 0.0) || (k > 0 && !(checkpoints[k] > checkpoints[k - 1]))) {
      ctx.diagnostics.push_back("checkpoints must be positive and increasing");
      break;
    }
  }
  if (checkpoints.empty()) ctx.diagnostics.push_back("need at least one checkpoint");
  const auto probe = probe_from(text(ex, "probe", "square"), field.dim());
  const bool negative = flag(ex, "negative_control");
  if (ctx.dry || !ctx.diagnostics.empty()) return {};
  std::optional<est::SpaceTimeFn> f_override;
  if (negative) f_override = est::SpaceTimeFn{};
  const auto rep = est::martingale_check(cfg, field, probe, q, t0, start, checkpoints, f_override);
  Outcome out;
  out.report = io::to_json(rep);
  out.report["negative_control"] = negative;
  out.passed = rep.passed;
  return out;
}

Outcome cmd_invariant(Context& ctx) {
  const auto field = model(ctx);
  const json& ex = section(ctx.cfg, "experiment");
  est::InvariantConfig ic;
  ic.burn_in = num(ex, "burn_in", 50.0);
  ic.horizon = num(ex, "horizon", 5000.0);
  ic.thinning = num(ex, "thinning", 1.0);
  ic.paths_per_start = count(ex, "paths_per_start", 64);
  ic.h = num(ex, "h", 1e-2);
  ic.scheme = sde::scheme_from_string(text(ex, "scheme", field.cir_params() ? "exact-cir" : "full-truncation-euler"));
  ic.seed = ctx.seed;
  ic.workers = ctx.workers;
  const auto starts = points(ex, "starts");
  for (std::size_t k = 0; k < starts.size(); ++k) need_dim(starts[k].size(), field.dim(), "experiment.starts");
  if (starts.empty()) throw InvalidArgument("need at least one start");
  if (ic.scheme == sde::Scheme::ExactCir && !field.cir_params()) {
    throw InvalidArgument("exact-cir scheme requires a cir model");
  }
  if (!(ic.horizon - ic.burn_in >= ic.thinning) || !(ic.thinning > 0.0) || ic.paths_per_start == 0) {
    ctx.diagnostics.push_back("horizon leaves no samples after burn-in");
  }
  double top = 1.0;
  for (const auto& s : starts) {
    for (double v : s) top = std::max(top, v);
  }
  const auto grid = coeffs::box_grid(std::vector<double>(field.dim(), 0.0), std::vector<double>(field.dim(), 2.0 * top), 9);
  const auto cond = coeffs::check_inv_conditions(field, grid);
  for (const auto& c : cond.clauses) {
    if (!c.passed) {
      ctx.diagnostics.push_back("model violates the invariant-measure condition '" + c.name + "' (margin " +
                                std::to_string(c.worst_margin) + " at x=" + fmt_point(c.worst_point) + ")");
    }
  }
  const json& tail = optional_section(ex, "tail");
  std::optional<sde::SimConfig> tail_cfg;
  if (!tail.empty()) {
    tail_cfg = sim_config(ctx, tail, 1e-2);
    if (!tail.contains("scheme") && field.cir_params()) tail_cfg->scheme = sde::Scheme::ExactCir;
    if (tail_cfg->scheme == sde::Scheme::ExactCir && !field.cir_params()) {
      throw InvalidArgument("exact-cir scheme requires a cir model");
    }
    need_dim(vec(tail, "start").size(), field.dim(), "experiment.tail.start");
    vec(tail, "times");
    num(tail, "level");
    num(tail, "eps");
  }
  if (ctx.dry || !ctx.diagnostics.empty()) return {};

  Outcome out;
  const auto rep = est::est_invariant(field, ic, starts, nullptr, &grid);
  out.report["invariant"] = io::to_json(rep);
  json checks = json::object();
  if (ex.contains("w1_tol")) {
    const bool ok = rep.max_w1 < num(ex, "w1_tol");
    checks["w1"] = ok;
    out.passed = out.passed && ok;
  }
  if (ex.contains("mean_target")) {
    const auto target = vec(ex, "mean_target");
    need_dim(target.size(), field.dim(), "experiment.mean_target");
    bool ok = true;
    for (const auto& s : rep.per_start) {
      for (std::size_t i = 0; i < target.size(); ++i) ok = ok && std::abs(s.mean[i] - target[i]) <= 3.0 * s.mean_se[i];
    }
    checks["mean"] = ok;
    out.passed = out.passed && ok;
  }
  if (ex.contains("variance_target")) {
    const auto target = vec(ex, "variance_target");
    need_dim(target.size(), field.dim(), "experiment.variance_target");
    const double tol = num(ex, "variance_rel_tol", 0.1);
    bool ok = true;
    for (const auto& s : rep.per_start) {
      for (std::size_t i = 0; i < target.size(); ++i) ok = ok && std::abs(s.variance[i] - target[i]) <= tol * target[i];
    }
    checks["variance"] = ok;
    out.passed = out.passed && ok;
  }
  if (tail_cfg) {
    const auto times = vec(tail, "times");
    const auto tr = est::tail_check(*tail_cfg, field, vec(tail, "start"), num(tail, "level"), times, num(tail, "eps"));
    out.report["tail"] = io::to_json(tr);
    checks["tail"] = tr.passed;
    out.passed = out.passed && tr.passed;
    std::ostringstream csv;
    csv << "t,p_hat,ci_low,ci_high\n";
    for (std::size_t k = 0; k < tr.times.size(); ++k) {
      csv << csv_number(tr.times[k]) << ',' << csv_number(tr.exceed[k].estimate) << ','
          << csv_number(tr.exceed[k].ci_low) << ',' << csv_number(tr.exceed[k].ci_high) << '\n';
    }
    out.artifacts.push_back({"tail.csv", csv.str(), false});
  }
  out.report["checks"] = checks;
  return out;
}

Outcome cmd_rescale(Context& ctx) {
  const auto field = model(ctx);
  if (!field.is_constant()) throw InvalidArgument("rescale-check needs a constant model");
  const json& ex = section(ctx.cfg, "experiment");
  auto cfg = sim_config(ctx, ex);
  const double rho2 = num(ex, "rho2", 4.0);
  if (!(rho2 > 0.0)) throw InvalidArgument("'rho2' must be positive");
  const double t = num(ex, "t", 1.0);
  if (!(t > 0.0)) throw InvalidArgument("'t' must be positive");
  cfg.horizon = t;
  cfg.validate(field);
  const auto start = vec(ex, "start");
  need_dim(start.size(), field.dim(), "experiment.start");
  for (double v : start) {
    if (!(v >= 0.0)) ctx.diagnostics.push_back("experiment.start is outside the orthant");
  }
  if (ctx.dry || !ctx.diagnostics.empty()) return {};
  const auto [a, b] = sde::rescaled_pair(cfg, field, rho2, t, start);
  double ks = 0.0;
  for (std::size_t i = 0; i < field.dim(); ++i) ks = std::max(ks, stats::ks_statistic(a.component(i), b.component(i)));
  const double crit = stats::ks_critical_95(a.size(), b.size());
  Outcome out;
  out.report = {{"rho2", rho2},
                {"t", t},
                {"paths", cfg.path_count},
                {"ks", ks},
                {"critical_95", crit},
                {"mean_direct", stats::mean(a.component(0))},
                {"mean_rescaled", stats::mean(b.component(0))}};
  out.passed = ks < crit;
  return out;
}

Outcome dispatch(const std::string& command, Context& ctx) {
  if (command == "simulate") return cmd_simulate(ctx);
  if (command == "hitprob") return cmd_hitprob(ctx);
  if (command == "smallcube") return cmd_smallcube(ctx);
  if (command == "czd") return cmd_czd(ctx);
  if (command == "holder") return cmd_holder(ctx);
  if (command == "martingale") return cmd_martingale(ctx);
  if (command == "invariant") return cmd_invariant(ctx);
  if (command == "rescale-check") return cmd_rescale(ctx);
  throw InvalidArgument("unknown command '" + command + "'");
}

Context make_context(const json& config, const Overrides& ov, bool dry) {
  if (!config.is_object()) throw InvalidArgument("config must be a JSON object");
  Context ctx;
  ctx.cfg = config;
  ctx.dry = dry;
  ctx.seed = config.contains("seed") ? count(config, "seed") : 0;
  ctx.workers = config.contains("workers") ? static_cast<unsigned>(count(config, "workers")) : 1;
  if (const char* env = std::getenv("SQDIFF_WORKERS"); env && *env) {
    try {
      ctx.workers = static_cast<unsigned>(std::stoul(env));
    } catch (const std::exception&) {
      throw InvalidArgument("SQDIFF_WORKERS must be a positive integer");
    }
  }
  if (ov.seed) ctx.seed = *ov.seed;
  if (ov.workers) ctx.workers = *ov.workers;
  if (ctx.workers == 0) throw InvalidArgument("worker count must be positive");
  ctx.cfg["seed"] = ctx.seed;
  return ctx;
}

}  // namespace

std::vector<std::string> validate(const std::string& command, const json& config) {
  try {
    Context ctx = make_context(config, {}, true);
    if (ctx.cfg.contains("command") && text(ctx.cfg, "command", "") != command) {
      return {"config names command '" + text(ctx.cfg, "command", "") + "' but '" + command + "' was requested"};
    }
    dispatch(command, ctx);
    return ctx.diagnostics;
  } catch (const std::exception& e) {
    return {e.what()};
  }
}

std::string config_digest(const json& config) { return stats::digest(digest_view(config).dump()); }

RunResult run(const std::string& command, const json& config, const Overrides& overrides) {
  RunResult result;
  Context ctx;
  try {
    ctx = make_context(config, overrides, false);
    if (ctx.cfg.contains("command") && text(ctx.cfg, "command", "") != command) {
      throw InvalidArgument("config names command '" + text(ctx.cfg, "command", "") + "' but '" + command +
                            "' was requested");
    }
    Outcome out = dispatch(command, ctx);
    if (!ctx.diagnostics.empty()) {
      result.exit_code = kUsage;
      result.diagnostics = ctx.diagnostics;
      return result;
    }
    result.exit_code = out.passed ? kPass : kFail;
    result.artifacts = std::move(out.artifacts);
    result.document = {{"schema_version", io::kSchemaVersion},
                       {"command", command},
                       {"config_digest", config_digest(ctx.cfg)},
                       {"seed", ctx.seed},
                       {"passed", out.passed},
                       {"report", std::move(out.report)},
                       {"timestamp", timestamp()}};
  } catch (const std::exception& e) {
    result.exit_code = kUsage;
    result.diagnostics = {e.what()};
  }
  return result;
}

std::string stable_dump(const json& doc) {
  json copy = doc;
  if (copy.is_object()) copy.erase("timestamp");
  return copy.dump();
}

void emit(const std::string& command, const RunResult& result, const std::string& dir,
          const std::vector<std::string>& formats) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory '" + dir + "': " + ec.message());
  auto write = [&](const std::string& name, const std::string& content, bool binary) {
    const fs::path p = fs::path(dir) / name;
    std::ofstream os(p, binary ? std::ios::binary : std::ios::out);
    os << content;
    if (!os) throw std::runtime_error("cannot write '" + p.string() + "'");
  };
  auto wants = [&](const std::string& f) { return std::find(formats.begin(), formats.end(), f) != formats.end(); };
  write(command + ".json", result.document.dump(2) + "\n", false);
  for (const auto& a : result.artifacts) {
    if (a.binary || wants("csv")) write(a.name, a.content, a.binary);
  }
}

int main_entry(int argc, char** argv) {
  CLI::App app{"Simulation and verification runner for square-root diffusions"};
  app.require_subcommand(1);
  std::string config_path;
  std::uint64_t seed = 0;
  unsigned workers = 0;
  std::string out_dir;
  std::string format = "json";
  std::string validate_command;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", config_path, "experiment config (JSON)")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--workers", workers, "worker threads")->check(CLI::PositiveNumber);
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--format", format, "comma-separated output formats: json,csv");
  };
  for (const auto& c : kCommands) add_common(app.add_subcommand(c, "run the " + c + " experiment"));
  auto* val = app.add_subcommand("validate", "check a config without running it");
  val->add_option("--config", config_path, "experiment config (JSON)")->required();
  val->add_option("--command", validate_command, "experiment the config is for (default: config.command)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kUsage;
  }

  json config;
  {
    std::ifstream is(config_path);
    if (!is) {
      std::cerr << "error: cannot read config '" << config_path << "'\n";
      return kUsage;
    }
    try {
      config = json::parse(is);
    } catch (const json::parse_error& e) {
      std::cerr << "error: config is not valid JSON: " << e.what() << '\n';
      return kUsage;
    }
  }

  auto* chosen = app.get_subcommands().front();
  if (chosen->get_name() == "validate") {
    std::string command = validate_command;
    if (command.empty() && config.is_object() && config.contains("command") && config["command"].is_string()) {
      command = config["command"].get<std::string>();
    }
    if (command.empty()) {
      std::cerr << "error: name the experiment with --command or a 'command' field\n";
      return kUsage;
    }
    const auto diags = validate(command, config);
    json out = {{"command", command}, {"valid", diags.empty()}, {"diagnostics", diags}};
    std::cout << out.dump(2) << '\n';
    return diags.empty() ? kPass : kUsage;
  }

  const std::string command = chosen->get_name();
  Overrides ov;
  if (chosen->count("--seed")) ov.seed = seed;
  if (chosen->count("--workers")) ov.workers = workers;
  const auto result = run(command, config, ov);
  if (result.exit_code == kUsage) {
    for (const auto& d : result.diagnostics) std::cerr << "error: " << d << '\n';
    return kUsage;
  }

  std::string dir = ".";
  if (config.contains("output") && config["output"].is_object() && config["output"].contains("dir") &&
      config["output"]["dir"].is_string()) {
    dir = config["output"]["dir"].get<std::string>();
  }
  if (const char* env = std::getenv("SQDIFF_OUT_DIR"); env && *env) dir = env;
  if (chosen->count("--out")) dir = out_dir;
  std::vector<std::string> formats;
  std::stringstream fs(format);
  for (std::string f; std::getline(fs, f, ',');) {
    if (f != "json" && f != "csv") {
      std::cerr << "error: unknown format '" << f << "'\n";
      return kUsage;
    }
    formats.push_back(f);
  }
  try {
    emit(command, result, dir, formats);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kUsage;
  }
  std::cout << result.document.dump(2) << '\n';
  return result.exit_code;
}

}  // namespace sqdiff::cli
