// Acceptance suite: one PASS/FAIL line per criterion. Pass criterion numbers
// as arguments to run a subset.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <thread>

#include "sqdiff/czdecomp.hpp"
#include "sqdiff/sde.hpp"
#include "sqdiff/stats.hpp"
#include "sqdiff_cli/app.hpp"

using namespace sqdiff;
using cli::json;
using geometry::AnisoCube;
using geometry::HyperCube;
using geometry::SqrtPoint;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

unsigned default_workers() { return std::max(1u, std::min(8u, std::thread::hardware_concurrency())); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- configs shared with the determinism criterion -----------------------

json config_c1() {
  return json::parse(R"({
    "command": "simulate", "seed": 101,
    "model": {"kind": "constant", "a": 1, "b": [0.5], "lambda": 2},
    "experiment": {"start": [1.0], "t": 0.5, "h": 1e-3, "paths": 100000, "mean_target": [1.25]}
  })");
}

json config_c4() {
  return json::parse(R"({
    "command": "hitprob", "seed": 404,
    "model": {"kind": "constant", "a": 1, "b": [1, 1], "lambda": 2},
    "geometry": {"centers_sqrt": [0, 0], "rho": 1, "theta": 0.9722222222222222},
    "gamma": {"kind": "time_slab", "from_cell": 13, "resolution": [27, 27]},
    "experiment": {"uniform": true, "per_axis": 3, "paths": 10000, "h": 1e-3,
                   "threshold": 0.01, "condition_check": true}
  })");
}

json config_c10() {
  json times = json::array();
  for (int k = 0; k < 10; ++k) times.push_back(1.0 + 11.0 * k);
  json cfg = json::parse(R"({
    "command": "invariant", "seed": 1010,
    "model": {"kind": "cir", "kappa": [1], "m": [1], "sigma2": [1], "lambda": 1},
    "experiment": {"starts": [[0.01], [10]], "burn_in": 50, "horizon": 5000, "scheme": "exact-cir",
                   "w1_tol": 0.05, "mean_target": [1.0], "variance_target": [0.5], "variance_rel_tol": 0.1,
                   "tail": {"start": [1.0], "level": 6, "eps": 3e-4, "paths": 100000, "h": 0.01}}
  })");
  cfg["experiment"]["tail"]["times"] = times;
  return cfg;
}

cli::RunResult run_cli(const json& cfg, unsigned workers) {
  cli::Overrides ov;
  ov.workers = workers;
  return cli::run(cfg["command"].get<std::string>(), cfg, ov);
}

std::map<int, cli::RunResult> cached;

const cli::RunResult& cached_run(int id, const json& cfg) {
  auto it = cached.find(id);
  if (it == cached.end()) it = cached.emplace(id, run_cli(cfg, default_workers())).first;
  return it->second;
}

// ---- criteria ----------------------------------------------------------

Verdict c1() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& r = cached_run(1, config_c1());
  const double secs = seconds_since(t0);
  if (r.exit_code == cli::kUsage) return {false, "run failed: " + r.diagnostics.front()};
  const auto& c = r.document["report"]["components"][0];
  const double m = c["mean"], se = c["std_error"];
  const bool ok = std::abs(m - 1.25) <= 3.0 * se && secs < 60.0;
  return {ok, fmt("mean %.5f, |mean-1.25|/SE = %.2f, %.1f s", m, std::abs(m - 1.25) / se, secs)};
}

Verdict c2() {
  const double kappa = 1.0, m = 0.5, sigma2 = 1.0, x = 1.0, t = std::log(2.0);
  // Closed form written out independently of cir_moments.
  const double e = std::exp(-kappa * t);
  const double mean = m + (x - m) * e;
  const double var = x * sigma2 / kappa * (e - e * e) + m * sigma2 / (2 * kappa) * (1 - e) * (1 - e);
  const auto lib = sde::cir_moments(x, kappa, m, sigma2, t);
  const auto field = coeffs::CoefficientField::cir({{kappa}, {m}, {sigma2}}, 2.0);
  sde::SimConfig cfg;
  cfg.scheme = sde::Scheme::ExactCir;
  cfg.h = t;
  cfg.seed = 202;
  cfg.path_count = 1'000'000;
  cfg.workers = default_workers();
  const std::vector<double> start{x};
  const auto s = sde::sample_marginal(cfg, field, t, start).component(0);
  const double em = stats::mean(s), se = stats::std_error(s), ev = stats::variance(s);
  const bool ok = std::abs(em - 0.75) <= 3 * se && std::abs(ev - var) <= 0.05 * var &&
                  std::abs(lib.variance - var) < 1e-12 && std::abs(mean - 0.75) < 1e-12;
  return {ok, fmt("mean %.5f (%.2f SE), variance %.5f vs %.5f (%.2f%%)", em, std::abs(em - 0.75) / se, ev, var,
                  100 * std::abs(ev - var) / var)};
}

Verdict c3() {
  const auto field = coeffs::CoefficientField::cir({{1.0}, {0.5}, {1.0}}, 2.0);
  const std::vector<double> start{1.0};
  sde::SimConfig exact;
  exact.scheme = sde::Scheme::ExactCir;
  exact.h = 1.0;
  exact.seed = 303;
  exact.path_count = 100'000;
  exact.workers = default_workers();
  const auto ref = sde::sample_marginal(exact, field, 1.0, start).component(0);
  std::vector<double> ks;
  for (double h : {1e-2, 1e-3, 1e-4}) {
    sde::SimConfig euler = exact;
    euler.scheme = sde::Scheme::FullTruncationEuler;
    euler.h = h;
    euler.seed = 304;
    ks.push_back(stats::ks_statistic(ref, sde::sample_marginal(euler, field, 1.0, start).component(0)));
  }
  const double noise = stats::ks_critical_95(100'000, 100'000);
  bool ok = ks[2] < 0.02;
  for (std::size_t k = 1; k < ks.size(); ++k) ok = ok && ks[k] <= ks[k - 1] + noise;
  return {ok, fmt("KS %.4f, %.4f, %.4f for h = 1e-2, 1e-3, 1e-4 (noise band %.4f)", ks[0], ks[1], ks[2], noise)};
}

Verdict c4() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto& r = cached_run(4, config_c4());
  const double secs = seconds_since(t0);
  if (r.exit_code == cli::kUsage) return {false, "run failed: " + r.diagnostics.front()};
  const auto& rep = r.document["report"];
  bool all_positive = rep["per_start"].size() == 9;
  for (const auto& s : rep["per_start"]) all_positive = all_positive && s["ci_low"].get<double>() > 0.0;
  bool has_origin = false;
  for (const auto& s : rep["per_start"]) has_origin = has_origin || (s["start"][0] == 0.0 && s["start"][1] == 0.0);
  const bool cond = rep["condition_cprime"]["passed"];
  // occupancy of the time slab, recomputed from the cell layout
  const HyperCube q(0.0, 35.0 / 36.0, AnisoCube(SqrtPoint({0.0, 0.0}), 1.0));
  czd::GridSet g(q, 27, 27);
  for (std::size_t c = 0; c < g.cell_count(); ++c) g.set(c, g.multi_index(c)[0] >= 13);
  const double occ = g.measure() / geometry::hypercube_measure(q);
  const double min_lower = rep["min_lower"];
  const bool ok = r.exit_code == cli::kPass && all_positive && has_origin && cond && occ >= 17.0 / 35.0 &&
                  min_lower > 0.01 && secs < 600.0;
  return {ok, fmt("min Wilson lower %.4f, occupancy %.4f >= %.4f, C' %s, %.1f s", min_lower, occ, 17.0 / 35.0,
                  cond ? "passes" : "fails", secs)};
}

Verdict c5() {
  const json cfg = json::parse(R"({
    "command": "rescale-check", "seed": 505,
    "model": {"kind": "constant", "a": 1, "b": [0.5], "lambda": 2},
    "experiment": {"start": [1.0], "t": 1.0, "h": 1e-3, "rho2": 4, "paths": 100000}
  })");
  const auto r = run_cli(cfg, default_workers());
  if (r.exit_code == cli::kUsage) return {false, "run failed: " + r.diagnostics.front()};
  const auto& rep = r.document["report"];
  const double ks = rep["ks"], crit = rep["critical_95"];
  return {r.exit_code == cli::kPass && ks < crit, fmt("KS %.4f < critical %.4f", ks, crit)};
}

czd::GridSet random_gamma(const HyperCube& q, std::mt19937_64& gen, double max_fill) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  czd::GridSet g(q, 27, 27);
  const double p = max_fill * u(gen);
  if (u(gen) < 0.5) {
    for (std::size_t k = 0; k < g.cell_count(); ++k) g.set(k, u(gen) < p);
    return g;
  }
  // a few random blocks of cells
  const int blocks = 1 + static_cast<int>(6 * u(gen));
  for (int b = 0; b < blocks; ++b) {
    std::vector<std::size_t> lo(q.dim() + 1), hi(q.dim() + 1);
    for (std::size_t a = 0; a <= q.dim(); ++a) {
      const auto n = g.axis_cells(a);
      lo[a] = static_cast<std::size_t>(u(gen) * static_cast<double>(n));
      hi[a] = std::min(n, lo[a] + 1 + static_cast<std::size_t>(u(gen) * static_cast<double>(n) / 2));
    }
    for (std::size_t k = 0; k < g.cell_count(); ++k) {
      const auto idx = g.multi_index(k);
      bool in = true;
      for (std::size_t a = 0; a <= q.dim(); ++a) in = in && idx[a] >= lo[a] && idx[a] < hi[a];
      if (in) g.set(k, true);
    }
  }
  return g;
}

HyperCube random_regular(std::mt19937_64& gen, std::size_t n) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double rho = 0.5 + u(gen);
  std::vector<double> s(n);
  for (auto& v : s) v = u(gen) < 0.5 ? 0.0 : rho * (1.0 + 2.0 * u(gen));
  return HyperCube(4.0 * u(gen), 0.5 + 0.5 * u(gen), AnisoCube(SqrtPoint(s), rho));
}

Verdict c6() {
  std::mt19937_64 gen(606);
  int holds = 0, cases = 0;
  while (cases < 100) {
    const HyperCube q = random_regular(gen, 1 + cases % 2);
    const auto g = random_gamma(q, gen, 0.9);
    if (g.measure() > 0.5 * geometry::hypercube_measure(q)) continue;
    ++cases;
    if (czd::verify_a(g, q, 0.5).holds) ++holds;
  }
  // additivity of |Q| and |Gamma cap Q| along random descents of 5 levels
  double worst = 0.0;
  for (int trial = 0; trial < 60; ++trial) {
    HyperCube node = random_regular(gen, 1 + trial % 2);
    const auto g = random_gamma(node, gen, 0.6);
    for (int level = 0; level < 5; ++level) {
      const auto kids = czd::subdivide(node);
      double sum = 0.0, gsum = 0.0;
      for (const auto& k : kids) {
        sum += geometry::hypercube_measure(k);
        gsum += g.measure_in(czd::to_box(k));
      }
      const double whole = geometry::hypercube_measure(node);
      worst = std::max(worst, std::abs(sum - whole) / whole);
      worst = std::max(worst, std::abs(gsum - g.measure_in(czd::to_box(node))) / whole);
      node = kids[static_cast<std::size_t>(gen() % kids.size())];
    }
  }
  return {holds == 100 && worst <= 1e-10, fmt("verify_a %d/100, worst additivity error %.2e", holds, worst)};
}

Verdict c7() {
  std::mt19937_64 gen(707);
  const double bound = (1.0 - std::sqrt(0.6)) * std::sqrt(0.3) / 4.0;
  int good = 0, cases = 0, b1 = 0, b2 = 0;
  while (cases < 50) {
    const HyperCube q = random_regular(gen, 1 + cases % 2);
    czd::GridSet g = random_gamma(q, gen, 1.0);
    if (g.measure() < 0.3 * geometry::hypercube_measure(q)) continue;
    ++cases;
    const auto r = czd::dichotomy(g, q, 0.3, 0.6);
    bool ok = r.certified && (r.branch == 1 || r.branch == 2);
    if (r.branch == 1) {
      ++b1;
      ok = ok && r.d2_in_q >= r.branch1_threshold && !r.witness;
    } else if (r.branch == 2) {
      ++b2;
      ok = ok && r.witness && r.witness->cube.rho() >= bound && r.witness->occupancy >= 0.6 &&
           geometry::is_regular(r.witness->cube) && geometry::hypercube_includes(q, r.witness->cube);
    }
    if (ok) ++good;
  }
  return {good == 50, fmt("%d/50 certified (branch 1: %d, branch 2: %d), rho bound %.4f", good, b1, b2, bound)};
}

Verdict c8() {
  const json cfg = json::parse(R"({
    "command": "holder", "seed": 808,
    "model": {"kind": "constant", "a": 1, "b": [1], "lambda": 2},
    "geometry": {"centers_sqrt": [0], "rho": 1},
    "experiment": {"h": 1e-3, "paths": 4000, "scales": [1, 0.5, 0.25], "g": {"kind": "sqrt"}, "f": 0}
  })");
  const auto r = run_cli(cfg, default_workers());
  if (r.exit_code == cli::kUsage) return {false, "run failed: " + r.diagnostics.front()};
  const auto& osc = r.document["report"]["oscillation"];
  const auto o = osc["osc"].get<std::vector<double>>();
  const double a = osc["alpha_hat"], r2 = osc["r2"];
  bool decreasing = true;
  for (std::size_t k = 1; k < o.size(); ++k) decreasing = decreasing && o[k] < o[k - 1];
  const bool ok = r.exit_code == cli::kPass && decreasing && a > 0.0 && a < 1.0 && r2 > 0.9 &&
                  !osc["inconclusive"].get<bool>();
  return {ok, fmt("osc %.4f, %.4f, %.4f; alpha %.3f, R2 %.3f", o[0], o[1], o[2], a, r2)};
}

Verdict c9() {
  json cfg = json::parse(R"({
    "command": "martingale", "seed": 909,
    "model": {"kind": "constant", "a": 1, "b": [1], "lambda": 2},
    "geometry": {"centers_sqrt": [2], "rho": 1},
    "experiment": {"h": 1e-3, "paths": 10000, "start": [4.0], "checkpoints": [0.25, 0.5, 0.75, 1.0],
                   "probe": "square"}
  })");
  const auto good = run_cli(cfg, default_workers());
  cfg["experiment"]["negative_control"] = true;
  const auto bad = run_cli(cfg, default_workers());
  if (good.exit_code == cli::kUsage || bad.exit_code == cli::kUsage) return {false, "run failed"};
  const double max_ratio = good.document["report"]["max_ratio"];
  const double neg = bad.document["report"]["final_ratio"];
  const bool ok = good.exit_code == cli::kPass && max_ratio < 4.0 && bad.exit_code == cli::kFail && neg > 10.0;
  return {ok, fmt("max deviation %.2f SE; negative control %.1f SE at the final checkpoint", max_ratio, neg)};
}

Verdict c10() {
  const auto& r = cached_run(10, config_c10());
  if (r.exit_code == cli::kUsage) return {false, "run failed: " + r.diagnostics.front()};
  const auto& rep = r.document["report"];
  const auto& checks = rep["checks"];
  std::string means;
  for (const auto& s : rep["invariant"]["per_start"]) {
    means += fmt("mean %.4f+-%.4f var %.4f; ", s["mean"][0].get<double>(), s["mean_se"][0].get<double>(),
                 s["variance"][0].get<double>());
  }
  const bool ok = r.exit_code == cli::kPass && checks["mean"] && checks["variance"] && checks["w1"] && checks["tail"];
  return {ok, means + fmt("W1 %.4f, sup tail %.2e", rep["invariant"]["max_w1"].get<double>(),
                          rep["tail"]["sup_p"].get<double>())};
}

Verdict c11() {
  std::string detail;
  bool ok = true;
  const std::pair<int, json> runs[] = {{1, config_c1()}, {4, config_c4()}, {10, config_c10()}};
  for (const auto& [id, cfg] : runs) {
    const auto a = run_cli(cfg, 1);
    const auto b = run_cli(cfg, 8);
    const bool same = a.exit_code != cli::kUsage && cli::stable_dump(a.document) == cli::stable_dump(b.document);
    ok = ok && same;
    if (!detail.empty()) detail += "; ";
    detail += fmt("criterion %d %s", id, same ? "identical" : "DIFFERS");
  }
  return {ok, detail + " (workers 1 vs 8)"};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::function<Verdict()>> criteria = {c1, c2, c3, c4, c5, c6, c7, c8, c9, c10, c11};
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t k = 0; k < criteria.size(); ++k) {
    const int id = static_cast<int>(k) + 1;
    if (!only.empty() && !only.count(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[k]();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s criterion %d: %s [%.1f s]\n", v.pass ? "PASS" : "FAIL", id, v.detail.c_str(), seconds_since(t0));
    std::fflush(stdout);
  }
  return failed == 0 ? 0 : 1;
}
