#include "sqdiff/serialize.hpp"

#include <sstream>

#include "sqdiff/errors.hpp"

namespace sqdiff::io {
namespace {

const json& field(const json& j, const char* key) {
  if (!j.is_object() || !j.contains(key)) throw InvalidArgument(std::string("missing field '") + key + "'");
  return j.at(key);
}

double number(const json& j, const char* key) {
  const json& v = field(j, key);
  if (!v.is_number()) throw InvalidArgument(std::string("field '") + key + "' must be a number");
  return v.get<double>();
}

std::vector<double> numbers(const json& j, const char* key) {
  const json& v = field(j, key);
  if (v.is_number()) return {v.get<double>()};
  if (!v.is_array()) throw InvalidArgument(std::string("field '") + key + "' must be an array of numbers");
  std::vector<double> out;
  for (const auto& e : v) {
    if (!e.is_number()) throw InvalidArgument(std::string("field '") + key + "' must hold numbers");
    out.push_back(e.get<double>());
  }
  return out;
}

coeffs::Vector to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const coeffs::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json clause_json(const coeffs::ClauseResult& c) {
  return {{"name", c.name},
          {"passed", c.passed},
          {"worst_margin", c.worst_margin},
          {"worst_point", c.worst_point},
          {"points_checked", c.points_checked}};
}

}  // namespace

json to_json(const geometry::HyperCube& q) {
  const auto c = q.cube().center().coords();
  return {{"t0", q.t0()},
          {"theta", q.theta()},
          {"centers_sqrt", std::vector<double>(c.begin(), c.end())},
          {"rho", q.rho()}};
}

geometry::HyperCube hypercube_from_json(const json& j) {
  const double theta = j.is_object() && j.contains("theta") ? number(j, "theta") : 1.0;
  const double t0 = j.is_object() && j.contains("t0") ? number(j, "t0") : 0.0;
  geometry::SqrtPoint center(numbers(j, "centers_sqrt"));
  return {t0, theta, geometry::AnisoCube(std::move(center), number(j, "rho"))};
}

json to_json(const czd::GridSet& g) {
  std::vector<std::size_t> runs;
  std::uint8_t current = 0;
  std::size_t len = 0;
  for (auto v : g.mask()) {
    if (v != current) {
      runs.push_back(len);
      current = v;
      len = 0;
    }
    ++len;
  }
  runs.push_back(len);
  return {{"base", to_json(g.base())},
          {"resolution", {g.time_resolution(), g.space_resolution()}},
          {"runs", runs}};
}

czd::GridSet gridset_from_json(const json& j) {
  const auto base = hypercube_from_json(field(j, "base"));
  const json& res = field(j, "resolution");
  if (!res.is_array() || res.size() != 2 || !res[0].is_number_integer() || !res[1].is_number_integer()) {
    throw InvalidArgument("field 'resolution' must be [m_t, m_s]");
  }
  czd::GridSet g(base, res[0].get<int>(), res[1].get<int>());
  const json& runs = field(j, "runs");
  if (!runs.is_array()) throw InvalidArgument("field 'runs' must be an array");
  std::size_t pos = 0;
  bool on = false;
  for (const auto& r : runs) {
    if (!r.is_number_integer() || r.get<std::int64_t>() < 0) throw InvalidArgument("run lengths must be nonnegative integers");
    const auto len = r.get<std::size_t>();
    if (pos + len > g.cell_count()) throw InvalidArgument("runs exceed the grid cell count");
    for (std::size_t k = 0; k < len; ++k) g.set(pos + k, on);
    pos += len;
    on = !on;
  }
  if (pos != g.cell_count()) throw InvalidArgument("runs do not cover the grid");
  return g;
}

coeffs::CoefficientField field_from_json(const json& j) {
  const json& kind_j = field(j, "kind");
  if (!kind_j.is_string()) throw InvalidArgument("field 'kind' must be a string");
  const auto kind = kind_j.get<std::string>();
  const double lambda = number(j, "lambda");
  if (kind == "constant") {
    const auto b = numbers(j, "b");
    const json& a = field(j, "a");
    const auto n = static_cast<Eigen::Index>(b.size());
    coeffs::Matrix m(n, n);
    if (a.is_number()) {
      m = coeffs::Matrix::Identity(n, n) * a.get<double>();
    } else {
      if (!a.is_array() || static_cast<Eigen::Index>(a.size()) != n) {
        throw InvalidArgument("field 'a' must be an n x n array");
      }
      for (Eigen::Index r = 0; r < n; ++r) {
        const json& row = a[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
          throw InvalidArgument("field 'a' must be an n x n array");
        }
        for (Eigen::Index c = 0; c < n; ++c) m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
      }
    }
    return coeffs::CoefficientField::constant(m, to_eigen(b), lambda);
  }
  if (kind == "cir") {
    return coeffs::CoefficientField::cir({numbers(j, "kappa"), numbers(j, "m"), numbers(j, "sigma2")}, lambda);
  }
  if (kind == "almost_diagonal") {
    return coeffs::CoefficientField::almost_diagonal(to_eigen(numbers(j, "diag")), number(j, "epsilon"),
                                                     to_eigen(numbers(j, "b")), lambda);
  }
  throw InvalidArgument("unknown model kind '" + kind + "'");
}

json to_json(const czd::Box& b) {
  return {{"t", {b.t_lo, b.t_hi}}, {"s_lo", b.s_lo}, {"s_hi", b.s_hi}};
}

json to_json(const czd::CubeRecord& r) {
  return {{"cube", to_json(r.cube)}, {"level", r.level}, {"occupancy", r.occupancy}};
}

json to_json(const czd::Decomposition& d) {
  json stopped = json::array();
  for (const auto& r : d.stopped) stopped.push_back(to_json(r));
  json dense = json::array();
  for (const auto& r : d.dense) dense.push_back(to_json(r));
  return {{"mu", d.mu},
          {"max_level", d.max_level},
          {"root_dense", d.root_dense},
          {"stopped_cubes", stopped},
          {"dense_cubes", dense},
          {"residual", d.residual},
          {"measures", {{"gamma", d.gamma_measure}, {"covered", d.covered_measure}}}};
}

json to_json(const czd::VerifyAResult& r) {
  return {{"holds", r.holds},
          {"mu", r.mu},
          {"gamma_measure", r.gamma_measure},
          {"d1_measure", r.d1_measure},
          {"q_measure", r.q_measure}};
}

json to_json(const czd::VerifyBResult& r) {
  return {{"holds", r.holds},   {"eta", r.eta},     {"d1_measure", r.d1_measure},
          {"d2_measure", r.d2_measure}, {"ratio", r.ratio}, {"tol", r.tol}};
}

json to_json(const czd::DichotomyReport& r) {
  json out = {{"mu_prime", r.mu_prime},
              {"mu", r.mu},
              {"eta", r.eta},
              {"q_measure", r.q_measure},
              {"gamma_measure", r.gamma_measure},
              {"case_split", r.case_split},
              {"branch", r.branch},
              {"certified", r.certified},
              {"d2_in_q", r.d2_in_q},
              {"d2_outside_q", r.d2_outside_q},
              {"branch1_threshold", r.branch1_threshold},
              {"rho_bound", r.rho_bound}};
  out["witness"] = r.witness ? to_json(*r.witness) : json(nullptr);
  return out;
}

json to_json(const coeffs::ConditionReport& r) {
  json clauses = json::array();
  for (const auto& c : r.clauses) clauses.push_back(clause_json(c));
  json profile = json::array();
  for (const auto& p : r.boundary_profile) profile.push_back({{"x", p.x}, {"axis", p.axis}, {"margin", p.margin}});
  return {{"passed", r.passed}, {"clauses", clauses}, {"boundary_profile", profile}};
}

json to_json(const est::EstimateReport& r) {
  json out = {{"estimate", r.estimate},   {"ci_low", r.ci_low},   {"ci_high", r.ci_high},
              {"std_error", r.std_error}, {"n_paths", r.n_paths}, {"successes", r.successes},
              {"seed", r.seed},           {"config_digest", r.config_digest},
              {"scheme", r.scheme},       {"h", r.h}};
  if (!r.variant.empty()) out["variant"] = r.variant;
  return out;
}

json to_json(const est::UniformHitReport& r) {
  json rows = json::array();
  for (std::size_t k = 0; k < r.per_start.size(); ++k) {
    json row = to_json(r.per_start[k]);
    row["start"] = r.starts[k];
    rows.push_back(row);
  }
  return {{"min_lower", r.min_lower}, {"argmin", r.argmin}, {"per_start", rows}};
}

json to_json(const est::OscReport& r) {
  return {{"scales", r.scales},   {"osc", r.osc},       {"noise", r.noise},
          {"nu_hat", r.nu_hat},   {"f_sup", r.f_sup},   {"alpha_hat", r.alpha_hat},
          {"c_hat", r.c_hat},     {"r2", r.r2},         {"inconclusive", r.inconclusive},
          {"note", r.note}};
}

json to_json(const est::HolderFit& r) {
  return {{"alpha_hat", r.alpha_hat}, {"c_hat", r.c_hat},         {"r2", r.r2},
          {"used_pairs", r.used_pairs}, {"residuals", r.residuals}, {"poor_fit", r.poor_fit}};
}

json to_json(const est::MartingaleReport& r) {
  return {{"checkpoints", r.checkpoints}, {"deviation", r.deviation}, {"std_error", r.std_error},
          {"max_ratio", r.max_ratio},     {"final_ratio", r.final_ratio}, {"passed", r.passed}};
}

json to_json(const est::InvariantReport& r) {
  json starts = json::array();
  for (const auto& s : r.per_start) {
    json e = {{"start", s.start},       {"n_samples", s.n_samples}, {"mean", s.mean},
              {"mean_se", s.mean_se},   {"variance", s.variance},   {"quantiles", s.quantiles}};
    e["w1_reference"] = s.w1_reference ? json(*s.w1_reference) : json(nullptr);
    starts.push_back(e);
  }
  std::vector<double> levels(std::begin(est::kQuantileLevels), std::end(est::kQuantileLevels));
  return {{"burn_in", r.config.burn_in},
          {"horizon", r.config.horizon},
          {"thinning", r.config.thinning},
          {"paths_per_start", r.config.paths_per_start},
          {"scheme", sde::to_string(r.config.scheme)},
          {"seed", r.config.seed},
          {"quantile_levels", levels},
          {"per_start", starts},
          {"w1", r.w1},
          {"max_w1", r.max_w1}};
}

json to_json(const est::TailReport& r) {
  json rows = json::array();
  for (std::size_t k = 0; k < r.times.size(); ++k) {
    rows.push_back({{"t", r.times[k]},
                    {"p_hat", r.exceed[k].estimate},
                    {"ci_low", r.exceed[k].ci_low},
                    {"ci_high", r.exceed[k].ci_high}});
  }
  return {{"level", r.level}, {"eps", r.eps}, {"sup_p", r.sup_p}, {"passed", r.passed}, {"rows", rows}};
}

std::string uniform_hit_csv(const est::UniformHitReport& r) {
  std::ostringstream os;
  os.precision(17);
  os << "start,estimate,ci_low,ci_high\n";
  for (std::size_t k = 0; k < r.per_start.size(); ++k) {
    os << '"';
    for (std::size_t i = 0; i < r.starts[k].size(); ++i) os << (i ? " " : "") << r.starts[k][i];
    os << "\"," << r.per_start[k].estimate << ',' << r.per_start[k].ci_low << ',' << r.per_start[k].ci_high
       << '\n';
  }
  return os.str();
}

}  // namespace sqdiff::io
