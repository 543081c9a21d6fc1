#pragma once

// JSON encodings shared by the library and the command-line tool.

#include <json.hpp>
#include <string>

#include "sqdiff/coeffs.hpp"
#include "sqdiff/czdecomp.hpp"
#include "sqdiff/estimators.hpp"
#include "sqdiff/geometry.hpp"
#include "sqdiff/gridset.hpp"

namespace sqdiff::io {

using json = nlohmann::json;

inline constexpr int kSchemaVersion = 1;

/// {t0, theta, centers_sqrt, rho}
json to_json(const geometry::HyperCube& q);
geometry::HyperCube hypercube_from_json(const json& j);

/// {base, resolution: [m_t, m_s], runs}; runs alternate unmarked/marked
/// cell counts in flat order, starting with unmarked.
json to_json(const czd::GridSet& g);
czd::GridSet gridset_from_json(const json& j);

/// {kind: "constant" | "cir" | "almost_diagonal", lambda, ...}
coeffs::CoefficientField field_from_json(const json& j);

json to_json(const czd::Box& b);
json to_json(const czd::CubeRecord& r);
json to_json(const czd::Decomposition& d);
json to_json(const czd::VerifyAResult& r);
json to_json(const czd::VerifyBResult& r);
json to_json(const czd::DichotomyReport& r);
json to_json(const coeffs::ConditionReport& r);
json to_json(const est::EstimateReport& r);
json to_json(const est::UniformHitReport& r);
json to_json(const est::OscReport& r);
json to_json(const est::HolderFit& r);
json to_json(const est::MartingaleReport& r);
json to_json(const est::InvariantReport& r);
json to_json(const est::TailReport& r);

/// start,estimate,ci_low,ci_high with one row per start.
std::string uniform_hit_csv(const est::UniformHitReport& r);

}  // namespace sqdiff::io
