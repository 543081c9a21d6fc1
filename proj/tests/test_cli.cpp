#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <sys/wait.h>

#include "sqdiff_cli/app.hpp"

using namespace sqdiff::cli;
namespace fs = std::filesystem;

namespace {

json constant_model() { return json::parse(R"({"kind": "constant", "a": 1, "b": [1, 1], "lambda": 2})"); }
json unit_geometry() { return json::parse(R"({"centers_sqrt": [0, 0], "rho": 1})"); }

json hitprob_config(const std::string& gamma_kind) {
  return {{"command", "hitprob"},
          {"seed", 7},
          {"model", constant_model()},
          {"geometry", unit_geometry()},
          {"gamma", {{"kind", gamma_kind}}},
          {"experiment", {{"h", 1e-3}, {"paths", 200}, {"start", {0.01, 0.01}}}}};
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("sqdiff_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

int run_binary(const std::string& args) {
  const int status = std::system((std::string(SQDIFF_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("hitprob with gamma = Q") {
  const auto r = run("hitprob", hitprob_config("full"));
  REQUIRE(r.exit_code == kPass);
  CHECK(r.document["report"]["estimate"] == 1.0);
  CHECK(r.document["schema_version"] == 1);
  CHECK(r.document["command"] == "hitprob");
  CHECK(r.document["config_digest"].get<std::string>().size() == 16);

  const auto empty = run("hitprob", hitprob_config("empty"));
  CHECK(empty.document["report"]["estimate"] == 0.0);
}

TEST_CASE("czd with an empty gamma") {
  json cfg = {{"geometry", unit_geometry()}, {"gamma", {{"kind", "empty"}}}, {"experiment", {{"mu", 0.5}}}};
  const auto r = run("czd", cfg);
  REQUIRE(r.exit_code == kPass);
  CHECK(r.document["report"]["decomposition"]["stopped_cubes"].empty());
  CHECK(r.document["report"]["verify_a"]["holds"] == true);
}

TEST_CASE("martingale negative control fails") {
  json cfg = {{"seed", 3},
              {"model", json::parse(R"({"kind": "constant", "a": 1, "b": [1], "lambda": 2})")},
              {"geometry", json::parse(R"({"centers_sqrt": [2], "rho": 1})")},
              {"experiment", {{"h", 1e-3}, {"paths", 4000}, {"start", {4.0}}, {"checkpoints", {0.25, 0.5, 1.0}}}}};
  const auto good = run("martingale", cfg);
  CHECK(good.exit_code == kPass);
  cfg["experiment"]["negative_control"] = true;
  const auto bad = run("martingale", cfg);
  CHECK(bad.exit_code == kFail);
  CHECK(bad.document["report"]["final_ratio"].get<double>() > 10.0);
}

TEST_CASE("validation diagnostics") {
  CHECK(validate("hitprob", hitprob_config("full")).empty());

  json cfg = hitprob_config("full");
  cfg["experiment"]["uniform"] = true;
  cfg["experiment"]["starts"] = {{0.0, 0.0}, {0.5, 0.0}};
  const auto d = validate("hitprob", cfg);
  REQUIRE(d.size() == 1);
  CHECK(d[0].find("start 1") != std::string::npos);
  CHECK(run("hitprob", cfg).exit_code == kUsage);

  json inv = {{"model", json::parse(R"({"kind": "constant", "a": 3, "b": [0], "lambda": 2})")},
              {"experiment", {{"starts", {{0.5}}}, {"scheme", "full-truncation-euler"}}}};
  const auto di = validate("invariant", inv);
  REQUIRE_FALSE(di.empty());
  CHECK(di[0].find("a_upper") != std::string::npos);

  json broken = hitprob_config("full");
  broken["model"].erase("lambda");
  const auto db = validate("hitprob", broken);
  REQUIRE_FALSE(db.empty());
  CHECK(db[0].find("lambda") != std::string::npos);
  CHECK(!validate("hitprob", json::array()).empty());
}

TEST_CASE("outputs are deterministic across worker counts") {
  json cfg = hitprob_config("random");
  cfg["gamma"]["fraction"] = 0.2;
  cfg["experiment"]["uniform"] = true;
  cfg["experiment"]["paths"] = 300;
  Overrides one, many;
  one.workers = 1;
  many.workers = 6;
  const auto a = run("hitprob", cfg, one);
  const auto b = run("hitprob", cfg, many);
  REQUIRE(a.exit_code == kPass);
  CHECK(stable_dump(a.document) == stable_dump(b.document));
  CHECK(a.document["config_digest"] == b.document["config_digest"]);
  Overrides reseed;
  reseed.seed = 8;
  const auto c = run("hitprob", cfg, reseed);
  CHECK(c.document["config_digest"] != a.document["config_digest"]);
}

TEST_CASE("binary writes json and csv") {
  const auto dir = scratch_dir("emit");
  json cfg = hitprob_config("random");
  cfg["gamma"]["fraction"] = 0.2;
  cfg["experiment"]["uniform"] = true;
  cfg["experiment"]["per_axis"] = 3;
  cfg["experiment"]["paths"] = 100;
  cfg["experiment"]["threshold"] = 0.0;
  {
    std::ofstream os(dir / "cfg.json");
    os << cfg.dump();
  }
  const std::string base = "hitprob --config " + (dir / "cfg.json").string();
  CHECK(run_binary(base + " --out " + (dir / "out").string() + " --format json,csv --workers 2") == 0);
  REQUIRE(fs::exists(dir / "out" / "hitprob.json"));
  const auto doc = json::parse(slurp(dir / "out" / "hitprob.json"));
  CHECK(doc["report"]["per_start"].size() == 9);
  const auto csv = slurp(dir / "out" / "hitprob.csv");
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 10);

  CHECK(run_binary(base + " --out /proc/forbidden/dir") == 2);
  CHECK(run_binary("hitprob --config " + (dir / "missing.json").string()) == 2);
  CHECK(run_binary("no-such-command") == 2);

  json mart = {{"model", json::parse(R"({"kind": "constant", "a": 1, "b": [1], "lambda": 2})")},
               {"geometry", json::parse(R"({"centers_sqrt": [2], "rho": 1})")},
               {"experiment",
                {{"h", 1e-3}, {"paths", 3000}, {"start", {4.0}}, {"checkpoints", {0.5, 1.0}}, {"negative_control", true}}}};
  {
    std::ofstream os(dir / "mart.json");
    os << mart.dump();
  }
  CHECK(run_binary("martingale --config " + (dir / "mart.json").string() + " --out " + (dir / "m").string()) == 1);
  CHECK(run_binary("validate --command hitprob --config " + (dir / "cfg.json").string()) == 0);
}
