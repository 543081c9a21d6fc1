#pragma once

// Experiment runner behind the `sqdiff` executable.
//
// A config is one JSON document:
//   {command?, seed?, workers?, model?, geometry?, gamma?, experiment?, output?}
// Exit codes: 0 all pass criteria hold, 1 a statistical criterion failed,
// 2 usage or schema error.

#include <json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace sqdiff::cli {

using json = nlohmann::json;

enum ExitCode { kPass = 0, kFail = 1, kUsage = 2 };

inline const std::vector<std::string> kCommands = {"simulate",   "hitprob",   "smallcube",
                                                   "czd",        "holder",    "martingale",
                                                   "invariant",  "rescale-check"};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> workers;
  std::optional<std::string> out_dir;
  std::optional<std::vector<std::string>> formats;
};

/// A named file produced by a run, relative to the output directory.
struct Artifact {
  std::string name;
  std::string content;
  bool binary = false;
};

struct RunResult {
  int exit_code = kPass;
  json document;  // the JSON result, including schema_version and digest
  std::vector<std::string> diagnostics;
  std::vector<Artifact> artifacts;  // CSV, plot data, trajectory files
};

/// Schema and semantic checks without simulating. Empty means valid.
std::vector<std::string> validate(const std::string& command, const json& config);

/// Digest of the config with worker count and output settings removed.
std::string config_digest(const json& config);

RunResult run(const std::string& command, const json& config, const Overrides& overrides = {});

/// Writes <command>.json and, if requested, the CSV/plot artifacts into
/// `dir`. Throws std::runtime_error on unwritable paths.
void emit(const std::string& command, const RunResult& result, const std::string& dir,
          const std::vector<std::string>& formats);

/// Copy of `doc` without the timestamp, for byte comparisons.
std::string stable_dump(const json& doc);

int main_entry(int argc, char** argv);

}  // namespace sqdiff::cli
