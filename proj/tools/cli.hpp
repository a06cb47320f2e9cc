// SPDX-License-Identifier: Apache-2.0
#pragma once

// Command-line front end. Every command is a thin wrapper over library
// calls; `run` is the whole program minus process plumbing so tests can
// drive it in-process.

#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "spikesal/train.hpp"

namespace spikesal::cli {

/// Everything a command may need. Precedence: defaults, then the JSON config
/// file, then flags.
struct RunConfig {
  TrainConfig train;
  ModelConfig model;
  InputOptions inputs;
  std::string dataset;
  std::string out;
  std::string checkpoint;
  std::vector<std::string> scenarios{"constant-light", "brightness-ramp", "shadow-occlusion"};
  double theta = 1.0;     // spike threshold for simulate and gen-data
  std::size_t count = 64;  // gen-data clips
  SyntheticSize size;      // gen-data clip geometry
  std::size_t threads = 1;
  bool deterministic = false;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Overlays keys from `j`; unknown keys and wrong types are ConfigErrors.
void apply_json(const nlohmann::json& j, RunConfig& cfg);

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,
  kUsage = 2,
  kIo = 3,
  kConfig = 4,
  kDiverged = 5,
};

/// args excludes the program name. Errors go to `err` as one JSON line:
/// {"error": <kind>, "message": <text>}.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace spikesal::cli
