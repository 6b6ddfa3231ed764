#pragma once

#include "bayesmech/cli/config.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace bayesmech::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitConfigInvalid = 2,
  kExitModelConstructionFailed = 3,
  kExitSimulationDiverged = 4,
  kExitFailure = 5,
};

struct RunOutcome {
  int exit_code = kExitOk;
  std::filesystem::path output_dir;
  /// Contents of report.json on success, error.json otherwise.
  nlohmann::json report;
};

/// Validates, runs the experiment and writes its artifacts. manifest.json is
/// written first with status "running" and rewritten (and fsynced) last with
/// per-file checksums. Failures write error.json and return a nonzero code.
/// `output_override`, when non-empty, replaces the config's output_dir.
RunOutcome run_experiment(const ExperimentConfig& config,
                          const std::filesystem::path& output_override = {});
RunOutcome run_config_text(const std::string& text,
                           const std::filesystem::path& output_override = {});

std::string git_describe();

}  // namespace bayesmech::cli
