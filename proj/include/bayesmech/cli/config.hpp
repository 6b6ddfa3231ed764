#pragma once

#include "bayesmech/gaussian.hpp"

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace bayesmech::cli {

inline constexpr int kSchemaVersion = 1;

/// Row-major nested arrays, kept as parsed so configs compare and round-trip
/// exactly.
using Rows = std::vector<std::vector<double>>;

struct RandomRecipe {
  std::uint64_t seed = 0;
  std::optional<double> coupling;
  std::optional<double> min_diag;
  std::optional<double> max_diag;
  std::optional<Index> internal_blanket_rank;
  std::optional<bool> decouple_external;

  friend bool operator==(const RandomRecipe&, const RandomRecipe&) = default;
};

struct ModelSpec {
  Index external = 0;
  Index blanket = 0;
  Index internal = 0;
  std::optional<Index> sensory;
  std::optional<Index> active;
  std::optional<Rows> precision;
  std::optional<RandomRecipe> random;

  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct DynamicsSpec {
  /// "linear" or "radial_solenoidal" (Q(x) = Q (1 + |x|²)).
  std::string mode = "linear";
  std::optional<Rows> q;
  std::optional<Rows> noise;
  /// ς = noise_scale · I when no explicit noise operator is given.
  std::optional<double> noise_scale;
  std::optional<Rows> gamma;

  friend bool operator==(const DynamicsSpec&, const DynamicsSpec&) = default;
};

struct ChainLevelSpec {
  Rows self;
  std::optional<Rows> next;
  Rows noise;

  friend bool operator==(const ChainLevelSpec&, const ChainLevelSpec&) = default;
};

struct ChainSpec {
  std::vector<ChainLevelSpec> levels;
  Rows output;

  friend bool operator==(const ChainSpec&, const ChainSpec&) = default;
};

struct ClampSpec {
  /// "b" (whole blanket) or "s" (sensory part).
  std::string block = "b";
  std::optional<std::vector<double>> value;
  /// Value in units of the clamped coordinates' standard deviations.
  std::optional<double> sd;

  friend bool operator==(const ClampSpec&, const ClampSpec&) = default;
};

struct RunSpec {
  std::optional<double> dt;
  std::optional<Index> n_steps;
  std::optional<Index> n_traj;
  std::optional<std::uint64_t> seed;
  std::optional<Index> record_stride;
  std::optional<ClampSpec> clamp;
  std::optional<std::string> averaging;
  std::optional<bool> keep_per_trajectory;
  std::optional<Index> n_samples;
  std::optional<Index> n_bins;
  std::optional<Index> min_count;
  std::optional<std::vector<double>> lags;
  std::optional<Index> n_groups;
  std::optional<Index> burn_in_records;
  /// Two observation times for transition statistics.
  std::optional<std::vector<double>> times;
  std::optional<std::string> ensemble_format;

  friend bool operator==(const RunSpec&, const RunSpec&) = default;
};

struct ExperimentConfig {
  int schema_version = kSchemaVersion;
  std::string experiment;
  std::string output_dir;
  std::optional<std::string> description;
  std::optional<ModelSpec> model;
  std::optional<DynamicsSpec> dynamics;
  std::optional<ChainSpec> chain;
  RunSpec run;

  friend bool operator==(const ExperimentConfig&, const ExperimentConfig&) = default;
};

inline const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{
      "blanket-check", "syncmap",        "syncmap-empirical", "stationarity",
      "descent",       "active-inference", "control-trace",   "chain-autocov"};
  return names;
}

struct Diagnostic {
  enum class Severity { error, warning };
  Severity severity = Severity::error;
  /// Dotted path to the offending field, e.g. "dynamics.q[0][1]".
  std::string path;
  std::string message;
};

std::string_view to_string(Diagnostic::Severity severity) noexcept;
nlohmann::json to_json(const std::vector<Diagnostic>& diagnostics);
bool has_errors(const std::vector<Diagnostic>& diagnostics);

struct ParseResult {
  std::optional<ExperimentConfig> config;
  std::vector<Diagnostic> diagnostics;
};

/// Structural parse: types, required fields, unknown keys. No semantics.
ParseResult parse_config(const nlohmann::json& doc);
ParseResult parse_config_text(const std::string& text);

nlohmann::json serialize(const ExperimentConfig& config);

/// Semantic checks without running anything: positive definiteness,
/// antisymmetry, split sums, shapes, experiment requirements and the
/// dt·‖B‖₂ < 2 stability guard (a warning).
std::vector<Diagnostic> validate(const ExperimentConfig& config);

/// Parse followed by validate.
std::vector<Diagnostic> validate_text(const std::string& text);

Matrix to_matrix(const Rows& rows);
Rows to_rows(const Matrix& m);

/// Precision matrix of the config's model (explicit or generated).
Matrix resolve_precision(const ModelSpec& spec);
Partition resolve_partition(const ModelSpec& spec);

}  // namespace bayesmech::cli
