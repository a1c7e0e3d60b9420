#pragma once

// Experiment configs, dispatch and report serialization for the command
// line tool.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

namespace cloak {

enum class Experiment {
  RadialSpectrum,
  SpectrumCompare,
  NearCloakSweep,
  InteriorInvisibility,
  FemInvariance,
  WosHitting,
  WosKakutani,
  PushforwardCheck,
};

std::string to_string(Experiment e);
Experiment experiment_from_string(const std::string& s);  // ConfigInvalid on unknown names

enum class Verdict { Pass, Fail, Informational };
std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

struct ScenarioConfig {
  Experiment experiment = Experiment::RadialSpectrum;
  nlohmann::json parameters = nlohmann::json::object();
  std::string output_path;
  /// Directory that relative scenario paths inside parameters resolve against.
  std::filesystem::path base_dir;

  static ScenarioConfig from_json(const nlohmann::json& j, std::filesystem::path base_dir = {});
  static ScenarioConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

struct Table {
  std::string name;
  std::vector<std::string> columns;
  std::vector<std::vector<nlohmann::json>> rows;  // numbers, strings or null
};

struct RunReport {
  Experiment experiment = Experiment::RadialSpectrum;
  nlohmann::json config;
  std::vector<Table> tables;
  nlohmann::json summary = nlohmann::json::object();
  Verdict verdict = Verdict::Informational;
  std::optional<double> wall_time;  // seconds; left out of artifact files
  std::string tool_version;

  nlohmann::json to_json(bool include_timing = false) const;
  static RunReport from_json(const nlohmann::json& j);
};

struct RunOptions {
  std::optional<std::uint64_t> seed;  // overrides parameters.seed
  unsigned threads = 1;
};

/// Validates the parameters, then dispatches to the owning module.
RunReport run(const ScenarioConfig& config, const RunOptions& options = {});

enum class Format { Csv, Json, Text };
Format format_from_string(const std::string& s);

/// Shortest round-trip decimal.
std::string format_number(double v);
std::string render_text(const RunReport& r, bool include_timing);
/// Writes the artifacts for the chosen format into out_dir; returns the paths.
std::vector<std::filesystem::path> emit_report(const RunReport& r, Format format,
                                               const std::filesystem::path& out_dir);

const char* tool_version();

}  // namespace cloak
