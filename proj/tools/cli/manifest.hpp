#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spdcstat/correction.hpp"
#include "spdcstat/fitting.hpp"
#include "spdcstat/simulator.hpp"

namespace spdc::cli {

enum class ReportFormat { Csv, Tsv };

struct Setting {
  double wavelength_nm = 787.0;
  double power_mw = 39.0;
};

/// Everything one invocation needs, merged from the config file and flags.
struct RunManifest {
  std::filesystem::path config_path;
  std::vector<std::filesystem::path> inputs;
  std::filesystem::path output_dir = ".";
  std::vector<std::uint64_t> windows{1, 2, 3, 4, 5};
  std::vector<Setting> settings{Setting{}};
  std::uint64_t seed = 1;
  ReportFormat report_format = ReportFormat::Csv;

  SourceConfig source;
  DetectorConfig detectors;
  EfficiencyModel efficiency;
  ScalingMode scaling = ScalingMode::PerEvent;
  FitOptions fit_options;
  unsigned threads = 1;

  /// Throws ConfigError naming the offending field.
  void validate() const;
};

/// Reads a JSON config into a manifest. Missing required fields and bad
/// values raise ConfigError with the dotted field name, e.g. "source.pulse_count".
RunManifest load_manifest(const std::filesystem::path& config_path);

/// Manifest built from defaults only (analysis without a config file).
RunManifest default_manifest();

/// Per-setting simulation seed derived from the manifest seed.
std::uint64_t setting_seed(std::uint64_t seed, std::size_t setting_index);

/// "787nm_39mW".
std::string setting_stem(const Setting& s);

/// Inverse of setting_stem on a file stem; nullopt if the stem does not match.
std::optional<Setting> parse_setting_stem(const std::string& stem);

}  // namespace spdc::cli
