#pragma once

#include <sfcmig/metrics.hpp>
#include <sfcmig/model.hpp>

#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sfcmig {

/// Malformed input file: bad JSON (with line/column) or a missing/mistyped field.
class ParseError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// File could not be opened, read or written.
class IoError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// "2000000", "300KB", "0.3MB", "2MBps", "3GB/s" (powers of ten, bytes per
/// second). "full" yields nullopt: no migration limit.
std::optional<double> parse_bandwidth(std::string_view text);

Scenario scenario_from_json(std::string_view text, const std::string& origin = "<scenario>");
std::string scenario_to_json(const Scenario& scenario);
Scenario load_scenario(const std::filesystem::path& path);
void save_scenario(const std::filesystem::path& path, const Scenario& scenario);

CalibrationTarget targets_from_json(std::string_view text, const std::string& origin = "<targets>");
CalibrationTarget load_targets(const std::filesystem::path& path);

/// Bounds file: {"scenario": <base scenario>, "parameters": {"name": [lo, hi]},
/// "residual_ceiling": 0.15, ...}.
CalibrationSetup setup_from_json(std::string_view text, const std::string& origin = "<bounds>");
CalibrationSetup load_setup(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace sfcmig
