#pragma once

#include "cachediff/experiment.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string>

namespace cachediff {

// Wall-clock quantities live under each entry's "timing" object; everything
// else in the document is a pure function of the config.
nlohmann::json to_json(const StrategyReport& entry);
nlohmann::json to_json(const RunReport& report);
// ConfigError when the document is not a report of this schema version.
RunReport report_from_json(const nlohmann::json& j);

// Same document with every "timing" object removed.
nlohmann::json strip_timing(nlohmann::json j);

std::string summary_csv(const RunReport& report);
std::string feature_mse_csv(const RunReport& report);
std::string bias_trend_csv(const std::vector<BiasEnergy>& trend);

// Prefixes the schema-version comment line.
std::string with_schema_header(const std::string& csv);

// Writes <stem>.json plus <stem>_summary.csv, <stem>_feature_mse.csv and
// <stem>_bias_trend.csv into `dir`, creating it when needed. Returns the
// JSON path. Filesystem failures raise std::runtime_error naming the path.
std::filesystem::path write_report(const RunReport& report, const std::filesystem::path& dir, const std::string& stem);

void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace cachediff
