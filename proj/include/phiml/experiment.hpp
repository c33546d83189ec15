#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phiml/dataset.hpp"
#include "phiml/model.hpp"

namespace phiml {

inline constexpr int kReportSchemaVersion = 1;

const std::vector<std::string>& scenario_names();

/// Dataset a scenario runs on. `n` <= 0 selects the scenario default
/// (rows, or rows per environment for env-ensemble).
Dataset generate_scenario(const std::string& scenario, std::uint64_t seed, std::int64_t n = 0);

struct RunConfig {
  std::string scenario;
  std::string model = "forest";
  std::string mode = "baseline";
  std::uint64_t seed = 42;
  /// Overrides such as tau, rho, lambda, alpha, n, n_trees, epochs.
  std::map<std::string, std::string> params;

  /// Throws UsageError for unknown names, unsupported combinations or
  /// unknown parameter keys.
  void validate() const;
};

/// One line per scenario listing its supported model/mode pairs.
std::string valid_combinations();

struct RunResult {
  nlohmann::json report;
  FittedModel model;
};

/// Fits the baseline, applies the mode and evaluates on the held-out split.
/// Uses `data` instead of generating the scenario dataset when given.
RunResult run_experiment(const RunConfig& config, const Dataset* data = nullptr);

/// Train/test row split. Classification splits are stratified by label.
struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
Split split_rows(std::span<const double> labels, double test_fraction, bool stratified, std::uint64_t seed);

/// Pretty JSON with every float written to 17 significant digits; NaN and
/// infinities become null.
std::string dump_json(const nlohmann::json& doc);

/// Columns of the summary table written by `report`.
const std::vector<std::string>& summary_columns();
/// One CSV row per report; cells that do not apply are left empty.
void write_summary_csv(std::ostream& out, const std::vector<nlohmann::json>& reports);

}  // namespace phiml
