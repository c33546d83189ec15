#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phiml/dataset.hpp"
#include "phiml/model.hpp"

namespace phiml {

double accuracy(std::span<const double> predictions, std::span<const double> labels);
double mean_squared_error(std::span<const double> predictions, std::span<const double> labels);
/// Accuracy for classification, MSE for regression. Empty input gives 0.
double evaluate(std::span<const double> predictions, std::span<const double> labels, Task task);

struct GroupStat {
  std::string feature;
  std::string value;
  std::size_t size = 0;
  double accuracy = 0.0;
  double positive_rate = 0.0;
  /// Below the minimum size: reported but left out of disparities.
  bool small = false;

  std::string key() const { return feature + "=" + value; }
};

struct Disparity {
  std::string feature;
  double value = 0.0;
};

struct GroupReport {
  std::vector<GroupStat> groups;
  std::vector<Disparity> disparities;
  double accuracy = 0.0;
  double positive_rate = 0.0;

  const GroupStat* find(const std::string& key) const;
  nlohmann::json to_json() const;
};

/// Per-group size, accuracy and positive-decision rate for binary decisions,
/// plus max - min accuracy per sensitive feature over groups of at least
/// `min_group_size` rows.
GroupReport group_report(std::span<const double> decisions, std::span<const double> labels, const Groups& groups,
                         std::size_t min_group_size = 20);

struct EquityDeltas {
  std::vector<std::string> worst_off;
  std::vector<std::string> best_off;
  double base_worst_rate = 0.0;
  double base_best_rate = 0.0;
  double treated_worst_rate = 0.0;
  double treated_best_rate = 0.0;
  /// Undefined (empty) when the baseline worst-off rate is 0.
  std::optional<double> worst_off_rate_improvement_pct;
  /// Undefined (empty) when the baseline gap is 0.
  std::optional<double> gap_reduction_pct;
  double overall_accuracy_delta = 0.0;

  nlohmann::json to_json() const;
};

/// The |worst_off| highest-accuracy groups of `base` outside `worst_off`
/// with at least `min_group_size` rows, best first.
std::vector<std::string> best_off_groups(const GroupReport& base, const std::vector<std::string>& worst_off,
                                         std::size_t min_group_size = 20);

/// Change in the mean positive rate of the worst-off groups and in the gap
/// between best-off and worst-off mean rates, from `base` to `treated`.
EquityDeltas equity_deltas(const GroupReport& base, const GroupReport& treated,
                           const std::vector<std::string>& worst_off, std::size_t min_group_size = 20);
EquityDeltas equity_deltas(const GroupReport& base, const GroupReport& treated,
                           const std::vector<std::string>& worst_off, const std::vector<std::string>& best_off);

}  // namespace phiml
