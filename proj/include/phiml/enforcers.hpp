#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phiml/constraints.hpp"
#include "phiml/dataset.hpp"
#include "phiml/matrix.hpp"

namespace phiml {

/// Gap left below tau when one multiplicative reduction is not enough.
inline constexpr double kExclusionEpsilon = 1e-6;

/// For every exclusion pair with both scores above tau, scales the lower
/// score by (1 - rho), clamping it to tau - 1e-6 if it is still above tau.
/// Equal scores reduce the second class of the pair.
ClassScores apply_mutual_exclusion(const ClassScores& scores, const ConstraintSet& cs);

/// For each edge a -> b (in declaration order) with p_a > tau and p_b < tau,
/// raises p_b by min(rho * p_a, tau - p_b).
ClassScores apply_implication_transfer(const ClassScores& scores, const ConstraintSet& cs);

/// Row-level versions used inside differentiable layers. When `jacobian`
/// is non-null it must hold d row / d input (k x k) on entry and is updated
/// in place by the chain rule; the tau - 1e-6 clamp and the capped transfer
/// contribute zero gradient.
void mutual_exclusion_row(std::span<double> row, const ConstraintSet& cs, Matrix* jacobian = nullptr);
void implication_transfer_row(std::span<double> row, const ConstraintSet& cs, Matrix* jacobian = nullptr);

/// Clamps every counterfactual entry into [factual - tau_cf, factual + tau_cf].
Matrix repair_counterfactuals(std::span<const double> factual, const Matrix& counterfactual,
                              const RepairConfig& config);

struct ThresholdPolicy {
  double default_threshold = 0.5;
  /// Worst-off group keys, worst first.
  std::vector<std::string> worst_off_groups;
  std::optional<double> shared_worst_off_threshold;
  std::optional<std::map<std::string, double>> per_group_thresholds;
  bool infeasible = false;

  /// Accuracy on the calibration rows at the default threshold and under the policy.
  double baseline_accuracy = 0.0;
  double calibrated_accuracy = 0.0;

  nlohmann::json to_json() const;
};

struct CalibrationConfig {
  std::size_t min_group_size = 20;
  double validation_split = 0.20;
  double min_accuracy_retention = 0.90;
  double worst_off_fraction = 1.0 / 3.0;
  std::size_t max_worst_off_groups = 5;
  double threshold_step = 0.02;
  double minimax_weight = 0.70;
  double average_weight = 0.30;
  bool per_group_mode = false;
  std::uint64_t seed = 42;

  void validate() const;
  /// {step, 2 step, ..., 1 - step}.
  std::vector<double> grid() const;
};

/// Per-group accuracy of `decisions` against `labels` (NaN for empty groups).
std::vector<double> group_accuracies(std::span<const int> decisions, std::span<const double> labels,
                                     const Groups& groups);

/// Worst-off groups: the lowest-accuracy fraction of groups meeting the size
/// floor, capped, ordered by (accuracy, key order). Returns group indices.
std::vector<int> select_worst_off(std::span<const double> accuracies, std::span<const std::size_t> sizes,
                                  const CalibrationConfig& config);

/// Grid search for decision thresholds applied to the worst-off groups that
/// maximise minimax_weight * min + average_weight * mean of their accuracy,
/// subject to overall accuracy >= retention * baseline. Among maximisers the
/// threshold closest to 0.5 wins, lower on ties.
ThresholdPolicy calibrate_rawlsian_thresholds(std::span<const double> scores, std::span<const double> labels,
                                              const Groups& groups, const CalibrationConfig& config);

/// 1[p > threshold of the row]. A row in several worst-off groups uses the
/// threshold of the worst-ranked one.
std::vector<int> apply_threshold_policy(std::span<const double> scores, const Groups& groups,
                                        const ThresholdPolicy& policy);

}  // namespace phiml
