#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "phiml/matrix.hpp"

namespace phiml {

struct ClassPair {
  std::size_t a = 0;
  std::size_t b = 0;
  friend bool operator==(const ClassPair&, const ClassPair&) = default;
};

/// Mutual-exclusion pairs {a,b} and implication edges a -> b over class
/// indices, sharing an activation threshold `tau` and reduction factor `rho`.
struct ConstraintSet {
  std::vector<ClassPair> exclusions;
  std::vector<ClassPair> implications;
  double tau = 0.4;
  double rho = 0.3;

  bool empty() const { return exclusions.empty() && implications.empty(); }
  /// Throws UsageError on self-pairs, out-of-range classes or tau/rho outside (0,1).
  void validate(std::size_t n_classes) const;
};

nlohmann::json to_json(const ConstraintSet& cs);
ConstraintSet constraint_set_from_json(const nlohmann::json& doc);

/// Minimal-change threshold for counterfactual predictions, in outcome units.
struct RepairConfig {
  double tau_cf = 1.5;
  void validate() const;
};

/// min(p_a, p_b) when both strictly exceed tau, else 0.
double violation_score(std::span<const double> row, ClassPair pair, double tau);

/// Sum of violation_score over every exclusion pair of the set.
double exclusion_violation_mass(std::span<const double> row, const ConstraintSet& cs);

/// Fraction of rows where some exclusion pair has both scores > tau.
double exclusion_violation_rate(const ClassScores& scores, const ConstraintSet& cs);

/// Fraction of rows where some edge a -> b has p_a > tau and p_b < tau.
double implication_violation_rate(const ClassScores& scores, const ConstraintSet& cs);

/// Mean over rows of 1(max_j |cf(i,j) - factual(i)| > tau_cf).
double counterfactual_violation_rate(std::span<const double> factual, const Matrix& counterfactual,
                                     const RepairConfig& config);

/// Population variance of per-environment MSEs (0 for fewer than two values).
double env_mse_variance(std::span<const double> per_env_mse);

}  // namespace phiml
