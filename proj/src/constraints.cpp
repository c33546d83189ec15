#include "phiml/constraints.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "phiml/errors.hpp"

namespace phiml {

namespace {

void check_pair(ClassPair p, std::size_t n_classes, const char* kind) {
  if (p.a == p.b) throw UsageError(std::string(kind) + " constraint relates a class to itself");
  if (p.a >= n_classes || p.b >= n_classes) {
    throw UsageError(std::string(kind) + " constraint references a class outside the score table");
  }
}

double rate(std::size_t hits, std::size_t total) {
  return total == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(total);
}

}  // namespace

void ConstraintSet::validate(std::size_t n_classes) const {
  for (auto p : exclusions) check_pair(p, n_classes, "exclusion");
  for (auto p : implications) check_pair(p, n_classes, "implication");
  if (!(tau > 0.0 && tau < 1.0)) throw UsageError("tau must lie in (0,1)");
  if (!(rho > 0.0 && rho < 1.0)) throw UsageError("rho must lie in (0,1)");
}

nlohmann::json to_json(const ConstraintSet& cs) {
  auto pairs = [](const std::vector<ClassPair>& v) {
    nlohmann::json out = nlohmann::json::array();
    for (auto p : v) out.push_back({p.a, p.b});
    return out;
  };
  return {{"exclusions", pairs(cs.exclusions)}, {"implications", pairs(cs.implications)}, {"tau", cs.tau},
          {"rho", cs.rho}};
}

ConstraintSet constraint_set_from_json(const nlohmann::json& doc) {
  auto pairs = [](const nlohmann::json& v) {
    std::vector<ClassPair> out;
    for (const auto& p : v) out.push_back({p.at(0).get<std::size_t>(), p.at(1).get<std::size_t>()});
    return out;
  };
  ConstraintSet cs;
  cs.exclusions = pairs(doc.at("exclusions"));
  cs.implications = pairs(doc.at("implications"));
  cs.tau = doc.at("tau").get<double>();
  cs.rho = doc.at("rho").get<double>();
  return cs;
}

void RepairConfig::validate() const {
  if (!(tau_cf > 0.0) || !std::isfinite(tau_cf)) throw UsageError("counterfactual threshold must be positive");
}

double violation_score(std::span<const double> row, ClassPair pair, double tau) {
  double pa = row[pair.a];
  double pb = row[pair.b];
  return (pa > tau && pb > tau) ? std::min(pa, pb) : 0.0;
}

double exclusion_violation_mass(std::span<const double> row, const ConstraintSet& cs) {
  double v = 0.0;
  for (auto p : cs.exclusions) v += violation_score(row, p, cs.tau);
  return v;
}

double exclusion_violation_rate(const ClassScores& scores, const ConstraintSet& cs) {
  if (scores.rows() > 0) cs.validate(scores.cols());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    bool violated = std::any_of(cs.exclusions.begin(), cs.exclusions.end(),
                                [&](ClassPair p) { return row[p.a] > cs.tau && row[p.b] > cs.tau; });
    hits += violated ? 1 : 0;
  }
  return rate(hits, scores.rows());
}

double implication_violation_rate(const ClassScores& scores, const ConstraintSet& cs) {
  if (scores.rows() > 0) cs.validate(scores.cols());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    bool violated = std::any_of(cs.implications.begin(), cs.implications.end(),
                                [&](ClassPair p) { return row[p.a] > cs.tau && row[p.b] < cs.tau; });
    hits += violated ? 1 : 0;
  }
  return rate(hits, scores.rows());
}

double counterfactual_violation_rate(std::span<const double> factual, const Matrix& counterfactual,
                                     const RepairConfig& config) {
  config.validate();
  if (counterfactual.rows() != factual.size()) throw UsageError("counterfactual rows must match factual length");
  std::size_t hits = 0;
  for (std::size_t r = 0; r < factual.size(); ++r) {
    double worst = 0.0;
    for (double cf : counterfactual.row(r)) worst = std::max(worst, std::abs(cf - factual[r]));
    hits += worst > config.tau_cf ? 1 : 0;
  }
  return rate(hits, factual.size());
}

double env_mse_variance(std::span<const double> per_env_mse) {
  if (per_env_mse.size() < 2) return 0.0;
  double mean = 0.0;
  for (double v : per_env_mse) mean += v;
  mean /= static_cast<double>(per_env_mse.size());
  double var = 0.0;
  for (double v : per_env_mse) var += (v - mean) * (v - mean);
  return var / static_cast<double>(per_env_mse.size());
}

}  // namespace phiml
