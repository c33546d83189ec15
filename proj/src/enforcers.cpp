#include "phiml/enforcers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "phiml/errors.hpp"

namespace phiml {

void mutual_exclusion_row(std::span<double> row, const ConstraintSet& cs, Matrix* jacobian) {
  for (auto p : cs.exclusions) {
    if (!(row[p.a] > cs.tau && row[p.b] > cs.tau)) continue;
    const std::size_t low = row[p.a] < row[p.b] ? p.a : p.b;
    double reduced = row[low] * (1.0 - cs.rho);
    if (reduced > cs.tau) {
      row[low] = cs.tau - kExclusionEpsilon;
      if (jacobian) std::fill(jacobian->row(low).begin(), jacobian->row(low).end(), 0.0);
    } else {
      row[low] = reduced;
      if (jacobian) {
        for (double& v : jacobian->row(low)) v *= 1.0 - cs.rho;
      }
    }
  }
}

void implication_transfer_row(std::span<double> row, const ConstraintSet& cs, Matrix* jacobian) {
  for (auto p : cs.implications) {
    if (!(row[p.a] > cs.tau && row[p.b] < cs.tau)) continue;
    double lift = cs.rho * row[p.a];
    double room = cs.tau - row[p.b];
    if (lift < room) {
      row[p.b] += lift;
      if (jacobian) {
        auto ja = jacobian->row(p.a);
        auto jb = jacobian->row(p.b);
        for (std::size_t j = 0; j < jb.size(); ++j) jb[j] += cs.rho * ja[j];
      }
    } else {
      row[p.b] = cs.tau;
      if (jacobian) std::fill(jacobian->row(p.b).begin(), jacobian->row(p.b).end(), 0.0);
    }
  }
}

ClassScores apply_mutual_exclusion(const ClassScores& scores, const ConstraintSet& cs) {
  cs.validate(scores.cols());
  ClassScores out = scores;
  for (std::size_t r = 0; r < out.rows(); ++r) mutual_exclusion_row(out.row(r), cs);
  return out;
}

ClassScores apply_implication_transfer(const ClassScores& scores, const ConstraintSet& cs) {
  cs.validate(scores.cols());
  ClassScores out = scores;
  for (std::size_t r = 0; r < out.rows(); ++r) implication_transfer_row(out.row(r), cs);
  return out;
}

Matrix repair_counterfactuals(std::span<const double> factual, const Matrix& counterfactual,
                              const RepairConfig& config) {
  config.validate();
  if (counterfactual.rows() != factual.size()) throw UsageError("counterfactual rows must match factual length");
  Matrix out = counterfactual;
  for (std::size_t r = 0; r < out.rows(); ++r) {
    double lo = factual[r] - config.tau_cf;
    double hi = factual[r] + config.tau_cf;
    // keep the band closed in floating point: |bound - factual| <= tau_cf
    while (hi - factual[r] > config.tau_cf) hi = std::nextafter(hi, -INFINITY);
    while (factual[r] - lo > config.tau_cf) lo = std::nextafter(lo, INFINITY);
    for (double& v : out.row(r)) {
      if (v > hi) {
        v = hi;
      } else if (v < lo) {
        v = lo;
      }
    }
  }
  return out;
}

nlohmann::json ThresholdPolicy::to_json() const {
  nlohmann::json doc{{"default_threshold", default_threshold},
                     {"worst_off_groups", worst_off_groups},
                     {"shared_worst_off_threshold", nullptr},
                     {"per_group_thresholds", nullptr},
                     {"infeasible", infeasible},
                     {"baseline_accuracy", baseline_accuracy},
                     {"calibrated_accuracy", calibrated_accuracy}};
  if (shared_worst_off_threshold) doc["shared_worst_off_threshold"] = *shared_worst_off_threshold;
  if (per_group_thresholds) {
    nlohmann::json m = nlohmann::json::object();
    for (const auto& key : worst_off_groups) m[key] = per_group_thresholds->at(key);
    doc["per_group_thresholds"] = std::move(m);
  }
  return doc;
}

void CalibrationConfig::validate() const {
  if (min_group_size < 1) throw UsageError("min_group_size must be at least 1");
  if (!(validation_split > 0.0 && validation_split < 1.0)) throw UsageError("validation_split must lie in (0,1)");
  if (!(min_accuracy_retention >= 0.0 && min_accuracy_retention <= 1.0)) {
    throw UsageError("min_accuracy_retention must lie in [0,1]");
  }
  if (!(worst_off_fraction > 0.0 && worst_off_fraction <= 1.0)) throw UsageError("worst_off_fraction must lie in (0,1]");
  if (max_worst_off_groups < 1) throw UsageError("max_worst_off_groups must be at least 1");
  if (!(threshold_step > 0.0 && threshold_step < 0.5)) throw UsageError("threshold_step must lie in (0,0.5)");
  if (!(minimax_weight >= 0.0 && average_weight >= 0.0) || std::abs(minimax_weight + average_weight - 1.0) > 1e-9) {
    throw UsageError("calibration weights must be non-negative and sum to 1");
  }
}

namespace {

int grid_points(double step) { return static_cast<int>(std::lround(1.0 / step)); }

double grid_value(int i, double step) {
  const int n = grid_points(step);
  return std::abs(n * step - 1.0) < 1e-9 ? static_cast<double>(i) / n : i * step;
}

struct Evaluation {
  bool feasible = false;
  double objective = 0.0;
  double accuracy = 0.0;
};

// Decision thresholds for a candidate assignment; `assigned[w]` is the
// threshold of the w-th worst-off group.
class PolicySearch {
 public:
  PolicySearch(std::span<const double> scores, std::span<const double> labels, const Groups& groups,
               std::vector<int> worst_off, const CalibrationConfig& config)
      : scores_(scores), labels_(labels), groups_(groups), worst_off_(std::move(worst_off)), config_(config) {
    rank_.assign(scores.size(), -1);
    for (std::size_t r = 0; r < scores.size(); ++r) {
      for (std::size_t w = 0; w < worst_off_.size(); ++w) {
        if (groups.contains(r, worst_off_[w])) {
          rank_[r] = static_cast<int>(w);
          break;
        }
      }
    }
    std::size_t correct = 0;
    for (std::size_t r = 0; r < scores.size(); ++r) correct += (scores[r] > 0.5 ? 1.0 : 0.0) == labels[r] ? 1 : 0;
    baseline_ = scores.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(scores.size());
  }

  double baseline() const { return baseline_; }

  Evaluation evaluate(const std::vector<double>& assigned) const {
    std::vector<double> hits(worst_off_.size(), 0.0), sizes(worst_off_.size(), 0.0);
    std::size_t correct = 0;
    for (std::size_t r = 0; r < scores_.size(); ++r) {
      double t = rank_[r] < 0 ? 0.5 : assigned[static_cast<std::size_t>(rank_[r])];
      bool ok = (scores_[r] > t ? 1.0 : 0.0) == labels_[r];
      correct += ok ? 1 : 0;
      for (std::size_t w = 0; w < worst_off_.size(); ++w) {
        if (groups_.contains(r, worst_off_[w])) {
          sizes[w] += 1.0;
          hits[w] += ok ? 1.0 : 0.0;
        }
      }
    }
    Evaluation e;
    e.accuracy = scores_.empty() ? 0.0 : static_cast<double>(correct) / static_cast<double>(scores_.size());
    e.feasible = e.accuracy >= config_.min_accuracy_retention * baseline_;
    double lo = std::numeric_limits<double>::infinity(), mean = 0.0;
    for (std::size_t w = 0; w < worst_off_.size(); ++w) {
      double a = hits[w] / sizes[w];
      lo = std::min(lo, a);
      mean += a / static_cast<double>(worst_off_.size());
    }
    e.objective = config_.minimax_weight * lo + config_.average_weight * mean;
    return e;
  }

 private:
  std::span<const double> scores_;
  std::span<const double> labels_;
  const Groups& groups_;
  std::vector<int> worst_off_;
  const CalibrationConfig& config_;
  std::vector<int> rank_;
  double baseline_ = 0.0;
};

constexpr double kObjectiveTie = 1e-12;

// True when candidate grid index `i` beats the incumbent `best_i`.
bool preferred(double objective, int i, double best_objective, int best_i, int n_points) {
  if (best_i < 0 || objective > best_objective + kObjectiveTie) return true;
  if (objective < best_objective - kObjectiveTie) return false;
  int d = std::abs(2 * i - n_points), best_d = std::abs(2 * best_i - n_points);
  return d < best_d || (d == best_d && i < best_i);
}

}  // namespace

std::vector<double> CalibrationConfig::grid() const {
  std::vector<double> out;
  for (int i = 1; i < grid_points(threshold_step); ++i) out.push_back(grid_value(i, threshold_step));
  return out;
}

std::vector<double> group_accuracies(std::span<const int> decisions, std::span<const double> labels,
                                     const Groups& groups) {
  std::vector<double> hits(groups.count(), 0.0), sizes(groups.count(), 0.0);
  for (std::size_t r = 0; r < decisions.size(); ++r) {
    bool ok = static_cast<double>(decisions[r]) == labels[r];
    for (int g : groups.of(r)) {
      sizes[g] += 1.0;
      hits[g] += ok ? 1.0 : 0.0;
    }
  }
  std::vector<double> out(groups.count());
  for (std::size_t g = 0; g < out.size(); ++g) {
    out[g] = sizes[g] > 0.0 ? hits[g] / sizes[g] : std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

std::vector<int> select_worst_off(std::span<const double> accuracies, std::span<const std::size_t> sizes,
                                  const CalibrationConfig& config) {
  std::vector<int> eligible;
  for (std::size_t g = 0; g < sizes.size(); ++g) {
    if (sizes[g] >= config.min_group_size) eligible.push_back(static_cast<int>(g));
  }
  if (eligible.empty()) return {};
  std::stable_sort(eligible.begin(), eligible.end(),
                   [&](int a, int b) { return accuracies[a] < accuracies[b]; });
  auto wanted = static_cast<std::size_t>(
      std::ceil(config.worst_off_fraction * static_cast<double>(eligible.size()) - 1e-9));
  wanted = std::clamp<std::size_t>(wanted, 1, config.max_worst_off_groups);
  eligible.resize(std::min(wanted, eligible.size()));
  return eligible;
}

ThresholdPolicy calibrate_rawlsian_thresholds(std::span<const double> scores, std::span<const double> labels,
                                              const Groups& groups, const CalibrationConfig& config) {
  config.validate();
  if (labels.size() != scores.size() || groups.rows() != scores.size()) {
    throw UsageError("scores, labels and groups must cover the same rows");
  }
  std::vector<int> base_decisions(scores.size());
  for (std::size_t r = 0; r < scores.size(); ++r) base_decisions[r] = scores[r] > 0.5 ? 1 : 0;
  auto base_acc = group_accuracies(base_decisions, labels, groups);
  auto worst = select_worst_off(base_acc, groups.sizes(), config);

  ThresholdPolicy policy;
  for (int g : worst) policy.worst_off_groups.push_back(groups.keys[g]);
  PolicySearch search(scores, labels, groups, worst, config);
  policy.baseline_accuracy = search.baseline();
  policy.calibrated_accuracy = search.baseline();
  if (worst.empty()) {
    policy.infeasible = true;
    return policy;
  }

  const int n_points = grid_points(config.threshold_step);
  const std::size_t n_w = worst.size();
  auto threshold = [&](int i) { return grid_value(i, config.threshold_step); };

  int best_i = -1;
  Evaluation best;
  for (int i = 1; i < n_points; ++i) {
    auto e = search.evaluate(std::vector<double>(n_w, threshold(i)));
    if (!e.feasible) continue;
    if (preferred(e.objective, i, best.objective, best_i, n_points)) {
      best_i = i;
      best = e;
    }
  }
  if (best_i < 0) {
    policy.infeasible = true;
    return policy;
  }

  if (!config.per_group_mode) {
    policy.shared_worst_off_threshold = threshold(best_i);
    policy.calibrated_accuracy = best.accuracy;
    return policy;
  }

  std::vector<int> idx(n_w, best_i);
  auto assigned = [&] {
    std::vector<double> t(n_w);
    for (std::size_t w = 0; w < n_w; ++w) t[w] = threshold(idx[w]);
    return t;
  };
  for (int sweep = 0; sweep < 50; ++sweep) {
    bool changed = false;
    for (std::size_t w = 0; w < n_w; ++w) {
      const int incumbent = idx[w];
      int local_i = incumbent;
      Evaluation local = best;
      for (int i = 1; i < n_points; ++i) {
        if (i == incumbent) continue;
        idx[w] = i;
        auto e = search.evaluate(assigned());
        if (e.feasible && preferred(e.objective, i, local.objective, local_i, n_points)) {
          local_i = i;
          local = e;
        }
      }
      idx[w] = local_i;
      if (local_i != incumbent) {
        best = local;
        changed = true;
      }
    }
    if (!changed) break;
  }
  std::map<std::string, double> per_group;
  for (std::size_t w = 0; w < n_w; ++w) per_group[policy.worst_off_groups[w]] = threshold(idx[w]);
  policy.per_group_thresholds = std::move(per_group);
  policy.calibrated_accuracy = best.accuracy;
  return policy;
}

std::vector<int> apply_threshold_policy(std::span<const double> scores, const Groups& groups,
                                        const ThresholdPolicy& policy) {
  if (groups.rows() != scores.size()) throw UsageError("scores and groups must cover the same rows");
  // Threshold by group index, following the worst-first order of the policy.
  std::vector<std::pair<int, double>> ranked;
  if (!policy.infeasible) {
    for (const auto& key : policy.worst_off_groups) {
      auto it = std::find(groups.keys.begin(), groups.keys.end(), key);
      if (it == groups.keys.end()) continue;
      double t = policy.default_threshold;
      if (policy.shared_worst_off_threshold) {
        t = *policy.shared_worst_off_threshold;
      } else if (policy.per_group_thresholds) {
        t = policy.per_group_thresholds->at(key);
      }
      ranked.emplace_back(static_cast<int>(it - groups.keys.begin()), t);
    }
  }
  std::vector<int> out(scores.size());
  for (std::size_t r = 0; r < scores.size(); ++r) {
    double t = policy.default_threshold;
    for (const auto& [g, gt] : ranked) {
      if (groups.contains(r, g)) {
        t = gt;
        break;
      }
    }
    out[r] = scores[r] > t ? 1 : 0;
  }
  return out;
}

}  // namespace phiml
