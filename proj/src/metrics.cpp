#include "phiml/metrics.hpp"

#include <algorithm>

#include "phiml/errors.hpp"

namespace phiml {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
  if (a != b) throw UsageError("prediction and label counts differ");
}

double mean_rate(const GroupReport& report, const std::vector<std::string>& keys) {
  double total = 0.0;
  for (const auto& key : keys) {
    const GroupStat* g = report.find(key);
    if (!g) throw UsageError("group not present in report: " + key);
    total += g->positive_rate;
  }
  return keys.empty() ? 0.0 : total / static_cast<double>(keys.size());
}

}  // namespace

double accuracy(std::span<const double> predictions, std::span<const double> labels) {
  check_lengths(predictions.size(), labels.size());
  if (labels.empty()) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double mean_squared_error(std::span<const double> predictions, std::span<const double> labels) {
  check_lengths(predictions.size(), labels.size());
  if (labels.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) total += (labels[i] - predictions[i]) * (labels[i] - predictions[i]);
  return total / static_cast<double>(labels.size());
}

double evaluate(std::span<const double> predictions, std::span<const double> labels, Task task) {
  return task == Task::classification ? accuracy(predictions, labels) : mean_squared_error(predictions, labels);
}

const GroupStat* GroupReport::find(const std::string& key) const {
  for (const auto& g : groups) {
    if (g.key() == key) return &g;
  }
  return nullptr;
}

nlohmann::json GroupReport::to_json() const {
  nlohmann::json gs = nlohmann::json::array();
  for (const auto& g : groups) {
    gs.push_back({{"feature", g.feature},
                  {"value", g.value},
                  {"size", g.size},
                  {"accuracy", g.accuracy},
                  {"positive_rate", g.positive_rate},
                  {"below_min_size", g.small}});
  }
  nlohmann::json ds = nlohmann::json::object();
  for (const auto& d : disparities) ds[d.feature] = d.value;
  return {{"groups", std::move(gs)}, {"disparity", std::move(ds)}, {"accuracy", accuracy},
          {"positive_rate", positive_rate}};
}

GroupReport group_report(std::span<const double> decisions, std::span<const double> labels, const Groups& groups,
                         std::size_t min_group_size) {
  check_lengths(decisions.size(), labels.size());
  if (groups.rows() != decisions.size() && groups.count() > 0) throw UsageError("group rows differ from decisions");
  const std::size_t k = groups.count();
  std::vector<double> sizes(k, 0.0), hits(k, 0.0), positives(k, 0.0);
  double all_hits = 0.0, all_pos = 0.0;
  for (std::size_t r = 0; r < decisions.size(); ++r) {
    const bool ok = decisions[r] == labels[r];
    const bool pos = decisions[r] == 1.0;
    all_hits += ok ? 1.0 : 0.0;
    all_pos += pos ? 1.0 : 0.0;
    if (k == 0) continue;
    for (int g : groups.of(r)) {
      sizes[g] += 1.0;
      hits[g] += ok ? 1.0 : 0.0;
      positives[g] += pos ? 1.0 : 0.0;
    }
  }
  GroupReport report;
  const double n = static_cast<double>(decisions.size());
  report.accuracy = decisions.empty() ? 0.0 : all_hits / n;
  report.positive_rate = decisions.empty() ? 0.0 : all_pos / n;
  for (std::size_t g = 0; g < k; ++g) {
    const auto& key = groups.keys[g];
    GroupStat s;
    s.feature = groups.features[g];
    s.value = key.substr(s.feature.size() + 1);
    s.size = static_cast<std::size_t>(sizes[g]);
    s.accuracy = sizes[g] > 0.0 ? hits[g] / sizes[g] : 0.0;
    s.positive_rate = sizes[g] > 0.0 ? positives[g] / sizes[g] : 0.0;
    s.small = s.size < min_group_size || s.size == 0;
    report.groups.push_back(std::move(s));
  }
  for (const auto& g : report.groups) {
    auto it = std::find_if(report.disparities.begin(), report.disparities.end(),
                           [&](const Disparity& d) { return d.feature == g.feature; });
    if (it == report.disparities.end()) report.disparities.push_back({g.feature, 0.0});
  }
  for (auto& d : report.disparities) {
    double lo = 1.0, hi = 0.0;
    bool any = false;
    for (const auto& g : report.groups) {
      if (g.feature != d.feature || g.small) continue;
      lo = std::min(lo, g.accuracy);
      hi = std::max(hi, g.accuracy);
      any = true;
    }
    d.value = any ? hi - lo : 0.0;
  }
  return report;
}

nlohmann::json EquityDeltas::to_json() const {
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  return {{"worst_off_groups", worst_off},
          {"best_off_groups", best_off},
          {"base_worst_off_rate", base_worst_rate},
          {"base_best_off_rate", base_best_rate},
          {"treated_worst_off_rate", treated_worst_rate},
          {"treated_best_off_rate", treated_best_rate},
          {"worst_off_rate_improvement_pct", opt(worst_off_rate_improvement_pct)},
          {"gap_reduction_pct", opt(gap_reduction_pct)},
          {"overall_accuracy_delta", overall_accuracy_delta}};
}

std::vector<std::string> best_off_groups(const GroupReport& base, const std::vector<std::string>& worst_off,
                                         std::size_t min_group_size) {
  std::vector<const GroupStat*> pool;
  for (const auto& g : base.groups) {
    if (g.size < min_group_size || g.size == 0) continue;
    if (std::find(worst_off.begin(), worst_off.end(), g.key()) != worst_off.end()) continue;
    pool.push_back(&g);
  }
  std::stable_sort(pool.begin(), pool.end(),
                   [](const GroupStat* a, const GroupStat* b) { return a->accuracy > b->accuracy; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(worst_off.size(), pool.size()); ++i) out.push_back(pool[i]->key());
  return out;
}

EquityDeltas equity_deltas(const GroupReport& base, const GroupReport& treated,
                           const std::vector<std::string>& worst_off, std::size_t min_group_size) {
  return equity_deltas(base, treated, worst_off, best_off_groups(base, worst_off, min_group_size));
}

EquityDeltas equity_deltas(const GroupReport& base, const GroupReport& treated,
                           const std::vector<std::string>& worst_off, const std::vector<std::string>& best_off) {
  EquityDeltas out;
  out.worst_off = worst_off;
  out.best_off = best_off;
  out.overall_accuracy_delta = treated.accuracy - base.accuracy;
  if (worst_off.empty()) return out;
  out.base_worst_rate = mean_rate(base, worst_off);
  out.treated_worst_rate = mean_rate(treated, worst_off);
  if (out.base_worst_rate != 0.0) {
    out.worst_off_rate_improvement_pct = (out.treated_worst_rate - out.base_worst_rate) / out.base_worst_rate * 100.0;
  }
  if (best_off.empty()) return out;
  out.base_best_rate = mean_rate(base, best_off);
  out.treated_best_rate = mean_rate(treated, best_off);
  const double base_gap = out.base_best_rate - out.base_worst_rate;
  const double treated_gap = out.treated_best_rate - out.treated_worst_rate;
  if (base_gap != 0.0) out.gap_reduction_pct = (base_gap - treated_gap) / base_gap * 100.0;
  return out;
}

}  // namespace phiml
