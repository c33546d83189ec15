#include "phiml/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <ostream>
#include <set>
#include <sstream>

#include "phiml/constraints.hpp"
#include "phiml/datagen.hpp"
#include "phiml/enforcers.hpp"
#include "phiml/errors.hpp"
#include "phiml/intrinsic.hpp"
#include "phiml/metrics.hpp"
#include "phiml/random.hpp"

namespace phiml {

namespace {

struct Combination {
  std::string scenario;
  std::vector<std::pair<std::string, std::vector<std::string>>> models;  // model -> modes
};

const std::vector<Combination>& combinations() {
  static const std::vector<Combination> table = {
      {"exclusion", {{"forest", {"baseline", "posthoc"}}, {"linear", {"baseline", "posthoc"}}, {"mlp", {"baseline", "posthoc"}}}},
      {"hierarchy", {{"forest", {"baseline", "posthoc"}}, {"linear", {"baseline", "posthoc"}}}},
      {"constraint-loss",
       {{"forest", {"baseline", "intrinsic"}}, {"linear", {"baseline", "intrinsic"}}, {"mlp", {"baseline", "intrinsic"}}}},
      {"logic-arch", {{"forest", {"baseline", "intrinsic"}}, {"linear", {"baseline", "intrinsic"}}}},
      {"counterfactual", {{"forest", {"baseline", "posthoc"}}, {"linear", {"baseline", "posthoc"}}}},
      {"env-ensemble", {{"forest", {"baseline", "intrinsic"}}, {"linear", {"baseline", "intrinsic"}}}},
      {"hiring",
       {{"forest", {"baseline", "posthoc", "intrinsic"}},
        {"linear", {"baseline", "posthoc"}},
        {"mlp", {"baseline", "posthoc", "intrinsic"}}}},
  };
  return table;
}

const std::set<std::string>& known_params() {
  static const std::set<std::string> keys = {
      "n",           "tau",          "rho",           "lambda",         "alpha",
      "rounds",      "tau_cf",       "ambiguous_frac", "n_trees",       "max_depth",
      "epochs",      "hidden_dim",   "hidden_layers", "dropout_rate",   "learning_rate",
      "batch_size",  "min_group_size", "threshold_step", "min_accuracy_retention", "per_group_mode",
      "validation_split", "test_fraction", "worst_off_fraction", "max_worst_off_groups"};
  return keys;
}

// Typed access to the override table; every value read is echoed into the report.
class Params {
 public:
  explicit Params(const std::map<std::string, std::string>& raw) : raw_(raw) {}

  double real(const std::string& key, double fallback) {
    double v = fallback;
    if (auto it = raw_.find(key); it != raw_.end()) {
      const auto& s = it->second;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
        throw UsageError("parameter " + key + " expects a number, got '" + s + "'");
      }
    }
    used_[key] = v;
    return v;
  }

  std::int64_t integer(const std::string& key, std::int64_t fallback) {
    std::int64_t v = fallback;
    if (auto it = raw_.find(key); it != raw_.end()) {
      const auto& s = it->second;
      auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || ptr != s.data() + s.size()) {
        throw UsageError("parameter " + key + " expects an integer, got '" + s + "'");
      }
    }
    used_[key] = v;
    return v;
  }

  std::size_t count(const std::string& key, std::size_t fallback) {
    auto v = integer(key, static_cast<std::int64_t>(fallback));
    if (v < 0) throw UsageError("parameter " + key + " must be non-negative");
    return static_cast<std::size_t>(v);
  }

  bool flag(const std::string& key, bool fallback) {
    bool v = fallback;
    if (auto it = raw_.find(key); it != raw_.end()) {
      const auto& s = it->second;
      if (s == "true" || s == "1") {
        v = true;
      } else if (s == "false" || s == "0") {
        v = false;
      } else {
        throw UsageError("parameter " + key + " expects true or false, got '" + s + "'");
      }
    }
    used_[key] = v;
    return v;
  }

  const nlohmann::json& used() const { return used_; }

 private:
  const std::map<std::string, std::string>& raw_;
  nlohmann::json used_ = nlohmann::json::object();
};

std::int64_t default_size(const std::string& scenario) {
  if (scenario == "counterfactual") return 600;
  if (scenario == "env-ensemble") return 250;
  if (scenario == "hiring") return 1500;
  return 500;
}

LearnerSpec learner_spec(const RunConfig& config, Params& p) {
  LearnerSpec spec;
  spec.family = family_from_string(config.model);
  spec.forest.seed = config.seed;
  if (spec.family == Family::forest) {
    spec.forest.n_trees = p.count("n_trees", spec.forest.n_trees);
    spec.forest.max_depth = p.count("max_depth", spec.forest.max_depth);
  }
  if (spec.family == Family::mlp) {
    spec.mlp.seed = config.seed;
    spec.mlp.epochs = p.count("epochs", spec.mlp.epochs);
    spec.mlp.hidden_dim = p.count("hidden_dim", spec.mlp.hidden_dim);
    spec.mlp.hidden_layers = p.count("hidden_layers", spec.mlp.hidden_layers);
    spec.mlp.dropout_rate = p.real("dropout_rate", spec.mlp.dropout_rate);
    spec.mlp.learning_rate = p.real("learning_rate", spec.mlp.learning_rate);
    spec.mlp.batch_size = p.count("batch_size", spec.mlp.batch_size);
  }
  return spec;
}

ConstraintSet scenario_constraints(const std::string& scenario, Params& p) {
  ConstraintSet cs;
  cs.tau = p.real("tau", cs.tau);
  cs.rho = p.real("rho", cs.rho);
  if (scenario == "exclusion" || scenario == "constraint-loss") {
    cs.exclusions = {{0, 1}};
  } else {
    // severe -> moderate -> mild, declared root first
    cs.implications = {{2, 1}, {1, 0}};
    if (scenario == "logic-arch") cs.exclusions = {{0, 2}};
  }
  return cs;
}

Dataset dataset_for(const RunConfig& config, const Dataset* data, Params& p) {
  if (data) {
    data->validate();
    return *data;
  }
  std::int64_t n = p.integer("n", default_size(config.scenario));
  if (n < 0) throw UsageError("n must be non-negative");
  if (config.scenario == "exclusion" || config.scenario == "constraint-loss") {
    return gen_exclusion_dataset(config.seed, n, p.real("ambiguous_frac", 0.15));
  }
  return generate_scenario(config.scenario, config.seed, n);
}

std::vector<double> positive_scores(const FittedModel& model, const Matrix& x) {
  ClassScores s = model.class_scores(x);
  std::vector<double> out(s.rows());
  for (std::size_t r = 0; r < s.rows(); ++r) out[r] = s(r, 1);
  return out;
}

std::vector<double> as_doubles(const std::vector<int>& v) { return {v.begin(), v.end()}; }

void require_rows(const Dataset& d, const char* what) {
  if (d.empty()) throw DataError(std::string(what) + " split is empty");
}

double max_disparity(const GroupReport& r) {
  double m = 0.0;
  for (const auto& d : r.disparities) m = std::max(m, d.value);
  return m;
}

nlohmann::json disparity_json(const GroupReport& r) {
  nlohmann::json out = nlohmann::json::object();
  for (const auto& d : r.disparities) out[d.feature] = d.value;
  return out;
}

void run_logic(const RunConfig& config, const Dataset& data, Params& p, RunResult& result) {
  auto& report = result.report;
  auto& metrics = report["metrics"];
  const std::size_t k = std::max<std::size_t>(2, count_classes(data.labels));
  if (config.scenario != "exclusion" && config.scenario != "constraint-loss" && k < 3) {
    throw DataError("hierarchy scenarios need three classes");
  }
  ConstraintSet cs = scenario_constraints(config.scenario, p);
  cs.validate(k);
  LearnerSpec spec = learner_spec(config, p);
  const double test_fraction = p.real("test_fraction", 0.3);
  Split split = split_rows(data.labels, test_fraction, true, derive_seed(config.seed, "split"));
  Dataset train = data.subset(split.train), test = data.subset(split.test);
  require_rows(train, "training");
  require_rows(test, "test");

  const bool implication_primary = config.scenario == "hierarchy" || config.scenario == "logic-arch";
  auto primary_rate = [&](const ClassScores& s) {
    return implication_primary ? implication_violation_rate(s, cs) : exclusion_violation_rate(s, cs);
  };

  FittedModel baseline = fit_base(spec, train, Task::classification);
  ClassScores before = baseline.class_scores(test.features);
  const double acc0 = accuracy(argmax_labels(before), test.labels);
  metrics["accuracy_baseline"] = acc0;
  metrics["violation_rate_before"] = primary_rate(before);
  if (config.scenario == "logic-arch") metrics["exclusion_violation_rate_before"] = exclusion_violation_rate(before, cs);
  result.model = baseline;
  if (config.mode == "baseline") {
    metrics["accuracy"] = acc0;
    return;
  }

  ClassScores after;
  if (config.mode == "posthoc") {
    after = config.scenario == "exclusion" ? apply_mutual_exclusion(before, cs) : apply_implication_transfer(before, cs);
    result.model = FittedModel(std::make_shared<LogicLayerModel>(
        baseline, config.scenario == "exclusion" ? ConstraintSet{cs.exclusions, {}, cs.tau, cs.rho}
                                                 : ConstraintSet{{}, cs.implications, cs.tau, cs.rho}));
  } else if (config.scenario == "constraint-loss") {
    ConstraintLossConfig lc;
    lc.lambda = p.real("lambda", lc.lambda);
    lc.alpha = p.real("alpha", lc.alpha);
    lc.rounds = p.count("rounds", lc.rounds);
    result.model = constraint_aware_fit(spec, train, cs, lc);
    after = result.model.class_scores(test.features);
  } else {
    result.model = logic_guided_fit(spec, train, cs);
    after = result.model.class_scores(test.features);
  }
  const double acc1 = accuracy(argmax_labels(after), test.labels);
  metrics["accuracy"] = acc1;
  metrics["accuracy_delta"] = acc1 - acc0;
  metrics["violation_rate_after"] = primary_rate(after);
  if (config.scenario == "logic-arch") metrics["exclusion_violation_rate_after"] = exclusion_violation_rate(after, cs);
}

Matrix with_treatment(const Matrix& x, std::span<const int> t) {
  std::vector<double> col(t.begin(), t.end());
  return x.with_column(col);
}

void run_counterfactual(const RunConfig& config, const Dataset& data, Params& p, RunResult& result) {
  if (!data.treatment) throw DataError("counterfactual scenario needs a treatment column");
  auto& metrics = result.report["metrics"];
  RepairConfig rc;
  rc.tau_cf = p.real("tau_cf", rc.tau_cf);
  rc.validate();
  LearnerSpec spec = learner_spec(config, p);
  const double test_fraction = p.real("test_fraction", 0.3);
  Split split = split_rows(data.labels, test_fraction, false, derive_seed(config.seed, "split"));
  Dataset train = data.subset(split.train), test = data.subset(split.test);
  require_rows(train, "training");
  require_rows(test, "test");

  Dataset train_in = train;
  train_in.features = with_treatment(train.features, *train.treatment);
  FittedModel model = fit_base(spec, train_in, Task::regression);
  result.model = model;

  std::vector<double> factual = model.predict(with_treatment(test.features, *test.treatment));
  constexpr int kTreatments = 3;
  Matrix cf(test.size(), kTreatments - 1);
  std::vector<int> alt(test.size());
  for (int j = 0; j < kTreatments - 1; ++j) {
    for (std::size_t r = 0; r < test.size(); ++r) {
      int actual = (*test.treatment)[r];
      alt[r] = j < actual ? j : j + 1;
    }
    auto preds = model.predict(with_treatment(test.features, alt));
    for (std::size_t r = 0; r < test.size(); ++r) cf(r, static_cast<std::size_t>(j)) = preds[r];
  }
  const double mse0 = mean_squared_error(factual, test.labels);
  metrics["mse"] = mse0;
  metrics["factual_mse_before"] = mse0;
  metrics["violation_rate_before"] = counterfactual_violation_rate(factual, cf, rc);
  if (config.mode == "baseline") return;
  Matrix repaired = repair_counterfactuals(factual, cf, rc);
  metrics["violation_rate_after"] = counterfactual_violation_rate(factual, repaired, rc);
  metrics["factual_mse_after"] = mean_squared_error(factual, test.labels);
  double moved = 0.0;
  for (std::size_t i = 0; i < cf.data().size(); ++i) moved += cf.data()[i] != repaired.data()[i] ? 1.0 : 0.0;
  metrics["counterfactuals_clamped_fraction"] = cf.data().empty() ? 0.0 : moved / static_cast<double>(cf.data().size());
}

void run_environment(const RunConfig& config, const Dataset& data, Params& p, RunResult& result) {
  if (!data.environment) throw DataError("env-ensemble scenario needs an environment column");
  auto& metrics = result.report["metrics"];
  LearnerSpec spec = learner_spec(config, p);
  const std::vector<int> train_envs = {0, 1}, test_envs = {2, 3};
  std::vector<std::size_t> train_rows, test_rows;
  for (std::size_t r = 0; r < data.size(); ++r) {
    int e = (*data.environment)[r];
    if (e == 0 || e == 1) train_rows.push_back(r);
    if (e == 2 || e == 3) test_rows.push_back(r);
  }
  Dataset train = data.subset(train_rows), test = data.subset(test_rows);
  require_rows(train, "training");
  require_rows(test, "test");

  auto env_report = [&](const std::vector<double>& preds) {
    nlohmann::json per_env = nlohmann::json::object();
    std::vector<double> mses;
    for (int e : test_envs) {
      std::vector<double> yp, yt;
      for (std::size_t r = 0; r < test.size(); ++r) {
        if ((*test.environment)[r] != e) continue;
        yp.push_back(preds[r]);
        yt.push_back(test.labels[r]);
      }
      if (yp.empty()) throw DataError("test environment " + std::to_string(e) + " has no rows");
      double m = mean_squared_error(yp, yt);
      per_env[std::to_string(e)] = m;
      mses.push_back(m);
    }
    double mean = 0.0;
    for (double m : mses) mean += m / static_cast<double>(mses.size());
    return nlohmann::json{{"per_env", per_env}, {"variance", env_mse_variance(mses)}, {"mean", mean}};
  };

  FittedModel pooled = fit_base(spec, train, Task::regression);
  result.model = pooled;
  auto before = env_report(pooled.predict(test.features));
  metrics["violation_rate_before"] = before["variance"];
  metrics["env_mse_baseline"] = before;
  if (config.mode == "baseline") {
    metrics["mse"] = before["mean"];
    metrics["env_mse"] = before;
    return;
  }
  FittedModel ensemble = env_ensemble_fit(train, train_envs, spec);
  result.model = ensemble;
  auto after = env_report(ensemble.predict(with_environment(test)));
  metrics["mse"] = after["mean"];
  metrics["env_mse"] = after;
  metrics["violation_rate_after"] = after["variance"];
}

void run_hiring(const RunConfig& config, const Dataset& data, Params& p, RunResult& result) {
  if (data.sensitive.empty()) throw DataError("hiring scenario needs sensitive attribute columns");
  if (count_classes(data.labels) > 2) throw DataError("hiring labels must be binary");
  auto& report = result.report;
  auto& metrics = report["metrics"];
  LearnerSpec spec = learner_spec(config, p);
  CalibrationConfig cc;
  cc.seed = config.seed;
  cc.min_group_size = p.count("min_group_size", cc.min_group_size);
  cc.validation_split = p.real("validation_split", cc.validation_split);
  cc.min_accuracy_retention = p.real("min_accuracy_retention", cc.min_accuracy_retention);
  cc.threshold_step = p.real("threshold_step", cc.threshold_step);
  cc.worst_off_fraction = p.real("worst_off_fraction", cc.worst_off_fraction);
  cc.max_worst_off_groups = p.count("max_worst_off_groups", cc.max_worst_off_groups);
  cc.per_group_mode = p.flag("per_group_mode", cc.per_group_mode);
  cc.validate();

  const double test_fraction = p.real("test_fraction", 0.3);
  Split outer = split_rows(data.labels, test_fraction, true, derive_seed(config.seed, "split"));
  Dataset train_all = data.subset(outer.train);
  Split inner = split_rows(train_all.labels, cc.validation_split, true, derive_seed(config.seed, "calibration"));
  Dataset fit = train_all.subset(inner.train), cal = train_all.subset(inner.test), test = data.subset(outer.test);
  require_rows(fit, "training");
  require_rows(cal, "calibration");
  require_rows(test, "test");
  const Groups g_fit = Groups::marginal(fit), g_cal = Groups::marginal(cal), g_test = Groups::marginal(test);

  FittedModel baseline = fit_base(spec, fit, Task::classification);
  result.model = baseline;
  const auto p_cal = positive_scores(baseline, cal.features);
  const auto p_test = positive_scores(baseline, test.features);
  std::vector<double> base_decisions(test.size());
  for (std::size_t r = 0; r < test.size(); ++r) base_decisions[r] = p_test[r] > 0.5 ? 1.0 : 0.0;
  GroupReport base = group_report(base_decisions, test.labels, g_test, cc.min_group_size);
  metrics["accuracy_baseline"] = base.accuracy;
  metrics["positive_rate_baseline"] = base.positive_rate;
  metrics["violation_rate_before"] = max_disparity(base);
  metrics["disparity_baseline"] = disparity_json(base);

  std::vector<int> cal_decisions(cal.size());
  for (std::size_t r = 0; r < cal.size(); ++r) cal_decisions[r] = p_cal[r] > 0.5 ? 1 : 0;
  std::vector<std::string> worst;
  for (int g : select_worst_off(group_accuracies(cal_decisions, cal.labels, g_cal), g_cal.sizes(), cc)) {
    worst.push_back(g_cal.keys[g]);
  }

  GroupReport treated = base;
  if (config.mode == "posthoc") {
    ThresholdPolicy policy = calibrate_rawlsian_thresholds(p_cal, cal.labels, g_cal, cc);
    auto decisions = as_doubles(apply_threshold_policy(p_test, g_test, policy));
    treated = group_report(decisions, test.labels, g_test, cc.min_group_size);
    report["policy"] = policy.to_json();
  } else if (config.mode == "intrinsic") {
    FittedModel model;
    if (spec.family == Family::forest) {
      RawlsianForestConfig rc;
      rc.lambda = p.real("lambda", rc.lambda);
      rc.min_group_size = cc.min_group_size;
      model = rawlsian_forest_fit(fit, g_fit, spec.forest, rc);
    } else {
      RawlsianLossConfig rc;
      rc.lambda = p.real("lambda", rc.lambda);
      rc.min_group_size = cc.min_group_size;
      model = rawlsian_mlp_fit(fit, g_fit, spec.mlp, rc);
    }
    result.model = model;
    const auto q = positive_scores(model, test.features);
    std::vector<double> decisions(test.size());
    for (std::size_t r = 0; r < test.size(); ++r) decisions[r] = q[r] > 0.5 ? 1.0 : 0.0;
    treated = group_report(decisions, test.labels, g_test, cc.min_group_size);
  }

  metrics["accuracy"] = treated.accuracy;
  metrics["positive_rate"] = treated.positive_rate;
  metrics["disparity"] = disparity_json(treated);
  report["groups"] = treated.to_json()["groups"];
  if (config.mode != "baseline") {
    metrics["accuracy_delta"] = treated.accuracy - base.accuracy;
    metrics["violation_rate_after"] = max_disparity(treated);
    report["equity"] = equity_deltas(base, treated, worst, cc.min_group_size).to_json();
  }
}

void write_json(std::ostream& out, const nlohmann::json& j, int indent) {
  const std::string pad(static_cast<std::size_t>(indent + 2), ' ');
  const std::string close(static_cast<std::size_t>(indent), ' ');
  switch (j.type()) {
    case nlohmann::json::value_t::object: {
      if (j.empty()) {
        out << "{}";
        return;
      }
      out << "{\n";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out << ",\n";
        first = false;
        out << pad << nlohmann::json(it.key()).dump() << ": ";
        write_json(out, it.value(), indent + 2);
      }
      out << "\n" << close << "}";
      return;
    }
    case nlohmann::json::value_t::array: {
      if (j.empty()) {
        out << "[]";
        return;
      }
      out << "[\n";
      for (std::size_t i = 0; i < j.size(); ++i) {
        if (i) out << ",\n";
        out << pad;
        write_json(out, j[i], indent + 2);
      }
      out << "\n" << close << "]";
      return;
    }
    case nlohmann::json::value_t::number_float: {
      double v = j.get<double>();
      if (!std::isfinite(v)) {
        out << "null";
        return;
      }
      std::string s = format_double(v);
      if (s.find_first_of(".eEn") == std::string::npos) s += ".0";
      out << s;
      return;
    }
    default:
      out << j.dump();
  }
}

std::string cell(const nlohmann::json& report, const nlohmann::json::json_pointer& ptr) {
  if (!report.contains(ptr)) return "";
  const auto& v = report.at(ptr);
  if (v.is_null()) return "";
  if (v.is_number_float()) return format_double(v.get<double>());
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

std::string csv_escape(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

const std::vector<std::string>& scenario_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& c : combinations()) v.push_back(c.scenario);
    return v;
  }();
  return names;
}

Dataset generate_scenario(const std::string& scenario, std::uint64_t seed, std::int64_t n) {
  if (n <= 0) n = n < 0 ? n : default_size(scenario);
  if (scenario == "exclusion" || scenario == "constraint-loss") return gen_exclusion_dataset(seed, n);
  if (scenario == "hierarchy" || scenario == "logic-arch") return gen_hierarchy_dataset(seed, n);
  if (scenario == "counterfactual") return gen_treatment_dataset(seed, n);
  if (scenario == "env-ensemble") return gen_environment_dataset(seed, n);
  if (scenario == "hiring") return gen_hiring_dataset(seed, n);
  throw UsageError("unknown scenario: " + scenario);
}

std::string valid_combinations() {
  std::ostringstream out;
  out << "valid scenario/model/mode combinations:\n";
  for (const auto& c : combinations()) {
    for (const auto& [model, modes] : c.models) {
      out << "  " << c.scenario << " " << model << ":";
      for (const auto& m : modes) out << " " << m;
      out << "\n";
    }
  }
  return out.str();
}

void RunConfig::validate() const {
  auto sc = std::find_if(combinations().begin(), combinations().end(),
                         [&](const Combination& c) { return c.scenario == scenario; });
  if (sc == combinations().end()) throw UsageError("unknown scenario '" + scenario + "'\n" + valid_combinations());
  auto md = std::find_if(sc->models.begin(), sc->models.end(), [&](const auto& m) { return m.first == model; });
  if (md == sc->models.end() || std::find(md->second.begin(), md->second.end(), mode) == md->second.end()) {
    throw UsageError("unsupported combination " + scenario + "/" + model + "/" + mode + "\n" + valid_combinations());
  }
  for (const auto& [key, value] : params) {
    if (!known_params().count(key)) throw UsageError("unknown parameter '" + key + "'");
  }
}

Split split_rows(std::span<const double> labels, double test_fraction, bool stratified, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("test fraction must lie in (0,1)");
  Rng rng(seed);
  std::map<double, std::vector<std::size_t>> strata;
  for (std::size_t r = 0; r < labels.size(); ++r) strata[stratified ? labels[r] : 0.0].push_back(r);
  Split split;
  for (auto& [label, rows] : strata) {
    rng.shuffle(rows);
    auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(rows.size())));
    split.test.insert(split.test.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_test));
    split.train.insert(split.train.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_test), rows.end());
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

RunResult run_experiment(const RunConfig& config, const Dataset* data) {
  config.validate();
  Params p(config.params);
  Dataset d = dataset_for(config, data, p);
  if (d.empty()) throw DataError("scenario dataset is empty");
  RunResult result;
  result.report = {{"schema_version", kReportSchemaVersion},
                   {"scenario", config.scenario},
                   {"model", config.model},
                   {"mode", config.mode},
                   {"seed", config.seed},
                   {"metrics", nlohmann::json::object()}};
  const auto& s = config.scenario;
  if (s == "counterfactual") {
    run_counterfactual(config, d, p, result);
  } else if (s == "env-ensemble") {
    run_environment(config, d, p, result);
  } else if (s == "hiring") {
    run_hiring(config, d, p, result);
  } else {
    run_logic(config, d, p, result);
  }
  result.report["params"] = p.used();
  result.report["n_rows"] = d.size();
  return result;
}

std::string dump_json(const nlohmann::json& doc) {
  std::ostringstream out;
  write_json(out, doc, 0);
  out << "\n";
  return out.str();
}

const std::vector<std::string>& summary_columns() {
  static const std::vector<std::string> cols = {
      "scenario",           "model",          "mode",           "seed",
      "accuracy",           "accuracy_baseline", "mse",          "violation_rate_before",
      "violation_rate_after", "env_mse_variance", "disparity_gender", "disparity_ethnicity",
      "disparity_ses",      "worst_off_rate_improvement_pct", "gap_reduction_pct", "policy_threshold"};
  return cols;
}

void write_summary_csv(std::ostream& out, const std::vector<nlohmann::json>& reports) {
  using ptr = nlohmann::json::json_pointer;
  const auto& cols = summary_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << "\n";
  const std::vector<ptr> paths = {ptr("/scenario"),
                                  ptr("/model"),
                                  ptr("/mode"),
                                  ptr("/seed"),
                                  ptr("/metrics/accuracy"),
                                  ptr("/metrics/accuracy_baseline"),
                                  ptr("/metrics/mse"),
                                  ptr("/metrics/violation_rate_before"),
                                  ptr("/metrics/violation_rate_after"),
                                  ptr("/metrics/env_mse/variance"),
                                  ptr("/metrics/disparity/gender"),
                                  ptr("/metrics/disparity/ethnicity"),
                                  ptr("/metrics/disparity/ses"),
                                  ptr("/equity/worst_off_rate_improvement_pct"),
                                  ptr("/equity/gap_reduction_pct"),
                                  ptr("/policy/shared_worst_off_threshold")};
  for (const auto& r : reports) {
    if (!r.is_object()) throw DataError("report is not a JSON object");
    for (std::size_t i = 0; i < paths.size(); ++i) out << (i ? "," : "") << csv_escape(cell(r, paths[i]));
    out << "\n";
  }
}

}  // namespace phiml
