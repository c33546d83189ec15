#include "phiml/intrinsic.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "phiml/enforcers.hpp"
#include "phiml/errors.hpp"
#include "phiml/linear.hpp"

namespace phiml {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

void check_weights(std::initializer_list<double> weights, const char* what) {
  double total = 0.0;
  for (double w : weights) {
    if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError(std::string(what) + " weights must be non-negative");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw UsageError(std::string(what) + " weights must sum to 1");
}

void check_lambda(double lambda) {
  if (!(lambda >= 0.0 && lambda <= 1.0)) throw UsageError("lambda must lie in [0,1]");
}

std::size_t classes_for(const Dataset& data, const ConstraintSet& cs) {
  std::size_t k = std::max<std::size_t>(2, count_classes(data.labels));
  cs.validate(k);
  return k;
}

}  // namespace

const char* to_string(Family family) {
  switch (family) {
    case Family::forest:
      return "forest";
    case Family::linear:
      return "linear";
    case Family::mlp:
      return "mlp";
  }
  return "forest";
}

Family family_from_string(const std::string& name) {
  if (name == "forest") return Family::forest;
  if (name == "linear" || name == "logistic") return Family::linear;
  if (name == "mlp") return Family::mlp;
  throw UsageError("unknown learner: " + name + " (expected forest, linear or mlp)");
}

FittedModel fit_base(const LearnerSpec& spec, const Dataset& data, Task task) {
  switch (spec.family) {
    case Family::forest:
      return fit_forest(data, spec.forest, task);
    case Family::linear:
      return fit_linear(data, task, spec.forest.seed);
    case Family::mlp:
      if (task != Task::classification) throw UsageError("the network learner only supports classification");
      return fit_mlp(data, spec.mlp);
  }
  throw UsageError("unknown learner");
}

ClassScores logic_layer(const ClassScores& scores, const ConstraintSet& cs) {
  if (cs.empty()) return scores;
  return apply_implication_transfer(apply_mutual_exclusion(scores, cs), cs);
}

LogicLayerModel::LogicLayerModel(FittedModel inner, ConstraintSet cs) : inner_(std::move(inner)), cs_(std::move(cs)) {
  if (inner_.task() != Task::classification) throw UsageError("the logic layer wraps classifiers only");
  cs_.validate(inner_.n_classes());
}

ClassScores LogicLayerModel::scores(const Matrix& x) const { return logic_layer(inner_.class_scores(x), cs_); }

nlohmann::json LogicLayerModel::to_json() const {
  return {{"type", "logic_layer"}, {"inner", inner_.predictor().to_json()}, {"constraints", phiml::to_json(cs_)}};
}

void ConstraintLossConfig::validate() const {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) throw UsageError("lambda must be finite and non-negative");
  if (!(alpha >= 0.0) || !std::isfinite(alpha)) throw UsageError("alpha must be finite and non-negative");
  if (rounds < 1) throw UsageError("rounds must be at least 1");
}

std::vector<double> violation_weights(const ClassScores& scores, const ConstraintSet& cs, double alpha) {
  std::vector<double> w(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) w[r] = std::exp(-alpha * exclusion_violation_mass(scores.row(r), cs));
  return w;
}

namespace {

// d V / d score for each active exclusion pair: the smaller score of the pair
// carries the whole subgradient (the first class on ties).
template <class Fn>
void for_each_active_min(std::span<const double> row, const ConstraintSet& cs, Fn&& fn) {
  for (auto p : cs.exclusions) {
    if (!(row[p.a] > cs.tau && row[p.b] > cs.tau)) continue;
    fn(row[p.b] < row[p.a] ? p.b : p.a);
  }
}

}  // namespace

FittedModel constraint_aware_fit(const LearnerSpec& spec, const Dataset& data, const ConstraintSet& cs,
                                 const ConstraintLossConfig& config) {
  config.validate();
  if (data.empty()) throw DataError("cannot fit on empty data");
  const std::size_t k = classes_for(data, cs);

  switch (spec.family) {
    case Family::forest: {
      ForestExtras extras;
      extras.n_classes = k;
      ClassScores oob;
      extras.oob_scores = &oob;
      FittedModel model = fit_forest(data.features, data.labels, spec.forest, Task::classification, extras);
      std::vector<double> weights;
      for (std::size_t round = 0; round < config.rounds; ++round) {
        weights = violation_weights(oob, cs, config.alpha);
        extras.sample_weights = weights;
        model = fit_forest(data.features, data.labels, spec.forest, Task::classification, extras);
      }
      return model;
    }
    case Family::linear: {
      LogisticOptions options;
      options.n_classes = k;
      if (config.lambda > 0.0) {
        auto plain = fit_logistic(data.features, data.labels, options);
        if (auto* lm = dynamic_cast<const LogisticModel*>(&plain.predictor())) options.initial_weights = lm->weights();
        const double lambda = config.lambda;
        options.penalty = [cs, lambda](const ClassScores& scores, Matrix& grad) {
          const double scale = lambda / static_cast<double>(scores.rows());
          double value = 0.0;
          for (std::size_t r = 0; r < scores.rows(); ++r) {
            auto row = scores.row(r);
            value += scale * exclusion_violation_mass(row, cs);
            for_each_active_min(row, cs, [&](std::size_t c) { grad(r, c) += scale; });
          }
          return value;
        };
      }
      return fit_logistic(data.features, data.labels, options);
    }
    case Family::mlp: {
      if (config.lambda == 0.0) return fit_mlp(data, spec.mlp);
      MlpParams params = spec.mlp;
      auto plain = fit_mlp(data, spec.mlp);
      params.initial_parameters = dynamic_cast<const MlpModel&>(plain.predictor()).network().parameters();
      const double lambda = config.lambda;
      params.loss = [cs, lambda](std::span<const double> logits, std::span<const double> labels,
                                 std::span<const std::size_t> rows) {
        LossEval eval = mean_bce_loss(logits, labels, rows);
        const double scale = lambda / static_cast<double>(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) {
          double p = sigmoid(logits[i]);
          double row[2] = {1.0 - p, p};
          eval.value += scale * exclusion_violation_mass(row, cs);
          const double dp = p * (1.0 - p);
          for_each_active_min(row, cs, [&](std::size_t c) { eval.grad[i] += scale * (c == 1 ? dp : -dp); });
        }
        return eval;
      };
      return fit_mlp(data, params);
    }
  }
  throw UsageError("unknown learner");
}

LossEval logic_layer_loss(std::span<const double> logits, std::span<const double> labels, const ConstraintSet& cs) {
  constexpr double kFloor = 1e-12;
  LossEval out;
  out.grad.resize(logits.size());
  const double inv_n = 1.0 / static_cast<double>(logits.size());
  Matrix jac(2, 2);
  for (std::size_t i = 0; i < logits.size(); ++i) {
    const double p = sigmoid(logits[i]);
    double row[2] = {1.0 - p, p};
    jac(0, 0) = 1.0, jac(0, 1) = 0.0, jac(1, 0) = 0.0, jac(1, 1) = 1.0;
    mutual_exclusion_row(row, cs, &jac);
    implication_transfer_row(row, cs, &jac);
    const std::size_t c = labels[i] == 1.0 ? 1 : 0;
    const double q = std::max(row[c], kFloor);
    out.value -= std::log(q) * inv_n;
    if (row[c] > kFloor) {
      const double dp = p * (1.0 - p);
      const double dq = jac(c, 1) * dp - jac(c, 0) * dp;
      out.grad[i] = -dq / q * inv_n;
    }
  }
  return out;
}

FittedModel logic_guided_fit(const LearnerSpec& spec, const Dataset& data, const ConstraintSet& cs) {
  if (data.empty()) throw DataError("cannot fit on empty data");
  classes_for(data, cs);
  if (cs.empty()) return fit_base(spec, data, Task::classification);
  if (spec.family != Family::mlp) {
    return FittedModel(std::make_shared<LogicLayerModel>(fit_base(spec, data, Task::classification), cs));
  }
  MlpParams params = spec.mlp;
  params.loss = [cs](std::span<const double> logits, std::span<const double> labels, std::span<const std::size_t>) {
    return logic_layer_loss(logits, labels, cs);
  };
  return FittedModel(std::make_shared<LogicLayerModel>(fit_mlp(data, params), cs));
}

void RawlsianForestConfig::validate() const {
  check_lambda(lambda);
  check_weights({minimax_weight, average_weight}, "Rawlsian impurity");
}

double rawlsian_impurity(const NodeStats& node, const RawlsianForestConfig& config) {
  const double gini = gini_from_counts(node.class_counts);
  double worst = 0.0, mean = 0.0;
  std::size_t qualifying = 0;
  for (std::size_t g = 0; g < node.n_groups; ++g) {
    auto counts = node.group(g);
    double size = 0.0;
    for (double c : counts) size += c;
    if (size <= 0.0 || size < static_cast<double>(config.min_group_size)) continue;
    double ig = gini_from_counts(counts);
    worst = qualifying == 0 ? ig : std::max(worst, ig);
    mean += ig;
    ++qualifying;
  }
  if (qualifying == 0) return gini;
  mean /= static_cast<double>(qualifying);
  return (1.0 - config.lambda) * gini + config.lambda * (config.minimax_weight * worst + config.average_weight * mean);
}

FittedModel rawlsian_forest_fit(const Dataset& data, const Groups& groups, const ForestParams& params,
                                const RawlsianForestConfig& config) {
  config.validate();
  if (groups.count() == 0 || groups.rows() != data.size()) {
    throw UsageError("group membership is required for every training row");
  }
  ForestParams p = params;
  p.impurity = [config](const NodeStats& node) { return rawlsian_impurity(node, config); };
  ForestExtras extras;
  extras.groups = &groups;
  return fit_forest(data.features, data.labels, p, Task::classification, extras);
}

void RawlsianLossConfig::validate() const {
  check_lambda(lambda);
  check_weights({minimax_weight, average_weight, variance_weight}, "Rawlsian loss");
}

double rawlsian_objective(std::span<const double> group_losses, const RawlsianLossConfig& config) {
  if (group_losses.empty()) throw UsageError("no group losses to aggregate");
  const double n = static_cast<double>(group_losses.size());
  double worst = group_losses[0], mean = 0.0;
  for (double l : group_losses) {
    worst = std::max(worst, l);
    mean += l;
  }
  mean /= n;
  double var = 0.0;
  for (double l : group_losses) var += (l - mean) * (l - mean);
  var /= n;
  return config.minimax_weight * worst + config.average_weight * mean + config.variance_weight * var;
}

LossEval rawlsian_loss(std::span<const double> logits, std::span<const double> labels,
                       std::span<const std::size_t> rows, const Groups& groups, const RawlsianLossConfig& config) {
  const std::size_t batch = logits.size();
  const double inv_b = 1.0 / static_cast<double>(batch);
  auto terms = bce_terms(logits, labels);
  double bce = 0.0;
  for (double t : terms) bce += t * inv_b;

  std::vector<double> sums(groups.count(), 0.0), sizes(groups.count(), 0.0);
  for (std::size_t b = 0; b < batch; ++b) {
    for (int g : groups.of(rows[b])) {
      sums[g] += terms[b];
      sizes[g] += 1.0;
    }
  }
  std::vector<std::size_t> used;
  std::vector<double> losses;
  for (std::size_t g = 0; g < groups.count(); ++g) {
    if (sizes[g] > 0.0 && sizes[g] >= static_cast<double>(config.min_group_size)) {
      used.push_back(g);
      losses.push_back(sums[g] / sizes[g]);
    }
  }

  // d psi / d term_b
  std::vector<double> dpsi(batch, 0.0);
  double psi = bce;
  if (losses.empty()) {
    std::fill(dpsi.begin(), dpsi.end(), inv_b);
  } else {
    psi = rawlsian_objective(losses, config);
    const double m = static_cast<double>(losses.size());
    double mean = 0.0;
    for (double l : losses) mean += l / m;
    std::size_t arg = 0;
    for (std::size_t j = 1; j < losses.size(); ++j) {
      if (losses[j] > losses[arg]) arg = j;
    }
    std::vector<double> dgroup(groups.count(), 0.0);
    for (std::size_t j = 0; j < losses.size(); ++j) {
      double d = config.average_weight / m + config.variance_weight * 2.0 * (losses[j] - mean) / m;
      if (j == arg) d += config.minimax_weight;
      dgroup[used[j]] = d / sizes[used[j]];
    }
    for (std::size_t b = 0; b < batch; ++b) {
      for (int g : groups.of(rows[b])) dpsi[b] += dgroup[g];
    }
  }

  LossEval out;
  out.value = config.lambda * psi + (1.0 - config.lambda) * bce;
  out.grad.resize(batch);
  for (std::size_t b = 0; b < batch; ++b) {
    double dterm = config.lambda * dpsi[b] + (1.0 - config.lambda) * inv_b;
    out.grad[b] = dterm * (sigmoid(logits[b]) - labels[b]);
  }
  return out;
}

FittedModel rawlsian_mlp_fit(const Dataset& data, const Groups& groups, const MlpParams& params,
                             const RawlsianLossConfig& config) {
  config.validate();
  if (groups.count() == 0 || groups.rows() != data.size()) {
    throw UsageError("group membership is required for every training row");
  }
  if (config.lambda == 0.0) return fit_mlp(data, params);
  MlpParams p = params;
  p.loss = [groups, config](std::span<const double> logits, std::span<const double> labels,
                            std::span<const std::size_t> rows) {
    return rawlsian_loss(logits, labels, rows, groups, config);
  };
  return fit_mlp(data, p);
}

EnvEnsembleModel::EnvEnsembleModel(std::vector<FittedModel> experts, FittedModel meta)
    : experts_(std::move(experts)), meta_(std::move(meta)) {
  if (experts_.size() < 2) throw UsageError("an environment ensemble needs at least two experts");
  for (const auto& e : experts_) {
    if (e.task() != Task::regression || e.input_dims() != experts_.front().input_dims()) {
      throw UsageError("experts must be regressors over the same features");
    }
  }
  if (meta_.task() != Task::regression || meta_.input_dims() != experts_.size() + 1) {
    throw UsageError("meta-model must be a regressor over expert outputs and the environment id");
  }
}

Matrix EnvEnsembleModel::meta_inputs(const Matrix& x) const {
  const std::size_t d = experts_.front().input_dims();
  if (x.cols() != d + 1) throw UsageError("ensemble input must carry the environment id as its last column");
  Matrix features(x.rows(), d);
  for (std::size_t r = 0; r < x.rows(); ++r) std::copy_n(x.row(r).begin(), d, features.row(r).begin());
  Matrix out(x.rows(), experts_.size() + 1);
  for (std::size_t e = 0; e < experts_.size(); ++e) {
    auto preds = experts_[e].predict(features);
    for (std::size_t r = 0; r < x.rows(); ++r) out(r, e) = preds[r];
  }
  for (std::size_t r = 0; r < x.rows(); ++r) out(r, experts_.size()) = x(r, d);
  return out;
}

std::vector<double> EnvEnsembleModel::values(const Matrix& x) const { return meta_.predict(meta_inputs(x)); }

nlohmann::json EnvEnsembleModel::to_json() const {
  nlohmann::json experts = nlohmann::json::array();
  for (const auto& e : experts_) experts.push_back(e.predictor().to_json());
  return {{"type", "env_ensemble"}, {"experts", std::move(experts)}, {"meta", meta_.predictor().to_json()}};
}

Matrix with_environment(const Dataset& data) {
  if (!data.environment) throw UsageError("dataset has no environment column");
  std::vector<double> env(data.environment->begin(), data.environment->end());
  return data.features.with_column(env);
}

FittedModel env_ensemble_fit(const Dataset& data, std::span<const int> train_envs, const LearnerSpec& spec) {
  if (!data.environment) throw UsageError("dataset has no environment column");
  std::vector<int> envs(train_envs.begin(), train_envs.end());
  std::sort(envs.begin(), envs.end());
  envs.erase(std::unique(envs.begin(), envs.end()), envs.end());
  if (envs.size() < 2) throw UsageError("the environment ensemble needs at least two training environments");
  if (spec.family == Family::mlp) throw UsageError("the environment ensemble supports forest and linear learners");

  std::vector<FittedModel> experts;
  std::vector<std::size_t> pooled;
  for (int e : envs) {
    std::vector<std::size_t> rows;
    for (std::size_t r = 0; r < data.size(); ++r) {
      if ((*data.environment)[r] == e) rows.push_back(r);
    }
    if (rows.empty()) throw DataError("training environment " + std::to_string(e) + " has no rows");
    experts.push_back(fit_base(spec, data.subset(rows), Task::regression));
    pooled.insert(pooled.end(), rows.begin(), rows.end());
  }
  std::sort(pooled.begin(), pooled.end());

  Dataset train = data.subset(pooled);
  // Temporary ensemble with a placeholder meta-model, used to build meta inputs.
  std::vector<double> zeros(experts.size() + 1, 0.0);
  EnvEnsembleModel probe(experts, FittedModel(std::make_shared<LinearRegressionModel>(zeros, 0.0)));
  Dataset meta_data;
  meta_data.features = probe.meta_inputs(with_environment(train));
  meta_data.labels = train.labels;
  FittedModel meta = fit_base(spec, meta_data, Task::regression);
  return FittedModel(std::make_shared<EnvEnsembleModel>(std::move(experts), std::move(meta)));
}

}  // namespace phiml
