#include "phiml/model.hpp"

#include "phiml/errors.hpp"
#include "phiml/forest.hpp"
#include "phiml/intrinsic.hpp"
#include "phiml/linear.hpp"
#include "phiml/mlp.hpp"

namespace phiml {

const char* to_string(Task task) { return task == Task::classification ? "classification" : "regression"; }

Task task_from_string(const std::string& name) {
  if (name == "classification") return Task::classification;
  if (name == "regression") return Task::regression;
  throw UsageError("unknown task: " + name);
}

ClassScores Predictor::scores(const Matrix&) const {
  throw UsageError("class scores are only defined for classification models");
}

std::vector<double> Predictor::values(const Matrix&) const {
  throw UsageError("point values are only defined for regression models");
}

FittedModel::FittedModel(std::shared_ptr<const Predictor> impl) : impl_(std::move(impl)) {}

const Predictor& FittedModel::predictor() const {
  if (!impl_) throw UsageError("model has not been fitted");
  return *impl_;
}

Task FittedModel::task() const { return predictor().task(); }
std::size_t FittedModel::input_dims() const { return predictor().input_dims(); }
std::size_t FittedModel::n_classes() const { return predictor().n_classes(); }

void FittedModel::check_input(const Matrix& x) const {
  if (x.cols() != predictor().input_dims()) {
    throw UsageError("expected " + std::to_string(predictor().input_dims()) + " feature columns, got " +
                     std::to_string(x.cols()));
  }
}

ClassScores FittedModel::class_scores(const Matrix& x) const {
  check_input(x);
  if (task() != Task::classification) throw UsageError("class scores are only defined for classification models");
  return impl_->scores(x);
}

std::vector<double> FittedModel::predict(const Matrix& x) const {
  check_input(x);
  if (task() == Task::classification) return argmax_labels(impl_->scores(x));
  return impl_->values(x);
}

nlohmann::json FittedModel::to_json() const {
  return {{"format_version", kModelFormatVersion}, {"model", predictor().to_json()}};
}

namespace {

std::shared_ptr<const Predictor> predictor_from_json(const nlohmann::json& doc) {
  const auto type = doc.at("type").get<std::string>();
  if (type == "forest") return ForestModel::from_json(doc);
  if (type == "linear_regression") return LinearRegressionModel::from_json(doc);
  if (type == "logistic") return LogisticModel::from_json(doc);
  if (type == "constant_scores") return ConstantScoresModel::from_json(doc);
  if (type == "mlp") return MlpModel::from_json(doc);
  if (type == "logic_layer") {
    return std::make_shared<LogicLayerModel>(FittedModel(predictor_from_json(doc.at("inner"))),
                                             constraint_set_from_json(doc.at("constraints")));
  }
  if (type == "env_ensemble") {
    std::vector<FittedModel> experts;
    for (const auto& e : doc.at("experts")) experts.emplace_back(predictor_from_json(e));
    return std::make_shared<EnvEnsembleModel>(std::move(experts), FittedModel(predictor_from_json(doc.at("meta"))));
  }
  throw DataError("unknown model type: " + type);
}

}  // namespace

FittedModel FittedModel::from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("format_version").get<int>() != kModelFormatVersion) throw DataError("unsupported model format version");
    return FittedModel(predictor_from_json(doc.at("model")));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed model document: ") + e.what());
  }
}

ClassScores class_scores(const FittedModel& model, const Matrix& x) { return model.class_scores(x); }
std::vector<double> predict(const FittedModel& model, const Matrix& x) { return model.predict(x); }

std::vector<double> argmax_labels(const ClassScores& scores) {
  std::vector<double> out(scores.rows());
  for (std::size_t r = 0; r < scores.rows(); ++r) {
    auto row = scores.row(r);
    std::size_t best = 0;
    for (std::size_t c = 1; c < row.size(); ++c) {
      if (row[c] > row[best]) best = c;
    }
    out[r] = static_cast<double>(best);
  }
  return out;
}

}  // namespace phiml
