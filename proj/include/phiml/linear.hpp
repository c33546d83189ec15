#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "phiml/dataset.hpp"
#include "phiml/model.hpp"

namespace phiml {

/// Least-squares regression with intercept.
class LinearRegressionModel : public Predictor {
 public:
  LinearRegressionModel(std::vector<double> coefficients, double intercept);

  Task task() const override { return Task::regression; }
  std::size_t input_dims() const override { return coefficients_.size(); }
  std::vector<double> values(const Matrix& x) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<const LinearRegressionModel> from_json(const nlohmann::json& doc);

  const std::vector<double>& coefficients() const { return coefficients_; }
  double intercept() const { return intercept_; }

 private:
  std::vector<double> coefficients_;
  double intercept_;
};

/// Logistic regression. Binary models keep a single weight row and score
/// class 1 as sigmoid(w.x + b); k > 2 classes use a softmax over k rows.
class LogisticModel : public Predictor {
 public:
  LogisticModel(std::size_t input_dims, std::size_t n_classes, Matrix weights);

  Task task() const override { return Task::classification; }
  std::size_t input_dims() const override { return input_dims_; }
  std::size_t n_classes() const override { return n_classes_; }
  ClassScores scores(const Matrix& x) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<const LogisticModel> from_json(const nlohmann::json& doc);

  /// Rows are output units, columns are input weights followed by the bias.
  const Matrix& weights() const { return weights_; }
  /// Raw linear scores (n x rows of weights()).
  Matrix logits(const Matrix& x) const;
  ClassScores scores_from_logits(const Matrix& logits) const;

 private:
  std::size_t input_dims_;
  std::size_t n_classes_;
  Matrix weights_;
};

/// Fixed probability table returned for every row (single-class data).
class ConstantScoresModel : public Predictor {
 public:
  ConstantScoresModel(std::size_t input_dims, std::vector<double> scores);

  Task task() const override { return Task::classification; }
  std::size_t input_dims() const override { return input_dims_; }
  std::size_t n_classes() const override { return scores_.size(); }
  ClassScores scores(const Matrix& x) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<const ConstantScoresModel> from_json(const nlohmann::json& doc);

 private:
  std::size_t input_dims_;
  std::vector<double> scores_;
};

/// Extra differentiable term added to the mean cross-entropy during
/// logistic training. Returns the term's value for `scores` and writes its
/// gradient with respect to each score entry into `grad` (same shape).
using ScorePenalty = std::function<double(const ClassScores& scores, Matrix& grad)>;

struct LogisticOptions {
  std::size_t max_iterations = 10000;
  double tolerance = 1e-8;
  /// Number of classes; 0 infers max label + 1.
  std::size_t n_classes = 0;
  /// With a penalty, training runs this many fixed subgradient steps of
  /// penalty_step_scale times the smooth-loss step size.
  ScorePenalty penalty;
  std::size_t penalty_iterations = 2000;
  double penalty_step_scale = 0.1;
  /// Starting weights in LogisticModel::weights() layout; empty starts at zero.
  Matrix initial_weights;
};

/// Regression: least squares. Classification: logistic regression trained by
/// full-batch gradient descent until the loss changes by less than 1e-8.
/// `seed` is accepted for interface symmetry; both fits are deterministic.
FittedModel fit_linear(const Dataset& data, Task task, std::uint64_t seed = 0);
FittedModel fit_least_squares(const Matrix& x, std::span<const double> y);
FittedModel fit_logistic(const Matrix& x, std::span<const double> y, const LogisticOptions& options = {});

}  // namespace phiml
