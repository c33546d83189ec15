#include "phiml/linear.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

#include "phiml/errors.hpp"

namespace phiml {

namespace {

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  double e = std::exp(z);
  return e / (1.0 + e);
}

double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

LinearRegressionModel::LinearRegressionModel(std::vector<double> coefficients, double intercept)
    : coefficients_(std::move(coefficients)), intercept_(intercept) {}

std::vector<double> LinearRegressionModel::values(const Matrix& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double acc = intercept_;
    auto row = x.row(r);
    for (std::size_t c = 0; c < coefficients_.size(); ++c) acc += coefficients_[c] * row[c];
    out[r] = acc;
  }
  return out;
}

nlohmann::json LinearRegressionModel::to_json() const {
  return {{"type", "linear_regression"}, {"coefficients", coefficients_}, {"intercept", intercept_}};
}

std::shared_ptr<const LinearRegressionModel> LinearRegressionModel::from_json(const nlohmann::json& doc) {
  return std::make_shared<LinearRegressionModel>(doc.at("coefficients").get<std::vector<double>>(),
                                                 doc.at("intercept").get<double>());
}

LogisticModel::LogisticModel(std::size_t input_dims, std::size_t n_classes, Matrix weights)
    : input_dims_(input_dims), n_classes_(n_classes), weights_(std::move(weights)) {
  std::size_t expected_rows = n_classes == 2 ? 1 : n_classes;
  if (weights_.rows() != expected_rows || weights_.cols() != input_dims + 1) {
    throw UsageError("logistic weight matrix has the wrong shape");
  }
}

Matrix LogisticModel::logits(const Matrix& x) const {
  Matrix z(x.rows(), weights_.rows());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto row = x.row(r);
    for (std::size_t o = 0; o < weights_.rows(); ++o) {
      auto w = weights_.row(o);
      double acc = w[input_dims_];
      for (std::size_t c = 0; c < input_dims_; ++c) acc += w[c] * row[c];
      z(r, o) = acc;
    }
  }
  return z;
}

ClassScores LogisticModel::scores_from_logits(const Matrix& z) const {
  ClassScores p(z.rows(), n_classes_);
  for (std::size_t r = 0; r < z.rows(); ++r) {
    if (n_classes_ == 2) {
      double s = sigmoid(z(r, 0));
      p(r, 0) = 1.0 - s;
      p(r, 1) = s;
      continue;
    }
    auto zr = z.row(r);
    double top = *std::max_element(zr.begin(), zr.end());
    double total = 0.0;
    for (std::size_t c = 0; c < n_classes_; ++c) total += (p(r, c) = std::exp(zr[c] - top));
    for (std::size_t c = 0; c < n_classes_; ++c) p(r, c) /= total;
  }
  return p;
}

ClassScores LogisticModel::scores(const Matrix& x) const { return scores_from_logits(logits(x)); }

nlohmann::json LogisticModel::to_json() const {
  return {{"type", "logistic"},
          {"input_dims", input_dims_},
          {"n_classes", n_classes_},
          {"weight_rows", weights_.rows()},
          {"weights", weights_.data()}};
}

std::shared_ptr<const LogisticModel> LogisticModel::from_json(const nlohmann::json& doc) {
  auto d = doc.at("input_dims").get<std::size_t>();
  auto rows = doc.at("weight_rows").get<std::size_t>();
  Matrix w(rows, d + 1, doc.at("weights").get<std::vector<double>>());
  return std::make_shared<LogisticModel>(d, doc.at("n_classes").get<std::size_t>(), std::move(w));
}

ConstantScoresModel::ConstantScoresModel(std::size_t input_dims, std::vector<double> scores)
    : input_dims_(input_dims), scores_(std::move(scores)) {}

ClassScores ConstantScoresModel::scores(const Matrix& x) const {
  ClassScores out(x.rows(), scores_.size());
  for (std::size_t r = 0; r < x.rows(); ++r) std::copy(scores_.begin(), scores_.end(), out.row(r).begin());
  return out;
}

nlohmann::json ConstantScoresModel::to_json() const {
  return {{"type", "constant_scores"}, {"input_dims", input_dims_}, {"scores", scores_}};
}

std::shared_ptr<const ConstantScoresModel> ConstantScoresModel::from_json(const nlohmann::json& doc) {
  return std::make_shared<ConstantScoresModel>(doc.at("input_dims").get<std::size_t>(),
                                               doc.at("scores").get<std::vector<double>>());
}

FittedModel fit_linear(const Dataset& data, Task task, std::uint64_t /*seed*/) {
  if (data.empty()) throw DataError("cannot fit a linear model on empty data");
  if (task == Task::regression) return fit_least_squares(data.features, data.labels);
  return fit_logistic(data.features, data.labels);
}

FittedModel fit_least_squares(const Matrix& x, std::span<const double> y) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw DataError("cannot fit least squares on empty data");
  if (y.size() != n) throw UsageError("label count does not match feature rows");
  Eigen::MatrixXd a(n, d + 1);
  Eigen::VectorXd b(n);
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t c = 0; c < d; ++c) a(r, c) = x(r, c);
    a(r, d) = 1.0;
    b(r) = y[r];
  }
  Eigen::VectorXd beta = a.colPivHouseholderQr().solve(b);
  std::vector<double> coef(beta.data(), beta.data() + d);
  return FittedModel(std::make_shared<LinearRegressionModel>(std::move(coef), beta(d)));
}

FittedModel fit_logistic(const Matrix& x, std::span<const double> y, const LogisticOptions& options) {
  const std::size_t n = x.rows(), d = x.cols();
  if (n == 0) throw DataError("cannot fit logistic regression on empty data");
  if (y.size() != n) throw UsageError("label count does not match feature rows");
  const auto labels = class_labels(y);
  const std::size_t k = std::max({options.n_classes, count_classes(y), std::size_t{2}});

  std::vector<double> prior(k, 0.0);
  for (int c : labels) prior[c] += 1.0 / static_cast<double>(n);
  if (std::count_if(prior.begin(), prior.end(), [](double p) { return p > 0.0; }) == 1) {
    return FittedModel(std::make_shared<ConstantScoresModel>(d, std::move(prior)));
  }

  const bool binary = k == 2;
  const std::size_t outs = binary ? 1 : k;
  double second_moment = 1.0;
  for (double v : x.data()) second_moment += v * v / static_cast<double>(n);
  const double base_step = 1.0 / ((binary ? 0.25 : 0.5) * second_moment);

  if (!options.initial_weights.empty() &&
      (options.initial_weights.rows() != outs || options.initial_weights.cols() != d + 1)) {
    throw UsageError("initial logistic weights have the wrong shape");
  }
  LogisticModel model(d, k, options.initial_weights.empty() ? Matrix(outs, d + 1) : options.initial_weights);
  Matrix grad_w(outs, d + 1);
  Matrix score_grad;

  // Loss and gradient at the model's current weights.
  auto evaluate = [&](const LogisticModel& m, Matrix* grad) {
    Matrix z = m.logits(x);
    ClassScores p = m.scores_from_logits(z);
    const double inv_n = 1.0 / static_cast<double>(n);
    double loss = 0.0;
    Matrix dz(n, outs);
    for (std::size_t r = 0; r < n; ++r) {
      if (binary) {
        loss += (softplus(z(r, 0)) - labels[r] * z(r, 0)) * inv_n;
        dz(r, 0) = (p(r, 1) - labels[r]) * inv_n;
      } else {
        auto zr = z.row(r);
        double top = *std::max_element(zr.begin(), zr.end());
        double lse = 0.0;
        for (double v : zr) lse += std::exp(v - top);
        loss += (top + std::log(lse) - zr[labels[r]]) * inv_n;
        for (std::size_t c = 0; c < k; ++c) {
          dz(r, c) = (p(r, c) - (static_cast<int>(c) == labels[r] ? 1.0 : 0.0)) * inv_n;
        }
      }
    }
    if (options.penalty) {
      score_grad = Matrix(n, k);
      loss += options.penalty(p, score_grad);
      if (grad) {
        for (std::size_t r = 0; r < n; ++r) {
          if (binary) {
            dz(r, 0) += (score_grad(r, 1) - score_grad(r, 0)) * p(r, 1) * p(r, 0);
            continue;
          }
          double dot = 0.0;
          for (std::size_t c = 0; c < k; ++c) dot += score_grad(r, c) * p(r, c);
          for (std::size_t c = 0; c < k; ++c) dz(r, c) += p(r, c) * (score_grad(r, c) - dot);
        }
      }
    }
    if (grad) {
      *grad = Matrix(outs, d + 1);
      for (std::size_t r = 0; r < n; ++r) {
        auto row = x.row(r);
        for (std::size_t o = 0; o < outs; ++o) {
          double g = dz(r, o);
          auto gw = grad->row(o);
          for (std::size_t c = 0; c < d; ++c) gw[c] += g * row[c];
          gw[d] += g;
        }
      }
    }
    return loss;
  };

  double loss = evaluate(model, &grad_w);
  if (options.penalty) {
    // Fixed subgradient steps for the gated penalty.
    const double step = options.penalty_step_scale * base_step;
    for (std::size_t it = 0; it < options.penalty_iterations; ++it) {
      Matrix w = model.weights();
      for (std::size_t i = 0; i < w.data().size(); ++i) w.data()[i] -= step * grad_w.data()[i];
      model = LogisticModel(d, k, std::move(w));
      evaluate(model, &grad_w);
    }
    return FittedModel(std::make_shared<LogisticModel>(std::move(model)));
  }
  double previous = std::numeric_limits<double>::infinity();
  for (std::size_t it = 0; it < options.max_iterations; ++it) {
    if (std::abs(previous - loss) < options.tolerance) break;
    double g2 = 0.0;
    for (double g : grad_w.data()) g2 += g * g;
    if (g2 == 0.0) break;
    // Armijo backtracking from the smooth-loss step size.
    double step = base_step;
    Matrix candidate_w = model.weights();
    double candidate_loss = loss;
    for (int halvings = 0; halvings < 40; ++halvings) {
      candidate_w = model.weights();
      for (std::size_t i = 0; i < candidate_w.data().size(); ++i) candidate_w.data()[i] -= step * grad_w.data()[i];
      candidate_loss = evaluate(LogisticModel(d, k, candidate_w), nullptr);
      if (candidate_loss <= loss - 1e-4 * step * g2) break;
      step *= 0.5;
    }
    if (!(candidate_loss < loss)) break;
    model = LogisticModel(d, k, std::move(candidate_w));
    previous = loss;
    loss = evaluate(model, &grad_w);
  }
  return FittedModel(std::make_shared<LogisticModel>(std::move(model)));
}

}  // namespace phiml
