#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "phiml/datagen.hpp"
#include "phiml/errors.hpp"
#include "phiml/forest.hpp"
#include "phiml/linear.hpp"
#include "phiml/metrics.hpp"
#include "phiml/mlp.hpp"
#include "phiml/model.hpp"

using namespace phiml;

namespace {

// Newton iterations for unpenalized binary logistic regression with intercept.
std::vector<double> newton_logistic(const Matrix& x, const std::vector<double>& y) {
  const std::size_t d = x.cols() + 1;
  std::vector<double> w(d, 0.0);
  for (int it = 0; it < 50; ++it) {
    std::vector<double> g(d, 0.0);
    std::vector<std::vector<double>> h(d, std::vector<double>(d + 1, 0.0));
    for (std::size_t r = 0; r < x.rows(); ++r) {
      std::vector<double> z(d, 1.0);
      for (std::size_t c = 0; c < x.cols(); ++c) z[c] = x(r, c);
      double s = 0.0;
      for (std::size_t c = 0; c < d; ++c) s += w[c] * z[c];
      const double p = 1.0 / (1.0 + std::exp(-s));
      for (std::size_t a = 0; a < d; ++a) {
        g[a] += (p - y[r]) * z[a];
        for (std::size_t b = 0; b < d; ++b) h[a][b] += p * (1.0 - p) * z[a] * z[b];
      }
    }
    for (std::size_t a = 0; a < d; ++a) h[a][d] = g[a];
    for (std::size_t col = 0; col < d; ++col) {
      for (std::size_t row = col + 1; row < d; ++row) {
        const double f = h[row][col] / h[col][col];
        for (std::size_t k = col; k <= d; ++k) h[row][k] -= f * h[col][k];
      }
    }
    std::vector<double> step(d);
    for (std::size_t i = d; i-- > 0;) {
      double s = h[i][d];
      for (std::size_t k = i + 1; k < d; ++k) s -= h[i][k] * step[k];
      step[i] = s / h[i][i];
    }
    for (std::size_t c = 0; c < d; ++c) w[c] -= step[c];
  }
  return w;
}

Dataset separable_blobs(std::uint64_t seed, std::size_t n) {
  Rng rng(seed);
  Dataset d;
  d.features = Matrix(n, 2);
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int c = static_cast<int>(i % 3);
    d.features(i, 0) = 4.0 * c + rng.normal(0.0, 0.3);
    d.features(i, 1) = -2.0 * c + rng.normal(0.0, 0.3);
    d.labels[i] = c;
  }
  return d;
}

ForestParams small_forest(std::uint64_t seed = 5) {
  ForestParams p;
  p.n_trees = 15;
  p.max_depth = 6;
  p.seed = seed;
  return p;
}

}  // namespace

TEST_CASE("gini impurity of class counts") {
  CHECK(gini_from_counts(std::vector<double>{2, 2}) == 0.5);
  CHECK(gini_from_counts(std::vector<double>{3, 1}) == 0.375);
  CHECK(gini_from_counts(std::vector<double>{5, 3}) == 0.46875);
  CHECK(gini_from_counts(std::vector<double>{4, 0}) == 0.0);
  CHECK(gini_from_counts(std::vector<double>{0, 0}) == 0.0);
}

TEST_CASE("forest separates well-separated classes") {
  auto d = separable_blobs(1, 150);
  auto model = fit_forest(d, small_forest(), Task::classification);
  CHECK(model.n_classes() == 3);
  CHECK(model.predict(d.features) == d.labels);
  auto s = model.class_scores(d.features);
  for (std::size_t r = 0; r < s.rows(); ++r) {
    double total = 0.0;
    for (std::size_t c = 0; c < 3; ++c) total += s(r, c);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("forest fits are deterministic per seed") {
  auto d = gen_exclusion_dataset(3, 200);
  auto a = fit_forest(d, small_forest(5), Task::classification);
  auto b = fit_forest(d, small_forest(5), Task::classification);
  auto c = fit_forest(d, small_forest(6), Task::classification);
  CHECK(a.as<ForestModel>()->trees() == b.as<ForestModel>()->trees());
  CHECK_FALSE(a.as<ForestModel>()->trees() == c.as<ForestModel>()->trees());
}

TEST_CASE("zero sample weights keep rows out of every bootstrap") {
  auto d = separable_blobs(2, 90);
  std::vector<double> w(d.size());
  for (std::size_t i = 0; i < d.size(); ++i) w[i] = d.labels[i] == 1.0 ? 1.0 : 0.0;
  ForestExtras extras;
  extras.sample_weights = w;
  extras.n_classes = 3;
  auto model = fit_forest(d.features, d.labels, small_forest(), Task::classification, extras);
  auto s = model.class_scores(d.features);
  for (std::size_t r = 0; r < s.rows(); ++r) CHECK(s(r, 1) == 1.0);
}

TEST_CASE("out-of-bag scores cover every training row") {
  auto d = gen_exclusion_dataset(4, 120);
  ClassScores oob;
  ForestExtras extras;
  extras.oob_scores = &oob;
  auto model = fit_forest(d.features, d.labels, small_forest(), Task::classification, extras);
  REQUIRE(oob.rows() == d.size());
  REQUIRE(oob.cols() == 2);
  for (std::size_t r = 0; r < oob.rows(); ++r) CHECK(oob(r, 0) + oob(r, 1) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_FALSE(oob == model.class_scores(d.features));
}

TEST_CASE("regression forest predicts a constant target exactly") {
  Dataset d = gen_exclusion_dataset(5, 60);
  std::fill(d.labels.begin(), d.labels.end(), 2.5);
  auto model = fit_forest(d, small_forest(), Task::regression);
  for (double v : model.predict(d.features)) CHECK(v == 2.5);
}

TEST_CASE("forest parameter and data validation") {
  auto d = gen_exclusion_dataset(5, 60);
  ForestParams p = small_forest();
  p.n_trees = 0;
  CHECK_THROWS_AS(fit_forest(d, p, Task::classification), UsageError);
  CHECK_THROWS(fit_forest(gen_exclusion_dataset(5, 0), small_forest(), Task::classification));
}

TEST_CASE("models round-trip through JSON with identical scores") {
  auto d = gen_hierarchy_dataset(6, 200);
  std::vector<FittedModel> models{fit_forest(d, small_forest(), Task::classification),
                                  fit_linear(d, Task::classification)};
  auto bin = gen_exclusion_dataset(6, 100);
  MlpParams mp;
  mp.hidden_dim = 8;
  mp.hidden_layers = 2;
  mp.epochs = 5;
  models.push_back(fit_mlp(bin, mp));
  for (const auto& m : models) {
    auto back = FittedModel::from_json(m.to_json());
    const Matrix& x = m.input_dims() == 3 ? d.features : bin.features;
    CHECK(back.class_scores(x) == m.class_scores(x));
  }
  auto reg = gen_treatment_dataset(6, 100);
  auto lin = fit_linear(reg, Task::regression);
  CHECK(FittedModel::from_json(lin.to_json()).predict(reg.features) == lin.predict(reg.features));
}

TEST_CASE("model JSON rejects unknown types and wrong input widths") {
  nlohmann::json doc = {{"format_version", kModelFormatVersion}, {"model", {{"type", "nope"}}}};
  CHECK_THROWS(FittedModel::from_json(doc));
  auto d = gen_exclusion_dataset(7, 50);
  auto m = fit_linear(d, Task::classification);
  CHECK_THROWS_AS(m.class_scores(Matrix(2, 5)), UsageError);
}

TEST_CASE("least squares recovers an exact linear relation") {
  Rng rng(8);
  Matrix x(40, 2);
  std::vector<double> y(40);
  for (std::size_t r = 0; r < 40; ++r) {
    x(r, 0) = rng.normal();
    x(r, 1) = rng.normal();
    y[r] = 2.0 * x(r, 0) - 3.0 * x(r, 1) + 1.0;
  }
  auto model = fit_least_squares(x, y);
  const auto* lr = model.as<LinearRegressionModel>();
  REQUIRE(lr);
  CHECK(lr->coefficients()[0] == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(lr->coefficients()[1] == doctest::Approx(-3.0).epsilon(1e-9));
  CHECK(lr->intercept() == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("logistic fit matches Newton's method") {
  Rng rng(9);
  Matrix x(200, 2);
  std::vector<double> y(200);
  for (std::size_t r = 0; r < 200; ++r) {
    x(r, 0) = rng.normal();
    x(r, 1) = rng.normal();
    const double p = 1.0 / (1.0 + std::exp(-(1.5 * x(r, 0) - 0.7 * x(r, 1) + 0.3)));
    y[r] = rng.uniform() < p ? 1.0 : 0.0;
  }
  auto want = newton_logistic(x, y);
  auto model = fit_logistic(x, y);
  const auto* lm = model.as<LogisticModel>();
  REQUIRE(lm);
  REQUIRE(lm->weights().rows() == 1);
  for (std::size_t c = 0; c < 3; ++c) CHECK(lm->weights()(0, c) == doctest::Approx(want[c]).epsilon(1e-3));
}

TEST_CASE("logistic handles multiclass and single-class data") {
  auto d = separable_blobs(10, 90);
  auto m = fit_linear(d, Task::classification);
  CHECK(m.n_classes() == 3);
  CHECK(accuracy(m.predict(d.features), d.labels) == 1.0);
  Dataset one = d;
  std::fill(one.labels.begin(), one.labels.end(), 0.0);
  auto c = fit_linear(one, Task::classification);
  CHECK(c.as<ConstantScoresModel>() != nullptr);
  CHECK(c.predict(one.features) == one.labels);
}

TEST_CASE("logistic warm start shape is checked") {
  auto d = gen_exclusion_dataset(11, 50);
  LogisticOptions opt;
  opt.initial_weights = Matrix(2, 2);
  CHECK_THROWS_AS(fit_logistic(d.features, d.labels, opt), UsageError);
}

TEST_CASE("binary cross-entropy value and gradient") {
  const std::vector<double> z{0.0, 2.0, -1.0}, y{1.0, 0.0, 1.0};
  const std::vector<std::size_t> rows{0, 1, 2};
  auto loss = mean_bce_loss(z, y, rows);
  double want = 0.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    want -= (y[i] * std::log(p) + (1.0 - y[i]) * std::log(1.0 - p)) / 3.0;
  }
  CHECK(loss.value == doctest::Approx(want).epsilon(1e-14));
  for (std::size_t i = 0; i < 3; ++i) {
    const double p = 1.0 / (1.0 + std::exp(-z[i]));
    CHECK(loss.grad[i] == doctest::Approx((p - y[i]) / 3.0).epsilon(1e-14));
  }
  auto extreme = mean_bce_loss(std::vector<double>{800.0}, std::vector<double>{0.0}, std::vector<std::size_t>{0});
  CHECK(std::isfinite(extreme.value));
  CHECK(extreme.value == doctest::Approx(800.0));
}

TEST_CASE("network gradients match finite differences") {
  Rng rng(12);
  for (int net = 0; net < 10; ++net) CHECK(oracle::network_gradient_error(rng, mean_bce_loss) < 1e-4);
}

TEST_CASE("mlp training is deterministic and learns") {
  auto d = gen_exclusion_dataset(13, 300);
  MlpParams p;
  p.hidden_dim = 16;
  p.hidden_layers = 2;
  p.epochs = 60;
  p.learning_rate = 0.01;
  auto a = fit_mlp(d, p);
  auto b = fit_mlp(d, p);
  CHECK(a.as<MlpModel>()->network().parameters() == b.as<MlpModel>()->network().parameters());
  auto pred = a.predict(d.features);
  double hits = 0.0;
  for (std::size_t i = 0; i < d.size(); ++i) hits += pred[i] == d.labels[i] ? 1.0 : 0.0;
  CHECK(hits / static_cast<double>(d.size()) > 0.75);
}

TEST_CASE("mlp rejects non-binary labels and mismatched warm starts") {
  auto d = gen_hierarchy_dataset(14, 60);
  CHECK_THROWS_AS(fit_mlp(d, MlpParams{}), UsageError);
  auto bin = gen_exclusion_dataset(14, 60);
  MlpParams p;
  p.initial_parameters = {1.0, 2.0};
  CHECK_THROWS_AS(fit_mlp(bin, p), UsageError);
}

TEST_CASE("argmax breaks ties toward the lower class") {
  CHECK(argmax_labels(Matrix(2, 3, {0.4, 0.4, 0.2, 0.1, 0.45, 0.45})) == std::vector<double>{0.0, 1.0});
}
