#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "oracles.hpp"
#include "phiml/constraints.hpp"
#include "phiml/datagen.hpp"
#include "phiml/errors.hpp"
#include "phiml/forest.hpp"
#include "phiml/intrinsic.hpp"
#include "phiml/linear.hpp"
#include "phiml/metrics.hpp"

using namespace phiml;

namespace {

LearnerSpec spec(Family family) {
  LearnerSpec s;
  s.family = family;
  s.forest.n_trees = 12;
  s.forest.max_depth = 6;
  s.mlp.hidden_dim = 8;
  s.mlp.hidden_layers = 2;
  s.mlp.epochs = 20;
  s.mlp.learning_rate = 0.01;
  return s;
}

ConstraintSet exclusion_01() {
  ConstraintSet cs;
  cs.exclusions = {{0, 1}};
  return cs;
}

std::vector<std::size_t> iota_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

}  // namespace

TEST_CASE("logic layer applies exclusion then implication") {
  ConstraintSet cs;
  cs.exclusions = {{0, 1}};
  cs.implications = {{0, 2}};
  auto out = logic_layer(Matrix(1, 3, {0.6, 0.5, 0.1}), cs);
  CHECK(out(0, 0) == 0.6);
  CHECK(out(0, 1) == doctest::Approx(0.35).epsilon(1e-15));
  CHECK(out(0, 2) == doctest::Approx(0.28).epsilon(1e-15));
}

TEST_CASE("logic layer with no constraints is the identity") {
  Rng rng(1);
  auto s = oracle::random_scores(rng, 30, 4);
  CHECK(logic_layer(s, ConstraintSet{}) == s);
}

TEST_CASE("logic layer output never violates an exclusion") {
  Rng rng(2);
  ConstraintSet cs;
  cs.exclusions = {{0, 1}, {1, 2}};
  cs.implications = {{0, 3}, {3, 2}};
  for (int trial = 0; trial < 20; ++trial) {
    auto out = logic_layer(oracle::random_scores(rng, 50, 4), cs);
    CHECK(oracle::exclusion_rate(out, cs) == 0.0);
  }
}

TEST_CASE("violation weights decay with the violation mass") {
  Matrix s(3, 2, {0.45, 0.5, 0.9, 0.1, 0.6, 0.7});
  auto w = violation_weights(s, exclusion_01(), 1.0);
  CHECK(w[0] == doctest::Approx(std::exp(-0.45)).epsilon(1e-15));
  CHECK(w[0] == doctest::Approx(0.63763).epsilon(1e-5));
  CHECK(w[1] == 1.0);
  CHECK(w[2] == doctest::Approx(std::exp(-0.6)).epsilon(1e-15));
  auto flat = violation_weights(s, exclusion_01(), 0.0);
  CHECK(flat == std::vector<double>{1.0, 1.0, 1.0});
}

TEST_CASE("constraint-aware fit with zero strength is the plain fit") {
  auto d = gen_exclusion_dataset(3, 150);
  ConstraintLossConfig off;
  off.lambda = 0.0;
  off.alpha = 0.0;
  for (Family f : {Family::forest, Family::linear, Family::mlp}) {
    auto plain = fit_base(spec(f), d, Task::classification);
    auto aware = constraint_aware_fit(spec(f), d, exclusion_01(), off);
    CHECK(aware.class_scores(d.features) == plain.class_scores(d.features));
  }
}

TEST_CASE("constraint-aware logistic fit lowers the violation mass") {
  auto d = gen_exclusion_dataset(4, 300);
  auto plain = fit_base(spec(Family::linear), d, Task::classification);
  auto aware = constraint_aware_fit(spec(Family::linear), d, exclusion_01(), ConstraintLossConfig{});
  auto mass = [&](const FittedModel& m) {
    auto s = m.class_scores(d.features);
    double total = 0.0;
    for (std::size_t r = 0; r < s.rows(); ++r) total += exclusion_violation_mass(s.row(r), exclusion_01());
    return total;
  };
  CHECK(mass(aware) < mass(plain));
}

TEST_CASE("logic-guided fit without constraints is the plain fit") {
  auto d = gen_hierarchy_dataset(5, 150);
  for (Family f : {Family::forest, Family::linear}) {
    auto plain = fit_base(spec(f), d, Task::classification);
    auto guided = logic_guided_fit(spec(f), d, ConstraintSet{});
    CHECK(guided.class_scores(d.features) == plain.class_scores(d.features));
  }
}

TEST_CASE("logic-guided models emit exclusion-free scores") {
  auto d = gen_hierarchy_dataset(6, 200);
  ConstraintSet cs;
  cs.exclusions = {{0, 2}};
  cs.implications = {{2, 1}};
  auto model = logic_guided_fit(spec(Family::forest), d, cs);
  CHECK(model.as<LogicLayerModel>() != nullptr);
  CHECK(oracle::exclusion_rate(model.class_scores(d.features), cs) == 0.0);
  auto back = FittedModel::from_json(model.to_json());
  CHECK(back.class_scores(d.features) == model.class_scores(d.features));

  auto bin = gen_exclusion_dataset(6, 150);
  auto net = logic_guided_fit(spec(Family::mlp), bin, exclusion_01());
  CHECK(oracle::exclusion_rate(net.class_scores(bin.features), exclusion_01()) == 0.0);
}

TEST_CASE("logic-layer loss gradient matches finite differences") {
  Rng rng(7);
  ConstraintSet cs = exclusion_01();
  cs.implications = {{1, 0}};
  cs.tau = 0.45;
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<double> z(12), y(12);
    for (std::size_t i = 0; i < z.size(); ++i) {
      z[i] = rng.normal(0.0, 1.5);
      y[i] = i % 2 == 0 ? 1.0 : 0.0;
    }
    auto rows = iota_rows(z.size());
    auto eval = logic_layer_loss(z, y, cs);
    const double h = 1e-6;
    for (std::size_t i = 0; i < z.size(); ++i) {
      auto up = z, down = z;
      up[i] += h;
      down[i] -= h;
      const double numeric = (logic_layer_loss(up, y, cs).value - logic_layer_loss(down, y, cs).value) / (2 * h);
      CHECK(eval.grad[i] == doctest::Approx(numeric).epsilon(1e-5));
    }
  }
}

TEST_CASE("Rawlsian impurity on the worked node") {
  const std::vector<double> counts{5.0, 3.0}, groups{2.0, 2.0, 3.0, 1.0};
  NodeStats node;
  node.class_counts = counts;
  node.group_class_counts = groups;
  node.n_classes = 2;
  node.n_groups = 2;
  RawlsianForestConfig cfg;
  cfg.min_group_size = 1;
  CHECK(std::abs(rawlsian_impurity(node, cfg) - 0.4725) <= 1e-12);
  cfg.min_group_size = 5;
  CHECK(rawlsian_impurity(node, cfg) == 0.46875);
  cfg.min_group_size = 1;
  cfg.lambda = 0.0;
  CHECK(rawlsian_impurity(node, cfg) == 0.46875);
}

TEST_CASE("Rawlsian impurity stays within Gini bounds") {
  Rng rng(8);
  RawlsianForestConfig cfg;
  cfg.min_group_size = 1;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> groups(6);
    for (double& c : groups) c = static_cast<double>(rng.index(6));
    std::vector<double> counts{groups[0] + groups[2] + groups[4], groups[1] + groups[3] + groups[5]};
    NodeStats node;
    node.class_counts = counts;
    node.group_class_counts = groups;
    node.n_classes = 2;
    node.n_groups = 3;
    const double v = rawlsian_impurity(node, cfg);
    CHECK(v >= 0.0);
    CHECK(v <= 0.5 + 1e-15);
  }
}

TEST_CASE("Rawlsian forest with zero strength grows the Gini forest") {
  auto d = gen_hiring_dataset(9, 250);
  auto g = Groups::marginal(d);
  ForestParams fp;
  fp.n_trees = 8;
  RawlsianForestConfig cfg;
  cfg.lambda = 0.0;
  auto plain = fit_forest(d, fp, Task::classification);
  auto fair = rawlsian_forest_fit(d, g, fp, cfg);
  CHECK(plain.as<ForestModel>()->trees() == fair.as<ForestModel>()->trees());
  CHECK_THROWS_AS(rawlsian_forest_fit(d, Groups{}, fp, cfg), UsageError);
}

TEST_CASE("Rawlsian objective uses the population variance") {
  RawlsianLossConfig cfg;
  CHECK(rawlsian_objective(std::vector<double>{1.0, 0.5}, cfg) == doctest::Approx(0.7375).epsilon(1e-15));
  CHECK_THROWS_AS(rawlsian_objective(std::vector<double>{}, cfg), UsageError);
}

TEST_CASE("Rawlsian loss on the worked example") {
  const double za = -std::log(std::exp(1.0) - 1.0), zb = -std::log(std::exp(0.5) - 1.0);
  const std::vector<double> z{za, za, zb, zb}, y{1, 1, 1, 1};
  auto rows = iota_rows(4);
  auto groups = oracle::make_groups({{"g", {"A", "A", "B", "B"}}});
  RawlsianLossConfig cfg;
  cfg.min_group_size = 2;
  CHECK(std::abs(rawlsian_loss(z, y, rows, groups, cfg).value - 0.74125) <= 1e-12);
  cfg.min_group_size = 3;
  CHECK(rawlsian_loss(z, y, rows, groups, cfg).value == doctest::Approx(0.75).epsilon(1e-14));
}

TEST_CASE("Rawlsian loss with zero strength is mean cross-entropy") {
  Rng rng(10);
  std::vector<std::string> g(40);
  std::vector<double> z(40), y(40);
  for (std::size_t i = 0; i < 40; ++i) {
    g[i] = std::string(1, static_cast<char>('a' + rng.index(3)));
    z[i] = rng.normal(0.0, 2.0);
    y[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  }
  auto groups = oracle::make_groups({{"g", g}});
  RawlsianLossConfig cfg;
  cfg.lambda = 0.0;
  cfg.min_group_size = 1;
  auto rows = iota_rows(40);
  auto a = rawlsian_loss(z, y, rows, groups, cfg);
  auto b = mean_bce_loss(z, y, rows);
  CHECK(std::abs(a.value - b.value) <= 1e-9);
  for (std::size_t i = 0; i < 40; ++i) CHECK(std::abs(a.grad[i] - b.grad[i]) <= 1e-12);
}

TEST_CASE("Rawlsian loss gradients match finite differences") {
  Rng rng(11);
  auto groups = oracle::make_groups({{"g", {"a", "b", "c", "a", "b", "c", "a", "b", "c", "a", "b", "c"}}});
  RawlsianLossConfig cfg;
  cfg.min_group_size = 2;
  BatchLoss loss = [&](std::span<const double> z, std::span<const double> y, std::span<const std::size_t> r) {
    return rawlsian_loss(z, y, r, groups, cfg);
  };
  for (int net = 0; net < 10; ++net) CHECK(oracle::network_gradient_error(rng, loss) < 1e-4);
}

TEST_CASE("Rawlsian network with zero strength is the plain network") {
  auto d = gen_hiring_dataset(12, 200);
  auto g = Groups::marginal(d);
  MlpParams p = spec(Family::mlp).mlp;
  RawlsianLossConfig cfg;
  cfg.lambda = 0.0;
  auto plain = fit_mlp(d, p);
  auto fair = rawlsian_mlp_fit(d, g, p, cfg);
  CHECK(plain.as<MlpModel>()->network().parameters() == fair.as<MlpModel>()->network().parameters());
}

TEST_CASE("Rawlsian network predictions ignore group membership") {
  auto d = gen_hiring_dataset(13, 200);
  auto g = Groups::marginal(d);
  MlpParams p = spec(Family::mlp).mlp;
  auto model = rawlsian_mlp_fit(d, g, p, RawlsianLossConfig{});
  CHECK(model.input_dims() == d.dims());
  CHECK(model.to_json().dump().find("gender") == std::string::npos);
}

TEST_CASE("environment ensemble shapes and validation") {
  auto d = gen_environment_dataset(14, 80);
  const std::vector<int> envs{0, 1};
  auto model = env_ensemble_fit(d, envs, spec(Family::linear));
  const auto* ens = model.as<EnvEnsembleModel>();
  REQUIRE(ens);
  CHECK(ens->experts().size() == 2);
  CHECK(model.input_dims() == 4);
  auto x = with_environment(d);
  CHECK(x.cols() == 4);
  CHECK(ens->meta_inputs(x).cols() == 3);
  CHECK(model.predict(x).size() == d.size());
  auto back = FittedModel::from_json(model.to_json());
  CHECK(back.predict(x) == model.predict(x));

  CHECK_THROWS_AS(env_ensemble_fit(d, std::vector<int>{0}, spec(Family::linear)), UsageError);
  CHECK_THROWS_AS(env_ensemble_fit(d, envs, spec(Family::mlp)), UsageError);
  Dataset plain = gen_exclusion_dataset(14, 50);
  CHECK_THROWS_AS(env_ensemble_fit(plain, envs, spec(Family::linear)), UsageError);
}

TEST_CASE("family names") {
  CHECK(family_from_string("forest") == Family::forest);
  CHECK(family_from_string("logistic") == Family::linear);
  CHECK(family_from_string("mlp") == Family::mlp);
  CHECK_THROWS_AS(family_from_string("svm"), UsageError);
}
