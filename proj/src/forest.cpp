#include "phiml/forest.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "phiml/errors.hpp"
#include "phiml/random.hpp"

namespace phiml {

double gini_from_counts(std::span<const double> counts) {
  double total = 0.0;
  for (double c : counts) total += c;
  if (total <= 0.0) return 0.0;
  double sq = 0.0;
  for (double c : counts) sq += (c / total) * (c / total);
  return 1.0 - sq;
}

double gini_impurity(const NodeStats& node) { return gini_from_counts(node.class_counts); }

double variance_impurity(const NodeStats& node) {
  if (node.count <= 0.0) return 0.0;
  double mean = node.sum / node.count;
  return std::max(0.0, node.sum_sq / node.count - mean * mean);
}

void ForestParams::validate() const {
  if (n_trees < 1) throw UsageError("n_trees must be at least 1");
  if (max_depth < 1) throw UsageError("max_depth must be at least 1");
  if (min_samples_split < 2) throw UsageError("min_samples_split must be at least 2");
}

std::size_t Tree::leaf_for(std::span<const double> x) const {
  std::size_t node = 0;
  while (feature[node] >= 0) {
    node = static_cast<std::size_t>(x[feature[node]] <= threshold[node] ? left[node] : right[node]);
  }
  return node;
}

namespace {

// Running class/group/moment tallies for one side of a candidate split.
struct Tally {
  std::vector<double> classes;
  std::vector<double> groups;  // n_groups x n_classes
  double count = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;

  Tally(std::size_t n_classes, std::size_t n_groups) : classes(n_classes, 0.0), groups(n_groups * n_classes, 0.0) {}

  NodeStats view(std::size_t n_classes, std::size_t n_groups) const {
    return NodeStats{classes, groups, n_classes, n_groups, count, sum, sum_sq};
  }
};

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& x, std::span<const double> y, Task task, std::size_t n_classes, const Groups* groups,
              const ForestParams& params, const Impurity& impurity, Rng& rng)
      : x_(x),
        y_(y),
        task_(task),
        n_classes_(task == Task::classification ? n_classes : 0),
        groups_(groups),
        n_groups_(groups ? groups->count() : 0),
        params_(params),
        impurity_(impurity),
        rng_(rng) {
    const std::size_t d = x.cols();
    if (task == Task::classification) {
      std::size_t m = 1;
      while (m * m < d) ++m;
      mtry_ = m;
    } else {
      mtry_ = std::max<std::size_t>(1, (d + 2) / 3);
    }
    mtry_ = std::min(mtry_, d);
    tree_.value_width = task == Task::classification ? n_classes_ : 1;
  }

  Tree build(std::vector<std::size_t> rows) {
    grow(rows, 0);
    return std::move(tree_);
  }

 private:
  void add(Tally& t, std::size_t row, double sign) const {
    double yv = y_[row];
    if (task_ == Task::classification) {
      auto c = static_cast<std::size_t>(yv);
      t.classes[c] += sign;
      if (groups_) {
        for (int g : groups_->of(row)) t.groups[static_cast<std::size_t>(g) * n_classes_ + c] += sign;
      }
    } else {
      t.sum += sign * yv;
      t.sum_sq += sign * yv * yv;
    }
    t.count += sign;
  }

  Tally tally(std::span<const std::size_t> rows) const {
    Tally t(n_classes_, n_groups_);
    for (auto r : rows) add(t, r, 1.0);
    return t;
  }

  double impurity(const Tally& t) const { return impurity_(t.view(n_classes_, n_groups_)); }

  bool is_pure(std::span<const std::size_t> rows) const {
    for (auto r : rows) {
      if (y_[r] != y_[rows[0]]) return false;
    }
    return true;
  }

  int make_leaf(const Tally& t) {
    int id = static_cast<int>(tree_.feature.size());
    tree_.feature.push_back(-1);
    tree_.threshold.push_back(0.0);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    if (task_ == Task::classification) {
      for (double c : t.classes) tree_.value.push_back(t.count > 0.0 ? c / t.count : 0.0);
    } else {
      tree_.value.push_back(t.count > 0.0 ? t.sum / t.count : 0.0);
    }
    return id;
  }

  int grow(std::vector<std::size_t>& rows, std::size_t depth) {
    Tally node = tally(rows);
    if (depth >= params_.max_depth || rows.size() < params_.min_samples_split || is_pure(rows)) {
      return make_leaf(node);
    }
    const double parent = impurity(node);
    const double n = static_cast<double>(rows.size());

    std::vector<std::size_t> features(x_.cols());
    std::iota(features.begin(), features.end(), 0);
    for (std::size_t i = 0; i < mtry_; ++i) {
      std::size_t j = i + rng_.index(features.size() - i);
      std::swap(features[i], features[j]);
    }

    double best_score = parent;
    int best_feature = -1;
    double best_threshold = 0.0;
    std::vector<std::size_t> order(rows);
    for (std::size_t fi = 0; fi < mtry_; ++fi) {
      const std::size_t f = features[fi];
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        double xa = x_(a, f), xb = x_(b, f);
        return xa < xb || (xa == xb && a < b);
      });
      Tally left(n_classes_, n_groups_);
      Tally right = node;
      for (std::size_t i = 0; i + 1 < order.size(); ++i) {
        add(left, order[i], 1.0);
        add(right, order[i], -1.0);
        double lo = x_(order[i], f);
        double hi = x_(order[i + 1], f);
        if (lo == hi) continue;
        double score = (left.count * impurity(left) + right.count * impurity(right)) / n;
        if (score < best_score - 1e-12) {
          best_score = score;
          best_feature = static_cast<int>(f);
          double mid = 0.5 * (lo + hi);
          best_threshold = mid < hi ? mid : lo;
        }
      }
    }
    if (best_feature < 0) return make_leaf(node);

    std::vector<std::size_t> left_rows, right_rows;
    for (auto r : rows) {
      (x_(r, static_cast<std::size_t>(best_feature)) <= best_threshold ? left_rows : right_rows).push_back(r);
    }
    int id = static_cast<int>(tree_.feature.size());
    tree_.feature.push_back(best_feature);
    tree_.threshold.push_back(best_threshold);
    tree_.left.push_back(-1);
    tree_.right.push_back(-1);
    tree_.value.insert(tree_.value.end(), tree_.value_width, 0.0);
    rows.clear();
    rows.shrink_to_fit();
    int l = grow(left_rows, depth + 1);
    int r = grow(right_rows, depth + 1);
    tree_.left[id] = l;
    tree_.right[id] = r;
    return id;
  }

  const Matrix& x_;
  std::span<const double> y_;
  Task task_;
  std::size_t n_classes_;
  const Groups* groups_;
  std::size_t n_groups_;
  const ForestParams& params_;
  const Impurity& impurity_;
  Rng& rng_;
  std::size_t mtry_ = 1;
  Tree tree_;
};

std::vector<std::size_t> bootstrap(std::span<const double> cumulative, std::size_t n, Rng& rng) {
  std::vector<std::size_t> rows(n);
  const double total = cumulative.back();
  for (auto& r : rows) {
    double u = rng.uniform() * total;
    auto it = std::upper_bound(cumulative.begin(), cumulative.end(), u);
    r = std::min<std::size_t>(static_cast<std::size_t>(it - cumulative.begin()), n - 1);
  }
  return rows;
}

}  // namespace

ForestModel::ForestModel(Task task, std::size_t input_dims, std::size_t n_classes, std::vector<Tree> trees)
    : task_(task), input_dims_(input_dims), n_classes_(n_classes), trees_(std::move(trees)) {}

ClassScores ForestModel::scores(const Matrix& x) const {
  if (task_ != Task::classification) return Predictor::scores(x);
  ClassScores out(x.rows(), n_classes_);
  const double inv = 1.0 / static_cast<double>(trees_.size());
  for (std::size_t r = 0; r < x.rows(); ++r) {
    auto dst = out.row(r);
    for (const auto& tree : trees_) {
      auto leaf = tree.leaf_value(tree.leaf_for(x.row(r)));
      for (std::size_t c = 0; c < n_classes_; ++c) dst[c] += leaf[c];
    }
    for (auto& v : dst) v *= inv;
  }
  return out;
}

std::vector<double> ForestModel::values(const Matrix& x) const {
  if (task_ != Task::regression) return Predictor::values(x);
  std::vector<double> out(x.rows(), 0.0);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    double acc = 0.0;
    for (const auto& tree : trees_) acc += tree.leaf_value(tree.leaf_for(x.row(r)))[0];
    out[r] = acc / static_cast<double>(trees_.size());
  }
  return out;
}

nlohmann::json ForestModel::to_json() const {
  nlohmann::json trees = nlohmann::json::array();
  for (const auto& t : trees_) {
    trees.push_back({{"feature", t.feature},
                     {"threshold", t.threshold},
                     {"left", t.left},
                     {"right", t.right},
                     {"value_width", t.value_width},
                     {"value", t.value}});
  }
  return {{"type", "forest"},
          {"task", to_string(task_)},
          {"input_dims", input_dims_},
          {"n_classes", n_classes_},
          {"trees", std::move(trees)}};
}

std::shared_ptr<const ForestModel> ForestModel::from_json(const nlohmann::json& doc) {
  std::vector<Tree> trees;
  for (const auto& t : doc.at("trees")) {
    Tree tree;
    t.at("feature").get_to(tree.feature);
    t.at("threshold").get_to(tree.threshold);
    t.at("left").get_to(tree.left);
    t.at("right").get_to(tree.right);
    t.at("value_width").get_to(tree.value_width);
    t.at("value").get_to(tree.value);
    trees.push_back(std::move(tree));
  }
  return std::make_shared<ForestModel>(task_from_string(doc.at("task").get<std::string>()),
                                       doc.at("input_dims").get<std::size_t>(),
                                       doc.at("n_classes").get<std::size_t>(), std::move(trees));
}

FittedModel fit_forest(const Dataset& data, const ForestParams& params, Task task) {
  return fit_forest(data.features, data.labels, params, task);
}

FittedModel fit_forest(const Matrix& x, std::span<const double> y, const ForestParams& params, Task task,
                       const ForestExtras& extras) {
  params.validate();
  const std::size_t n = x.rows();
  if (n == 0) throw DataError("cannot fit a forest on empty data");
  if (y.size() != n) throw UsageError("label count does not match feature rows");
  if (!extras.sample_weights.empty() && extras.sample_weights.size() != n) {
    throw UsageError("sample weight count does not match feature rows");
  }
  if (extras.groups && extras.groups->rows() != n) throw UsageError("group membership rows mismatch");

  std::size_t k = 0;
  if (task == Task::classification) {
    class_labels(y);  // validates
    k = std::max(extras.n_classes, count_classes(y));
  }

  std::vector<double> cumulative(n);
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double w = extras.sample_weights.empty() ? 1.0 : extras.sample_weights[i];
    if (!(w >= 0.0) || !std::isfinite(w)) throw UsageError("sample weights must be finite and non-negative");
    acc += w;
    cumulative[i] = acc;
  }
  if (!(acc > 0.0)) throw UsageError("sample weights sum to zero");

  Impurity impurity = params.impurity;
  if (!impurity) impurity = task == Task::classification ? Impurity(gini_impurity) : Impurity(variance_impurity);

  const bool want_oob = extras.oob_scores && task == Task::classification;
  ClassScores oob(want_oob ? n : 0, k);
  std::vector<double> oob_count(want_oob ? n : 0, 0.0);
  std::vector<char> in_bag;

  std::vector<Tree> trees;
  trees.reserve(params.n_trees);
  for (std::size_t t = 0; t < params.n_trees; ++t) {
    Rng rng(derive_seed(params.seed, static_cast<std::uint64_t>(t)));
    auto rows = bootstrap(cumulative, n, rng);
    if (want_oob) {
      in_bag.assign(n, 0);
      for (auto r : rows) in_bag[r] = 1;
    }
    TreeBuilder builder(x, y, task, k, extras.groups, params, impurity, rng);
    trees.push_back(builder.build(std::move(rows)));
    if (!want_oob) continue;
    const Tree& tree = trees.back();
    for (std::size_t r = 0; r < n; ++r) {
      if (in_bag[r]) continue;
      auto leaf = tree.leaf_value(tree.leaf_for(x.row(r)));
      for (std::size_t c = 0; c < k; ++c) oob(r, c) += leaf[c];
      oob_count[r] += 1.0;
    }
  }
  auto model = std::make_shared<ForestModel>(task, x.cols(), k, std::move(trees));
  if (want_oob) {
    ClassScores full = model->scores(x);
    for (std::size_t r = 0; r < n; ++r) {
      for (std::size_t c = 0; c < k; ++c) oob(r, c) = oob_count[r] > 0.0 ? oob(r, c) / oob_count[r] : full(r, c);
    }
    *extras.oob_scores = std::move(oob);
  }
  return FittedModel(std::move(model));
}

}  // namespace phiml
