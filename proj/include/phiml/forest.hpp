#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "phiml/dataset.hpp"
#include "phiml/model.hpp"

namespace phiml {

/// Sufficient statistics of the samples at a tree node.
///
/// Classification nodes fill `class_counts` (k entries) and, when group
/// membership was supplied to the fit, `group_class_counts` (groups x k,
/// row-major). Regression nodes fill `count`, `sum` and `sum_sq`.
struct NodeStats {
  std::span<const double> class_counts;
  std::span<const double> group_class_counts;
  std::size_t n_classes = 0;
  std::size_t n_groups = 0;
  double count = 0.0;
  double sum = 0.0;
  double sum_sq = 0.0;

  std::span<const double> group(std::size_t g) const { return group_class_counts.subspan(g * n_classes, n_classes); }
};

using Impurity = std::function<double(const NodeStats&)>;

/// 1 - sum_c p_c^2 over `counts`; 0 for an empty node.
double gini_from_counts(std::span<const double> counts);
double gini_impurity(const NodeStats& node);
double variance_impurity(const NodeStats& node);

struct ForestParams {
  std::size_t n_trees = 100;
  std::size_t max_depth = 10;
  std::uint64_t seed = 42;
  /// Empty means Gini (classification) or variance (regression).
  Impurity impurity;
  std::size_t min_samples_split = 2;

  void validate() const;
};

/// Optional training-time inputs beyond features and labels.
struct ForestExtras {
  /// Bootstrap sampling weights (uniform when empty).
  std::span<const double> sample_weights;
  /// Group membership used to fill NodeStats::group_class_counts.
  const Groups* groups = nullptr;
  /// Number of classes; 0 infers max label + 1.
  std::size_t n_classes = 0;
  /// When set (classification only), receives each training row's class
  /// scores averaged over the trees whose bootstrap left it out; rows that
  /// every tree sampled get the full-forest scores.
  ClassScores* oob_scores = nullptr;
};

/// Flat array representation of one tree. Leaves have feature == -1.
struct Tree {
  std::vector<int> feature;
  std::vector<double> threshold;
  std::vector<int> left;
  std::vector<int> right;
  std::size_t value_width = 1;
  std::vector<double> value;  // nodes x value_width

  std::size_t leaf_for(std::span<const double> x) const;
  std::span<const double> leaf_value(std::size_t node) const {
    return {value.data() + node * value_width, value_width};
  }
  friend bool operator==(const Tree&, const Tree&) = default;
};

class ForestModel : public Predictor {
 public:
  ForestModel(Task task, std::size_t input_dims, std::size_t n_classes, std::vector<Tree> trees);

  Task task() const override { return task_; }
  std::size_t input_dims() const override { return input_dims_; }
  std::size_t n_classes() const override { return n_classes_; }
  ClassScores scores(const Matrix& x) const override;
  std::vector<double> values(const Matrix& x) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<const ForestModel> from_json(const nlohmann::json& doc);

  const std::vector<Tree>& trees() const { return trees_; }

 private:
  Task task_;
  std::size_t input_dims_;
  std::size_t n_classes_;
  std::vector<Tree> trees_;
};

/// Bagged trees grown on bootstrap samples with per-split feature
/// subsampling (ceil(sqrt(d)) for classification, ceil(d/3) for regression).
/// Class scores are the mean of per-tree leaf class frequencies.
FittedModel fit_forest(const Dataset& data, const ForestParams& params, Task task);
FittedModel fit_forest(const Matrix& x, std::span<const double> y, const ForestParams& params, Task task,
                       const ForestExtras& extras = {});

}  // namespace phiml
