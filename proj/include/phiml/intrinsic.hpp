#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "phiml/constraints.hpp"
#include "phiml/dataset.hpp"
#include "phiml/forest.hpp"
#include "phiml/mlp.hpp"
#include "phiml/model.hpp"

namespace phiml {

enum class Family { forest, linear, mlp };

const char* to_string(Family family);
/// Accepts forest, linear (alias logistic) and mlp.
Family family_from_string(const std::string& name);

/// Which learner to fit and with which settings.
struct LearnerSpec {
  Family family = Family::forest;
  ForestParams forest;
  MlpParams mlp;
};

/// Plain fit of the chosen family.
FittedModel fit_base(const LearnerSpec& spec, const Dataset& data, Task task);

/// Exclusion repair followed by implication transfer.
ClassScores logic_layer(const ClassScores& scores, const ConstraintSet& cs);

/// Wraps a classifier so that its class scores always pass through logic_layer.
class LogicLayerModel : public Predictor {
 public:
  LogicLayerModel(FittedModel inner, ConstraintSet cs);

  Task task() const override { return Task::classification; }
  std::size_t input_dims() const override { return inner_.input_dims(); }
  std::size_t n_classes() const override { return inner_.n_classes(); }
  ClassScores scores(const Matrix& x) const override;
  nlohmann::json to_json() const override;

  const FittedModel& inner() const { return inner_; }
  const ConstraintSet& constraints() const { return cs_; }

 private:
  FittedModel inner_;
  ConstraintSet cs_;
};

struct ConstraintLossConfig {
  double lambda = 50.0;
  double alpha = 1.0;
  std::size_t rounds = 3;

  void validate() const;
};

/// Training that discourages exclusion violations. Gradient learners start
/// from the plain fit and continue with lambda * mean V(x) added to their
/// loss; the forest is refit `rounds` times on a bootstrap weighted by
/// exp(-alpha * V(x)) from the previous forest's out-of-bag scores.
FittedModel constraint_aware_fit(const LearnerSpec& spec, const Dataset& data, const ConstraintSet& cs,
                                 const ConstraintLossConfig& config);

/// Sample weights exp(-alpha * V) for the exclusion violation mass V of each row.
std::vector<double> violation_weights(const ClassScores& scores, const ConstraintSet& cs, double alpha);

/// Plain fit wrapped in the logic layer. The network is additionally trained
/// through the layer, with cross-entropy taken on the post-layer scores.
FittedModel logic_guided_fit(const LearnerSpec& spec, const Dataset& data, const ConstraintSet& cs);

/// Cross-entropy of post-layer scores for a binary network; exposed for
/// gradient checks.
LossEval logic_layer_loss(std::span<const double> logits, std::span<const double> labels, const ConstraintSet& cs);

struct RawlsianForestConfig {
  double lambda = 0.3;
  double minimax_weight = 0.7;
  double average_weight = 0.3;
  std::size_t min_group_size = 20;

  void validate() const;
};

/// (1 - lambda) Gini + lambda [minimax max_g Gini_g + average mean_g Gini_g]
/// over the groups with at least min_group_size samples at the node; plain
/// Gini when none qualify.
double rawlsian_impurity(const NodeStats& node, const RawlsianForestConfig& config);

/// Forest grown with rawlsian_impurity. Groups enter only the impurity.
FittedModel rawlsian_forest_fit(const Dataset& data, const Groups& groups, const ForestParams& params,
                                const RawlsianForestConfig& config);

struct RawlsianLossConfig {
  double lambda = 0.7;
  double minimax_weight = 0.5;
  double average_weight = 0.3;
  double variance_weight = 0.2;
  std::size_t min_group_size = 20;

  void validate() const;
};

/// minimax max + average mean + variance population-variance of the group losses.
double rawlsian_objective(std::span<const double> group_losses, const RawlsianLossConfig& config);

/// lambda * psi(group BCEs) + (1 - lambda) * mean BCE over the batch rows,
/// with its gradient with respect to the logits. Groups with fewer than
/// min_group_size rows in the batch are skipped; psi falls back to the mean
/// BCE when none remain.
LossEval rawlsian_loss(std::span<const double> logits, std::span<const double> labels,
                       std::span<const std::size_t> rows, const Groups& groups, const RawlsianLossConfig& config);

FittedModel rawlsian_mlp_fit(const Dataset& data, const Groups& groups, const MlpParams& params,
                             const RawlsianLossConfig& config);

/// Regression ensemble over environments. Input rows carry the features
/// followed by the environment id in the last column.
class EnvEnsembleModel : public Predictor {
 public:
  EnvEnsembleModel(std::vector<FittedModel> experts, FittedModel meta);

  Task task() const override { return Task::regression; }
  std::size_t input_dims() const override { return experts_.front().input_dims() + 1; }
  std::vector<double> values(const Matrix& x) const override;
  nlohmann::json to_json() const override;

  const std::vector<FittedModel>& experts() const { return experts_; }
  const FittedModel& meta() const { return meta_; }
  /// Expert predictions followed by the environment id.
  Matrix meta_inputs(const Matrix& x) const;

 private:
  std::vector<FittedModel> experts_;
  FittedModel meta_;
};

/// Features with the environment id appended as the last column.
Matrix with_environment(const Dataset& data);

/// One expert per training environment plus a meta-model of the same family
/// on (expert predictions, environment id), fit on the training rows.
FittedModel env_ensemble_fit(const Dataset& data, std::span<const int> train_envs, const LearnerSpec& spec);

}  // namespace phiml
