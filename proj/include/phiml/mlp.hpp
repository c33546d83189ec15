#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "phiml/dataset.hpp"
#include "phiml/model.hpp"
#include "phiml/random.hpp"

namespace phiml {

struct LossEval {
  double value = 0.0;
  std::vector<double> grad;  // d value / d logit, one entry per batch row
};

/// Batch loss over the network's output logits. `rows` are the indices of
/// the batch samples in the training set, so losses that need per-sample
/// side information (group membership) can look it up.
using BatchLoss = std::function<LossEval(std::span<const double> logits, std::span<const double> labels,
                                         std::span<const std::size_t> rows)>;

/// Mean binary cross-entropy of sigmoid(logit) against labels in {0,1}.
LossEval mean_bce_loss(std::span<const double> logits, std::span<const double> labels,
                       std::span<const std::size_t> rows);
/// Per-sample binary cross-entropy terms.
std::vector<double> bce_terms(std::span<const double> logits, std::span<const double> labels);

struct MlpParams {
  std::size_t hidden_dim = 64;
  std::size_t hidden_layers = 3;
  double dropout_rate = 0.2;
  std::size_t epochs = 100;
  double learning_rate = 0.001;
  std::uint64_t seed = 42;
  /// Rows per optimizer step; 0 trains full-batch.
  std::size_t batch_size = 0;
  /// Empty means mean_bce_loss.
  BatchLoss loss;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  /// Starting network parameters; empty draws a fresh He-uniform init.
  std::vector<double> initial_parameters;

  void validate() const;
};

/// ReLU feedforward network with a single logit output. Parameters are kept
/// in one flat vector: per layer, the weight matrix (out x in, row-major)
/// followed by the bias vector.
class MlpNetwork {
 public:
  MlpNetwork() = default;
  MlpNetwork(std::size_t input_dims, std::size_t hidden_dim, std::size_t hidden_layers);

  /// He-uniform weights, zero biases.
  void initialize(Rng& rng);

  std::size_t input_dims() const { return sizes_.empty() ? 0 : sizes_.front(); }
  const std::vector<std::size_t>& layer_sizes() const { return sizes_; }
  std::vector<double>& parameters() { return params_; }
  const std::vector<double>& parameters() const { return params_; }

  /// Inference logits (dropout disabled).
  std::vector<double> logits(const Matrix& x) const;

  /// Forward and backward pass over the given rows of `x`. When `dropout_rng`
  /// is non-null, inverted dropout with `dropout_rate` is applied after
  /// every hidden activation. Returns the loss and fills `grad` with
  /// d loss / d parameters.
  double loss_and_gradient(const Matrix& x, std::span<const double> labels, std::span<const std::size_t> rows,
                           const BatchLoss& loss, double dropout_rate, Rng* dropout_rng,
                           std::vector<double>& grad) const;

  nlohmann::json to_json() const;
  static MlpNetwork from_json(const nlohmann::json& doc);

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const { return offsets_[layer] + sizes_[layer + 1] * sizes_[layer]; }

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Binary classifier: class-1 score is sigmoid of the network logit.
class MlpModel : public Predictor {
 public:
  explicit MlpModel(MlpNetwork network);

  Task task() const override { return Task::classification; }
  std::size_t input_dims() const override { return network_.input_dims(); }
  std::size_t n_classes() const override { return 2; }
  ClassScores scores(const Matrix& x) const override;
  nlohmann::json to_json() const override;
  static std::shared_ptr<const MlpModel> from_json(const nlohmann::json& doc);

  const MlpNetwork& network() const { return network_; }

 private:
  MlpNetwork network_;
};

/// Adam optimizer over a flat parameter vector.
class Adam {
 public:
  Adam(std::size_t size, double learning_rate, double beta1, double beta2, double epsilon);
  void step(std::vector<double>& params, const std::vector<double>& grad);

 private:
  double lr_, beta1_, beta2_, eps_;
  double beta1_t_ = 1.0, beta2_t_ = 1.0;
  std::vector<double> m_, v_;
};

/// Trains a binary classifier. Labels must be 0 or 1.
FittedModel fit_mlp(const Dataset& data, const MlpParams& params);
FittedModel fit_mlp(const Matrix& x, std::span<const double> y, const MlpParams& params);

}  // namespace phiml
