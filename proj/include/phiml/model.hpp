#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "phiml/matrix.hpp"

namespace phiml {

enum class Task { classification, regression };

const char* to_string(Task task);
Task task_from_string(const std::string& name);

/// Interface implemented by every trained learner. Implementations are
/// immutable once constructed.
class Predictor {
 public:
  virtual ~Predictor() = default;
  virtual Task task() const = 0;
  virtual std::size_t input_dims() const = 0;
  virtual std::size_t n_classes() const { return 0; }
  virtual ClassScores scores(const Matrix& x) const;
  virtual std::vector<double> values(const Matrix& x) const;
  virtual nlohmann::json to_json() const = 0;
};

/// Shared handle to an immutable trained predictor. Cheap to copy and safe
/// to query from several threads.
class FittedModel {
 public:
  FittedModel() = default;
  explicit FittedModel(std::shared_ptr<const Predictor> impl);

  bool valid() const { return impl_ != nullptr; }
  Task task() const;
  std::size_t input_dims() const;
  std::size_t n_classes() const;

  /// n x k class probabilities. Classification models only.
  ClassScores class_scores(const Matrix& x) const;
  /// Argmax class (ties to the lower index) or point prediction.
  std::vector<double> predict(const Matrix& x) const;

  nlohmann::json to_json() const;
  static FittedModel from_json(const nlohmann::json& doc);

  const Predictor& predictor() const;
  template <class T>
  const T* as() const {
    return dynamic_cast<const T*>(impl_.get());
  }

 private:
  void check_input(const Matrix& x) const;
  std::shared_ptr<const Predictor> impl_;
};

ClassScores class_scores(const FittedModel& model, const Matrix& x);
std::vector<double> predict(const FittedModel& model, const Matrix& x);

/// Row-wise argmax with ties broken toward the lower class index.
std::vector<double> argmax_labels(const ClassScores& scores);

/// Version tag written into serialized models.
inline constexpr int kModelFormatVersion = 1;

}  // namespace phiml
