#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "phiml/dataset.hpp"

namespace phiml {

/// Additive latent-score penalties keyed by "feature=value" (e.g.
/// "gender=female"), in standard deviations of the unpenalized latent score.
struct BiasSpec {
  std::map<std::string, double> penalties;

  double penalty(const std::string& key) const;
  static BiasSpec defaults();
};

/// Two overlapping Gaussian classes (0 = contract, 1 = patent) plus an
/// `ambiguous_frac` share drawn from the midpoint region with random labels.
Dataset gen_exclusion_dataset(std::uint64_t seed, std::int64_t n, double ambiguous_frac = 0.15);

/// Three severity classes (0 = mild, 1 = flu, 2 = pneumonia) whose regions
/// are nested along a latent severity axis.
Dataset gen_hierarchy_dataset(std::uint64_t seed, std::int64_t n);

/// Features (age, severity, comorbidity), treatment in {0,1,2} assigned with
/// confounding on severity, and a continuous outcome.
Dataset gen_treatment_dataset(std::uint64_t seed, std::int64_t n);

/// Four environments sharing a mechanism, with a shift and slope perturbation
/// that grow linearly with the environment index.
Dataset gen_environment_dataset(std::uint64_t seed, std::int64_t n_per_env);

/// Candidates with five merit features and gender/ethnicity/ses columns.
/// Label is 1 for the top 30% of the penalized latent score.
Dataset gen_hiring_dataset(std::uint64_t seed, std::int64_t n, const BiasSpec& bias = BiasSpec::defaults());

/// Rescales every feature column to zero mean and unit (population) variance.
/// Constant columns are only centered.
void standardize_features(Matrix& features);

}  // namespace phiml
