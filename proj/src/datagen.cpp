#include "phiml/datagen.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "phiml/errors.hpp"
#include "phiml/random.hpp"

namespace phiml {

namespace {

std::size_t checked_count(std::int64_t n) {
  if (n < 0) throw UsageError("sample count must be non-negative, got " + std::to_string(n));
  return static_cast<std::size_t>(n);
}

// Applies a random row permutation to features and labels.
void shuffle_rows(Dataset& data, Rng& rng) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  rng.shuffle(order);
  data = data.subset(order);
}

}  // namespace

double BiasSpec::penalty(const std::string& key) const {
  auto it = penalties.find(key);
  return it == penalties.end() ? 0.0 : it->second;
}

BiasSpec BiasSpec::defaults() {
  return BiasSpec{{
      {"gender=female", 0.5},
      {"gender=nonbinary", 0.8},
      {"ethnicity=C", 0.3},
      {"ethnicity=D", 0.8},
      {"ses=low", 0.5},
  }};
}

void standardize_features(Matrix& features) {
  const std::size_t n = features.rows();
  if (n == 0) return;
  for (std::size_t c = 0; c < features.cols(); ++c) {
    double mean = 0.0;
    for (std::size_t r = 0; r < n; ++r) mean += features(r, c);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t r = 0; r < n; ++r) var += (features(r, c) - mean) * (features(r, c) - mean);
    var /= static_cast<double>(n);
    double sd = var > 0.0 ? std::sqrt(var) : 1.0;
    for (std::size_t r = 0; r < n; ++r) features(r, c) = (features(r, c) - mean) / sd;
  }
}

Dataset gen_exclusion_dataset(std::uint64_t seed, std::int64_t n_in, double ambiguous_frac) {
  const std::size_t n = checked_count(n_in);
  if (!(ambiguous_frac >= 0.0 && ambiguous_frac <= 1.0)) throw UsageError("ambiguous_frac must lie in [0,1]");
  Rng rng(derive_seed(seed, "exclusion"));
  const auto n_ambiguous = static_cast<std::size_t>(std::llround(ambiguous_frac * static_cast<double>(n)));

  Dataset data;
  data.features = Matrix(n, 2);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    int label = rng.uniform() < 0.5 ? 0 : 1;
    double cx = 0.0, cy = 0.0, sd = 0.35;
    if (i >= n_ambiguous) {
      double sign = label == 0 ? -1.0 : 1.0;
      cx = 1.5 * sign;
      cy = 0.6 * sign;
      sd = 1.0;
    }
    data.features(i, 0) = rng.normal(cx, sd);
    data.features(i, 1) = rng.normal(cy, sd);
    data.labels[i] = label;
  }
  shuffle_rows(data, rng);
  standardize_features(data.features);
  return data;
}

Dataset gen_hierarchy_dataset(std::uint64_t seed, std::int64_t n_in) {
  const std::size_t n = checked_count(n_in);
  Rng rng(derive_seed(seed, "hierarchy"));
  // Label mix per severity region: outer (mild), middle (flu), inner (pneumonia).
  const std::vector<std::vector<double>> mix = {
      {0.80, 0.15, 0.05},
      {0.38, 0.50, 0.12},
      {0.25, 0.32, 0.43},
  };
  Dataset data;
  data.features = Matrix(n, 3);
  data.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    double u = rng.normal();
    std::size_t region = u < 0.0 ? 0 : (u < 0.9 ? 1 : 2);
    data.labels[i] = static_cast<double>(rng.categorical(mix[region]));
    data.features(i, 0) = u + rng.normal(0.0, 0.3);
    data.features(i, 1) = 0.8 * u + rng.normal(0.0, 0.6);
    data.features(i, 2) = 0.5 * u + rng.normal(0.0, 0.85);
  }
  standardize_features(data.features);
  return data;
}

Dataset gen_treatment_dataset(std::uint64_t seed, std::int64_t n_in) {
  const std::size_t n = checked_count(n_in);
  Rng rng(derive_seed(seed, "treatment"));
  const double offset[3] = {0.0, 1.0, 2.2};
  Dataset data;
  data.features = Matrix(n, 3);
  data.labels.resize(n);
  std::vector<int> treatment(n);
  for (std::size_t i = 0; i < n; ++i) {
    double age = rng.normal();
    double severity = 0.3 * age + rng.normal(0.0, 0.95);
    double comorbidity = 0.4 * age + 0.3 * severity + rng.normal(0.0, 0.85);
    // sicker patients are steered toward the more aggressive treatments
    int t = static_cast<int>(rng.categorical({1.0, std::exp(0.6 * severity), std::exp(-0.4 + 0.9 * severity)}));
    double y = 1.0 + 0.6 * age + 1.0 * severity + 0.7 * comorbidity + 0.4 * severity * comorbidity + offset[t] +
               0.6 * t * severity + rng.normal(0.0, 0.7);
    data.features(i, 0) = age;
    data.features(i, 1) = severity;
    data.features(i, 2) = comorbidity;
    treatment[i] = t;
    data.labels[i] = y;
  }
  data.treatment = std::move(treatment);
  standardize_features(data.features);
  return data;
}

Dataset gen_environment_dataset(std::uint64_t seed, std::int64_t n_per_env_in) {
  const std::size_t per_env = checked_count(n_per_env_in);
  Rng rng(derive_seed(seed, "environment"));
  const std::size_t n = 4 * per_env;
  Dataset data;
  data.features = Matrix(n, 3);
  data.labels.resize(n);
  std::vector<int> env(n);
  for (std::size_t e = 0; e < 4; ++e) {
    for (std::size_t k = 0; k < per_env; ++k) {
      std::size_t i = e * per_env + k;
      double de = static_cast<double>(e);
      double x0 = rng.normal(0.2 * de, 1.0);
      double x1 = rng.normal();
      double x2 = rng.normal();
      double y = 1.0 + 1.2 * x0 - 0.8 * x1 + 0.5 * x2 + 0.3 * x0 * x1 + 1.5 * de + 0.5 * de * x0 + rng.normal(0.0, 0.5);
      data.features(i, 0) = x0;
      data.features(i, 1) = x1;
      data.features(i, 2) = x2;
      data.labels[i] = y;
      env[i] = static_cast<int>(e);
    }
  }
  data.environment = std::move(env);
  standardize_features(data.features);
  return data;
}

Dataset gen_hiring_dataset(std::uint64_t seed, std::int64_t n_in, const BiasSpec& bias) {
  const std::size_t n = checked_count(n_in);
  for (const auto& [key, value] : bias.penalties) {
    if (!std::isfinite(value)) throw UsageError("bias penalty for '" + key + "' is not finite");
  }
  Rng rng(derive_seed(seed, "hiring"));
  CategoricalColumn gender{"gender", {"male", "female", "nonbinary"}, {}};
  CategoricalColumn ethnicity{"ethnicity", {"A", "B", "C", "D"}, {}};
  CategoricalColumn ses{"ses", {"low", "mid", "high"}, {}};
  const std::vector<double> p_gender = {0.48, 0.45, 0.07};
  const std::vector<double> p_ethnicity = {0.40, 0.25, 0.20, 0.15};
  const std::vector<double> p_ses = {0.30, 0.40, 0.30};
  // experience, education, test score, skills, internship
  const double weights[5] = {0.5, 0.4, 0.6, 0.5, 0.3};
  double weight_norm = 0.0;
  for (double w : weights) weight_norm += w * w;
  weight_norm = std::sqrt(weight_norm);
  const double noise_sd = 0.5;

  Dataset data;
  data.features = Matrix(n, 5);
  data.labels.assign(n, 0.0);
  std::vector<double> merit(n);
  for (std::size_t i = 0; i < n; ++i) {
    gender.codes.push_back(static_cast<int>(rng.categorical(p_gender)));
    ethnicity.codes.push_back(static_cast<int>(rng.categorical(p_ethnicity)));
    ses.codes.push_back(static_cast<int>(rng.categorical(p_ses)));
    double m = 0.0;
    for (std::size_t j = 0; j < 5; ++j) {
      double x = rng.normal();
      data.features(i, j) = x;
      m += weights[j] * x;
    }
    merit[i] = (m / weight_norm + rng.normal(0.0, noise_sd)) / std::sqrt(1.0 + noise_sd * noise_sd);
  }
  // Penalties applied after all random draws.
  std::vector<double> latent(n);
  for (std::size_t i = 0; i < n; ++i) {
    latent[i] = merit[i] - bias.penalty("gender=" + gender.value(i)) -
                bias.penalty("ethnicity=" + ethnicity.value(i)) - bias.penalty("ses=" + ses.value(i));
  }
  const auto n_positive = static_cast<std::size_t>(std::llround(0.3 * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return latent[a] > latent[b]; });
  for (std::size_t k = 0; k < n_positive; ++k) data.labels[order[k]] = 1.0;

  data.sensitive = {std::move(gender), std::move(ethnicity), std::move(ses)};
  standardize_features(data.features);
  return data;
}

}  // namespace phiml
