#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "phiml/constraints.hpp"
#include "phiml/dataset.hpp"
#include "phiml/enforcers.hpp"
#include "phiml/matrix.hpp"
#include "phiml/mlp.hpp"
#include "phiml/random.hpp"

namespace oracle {

using phiml::ClassPair;
using phiml::ConstraintSet;
using phiml::Matrix;

inline Matrix random_scores(phiml::Rng& rng, std::size_t rows, std::size_t k) {
  Matrix m(rows, k);
  for (double& v : m.data()) v = rng.uniform();
  return m;
}

inline double exclusion_rate(const Matrix& s, const ConstraintSet& cs) {
  if (s.rows() == 0) return 0.0;
  int bad = 0;
  for (std::size_t r = 0; r < s.rows(); ++r) {
    bool any = false;
    for (const auto& p : cs.exclusions) any = any || (s(r, p.a) > cs.tau && s(r, p.b) > cs.tau);
    bad += any ? 1 : 0;
  }
  return static_cast<double>(bad) / static_cast<double>(s.rows());
}

inline double implication_rate(const Matrix& s, const ConstraintSet& cs) {
  if (s.rows() == 0) return 0.0;
  int bad = 0;
  for (std::size_t r = 0; r < s.rows(); ++r) {
    bool any = false;
    for (const auto& p : cs.implications) any = any || (s(r, p.a) > cs.tau && s(r, p.b) < cs.tau);
    bad += any ? 1 : 0;
  }
  return static_cast<double>(bad) / static_cast<double>(s.rows());
}

inline double counterfactual_rate(const std::vector<double>& factual, const Matrix& cf, double tau_cf) {
  if (factual.empty()) return 0.0;
  int bad = 0;
  for (std::size_t r = 0; r < cf.rows(); ++r) {
    double worst = 0.0;
    for (std::size_t j = 0; j < cf.cols(); ++j) worst = std::max(worst, std::abs(cf(r, j) - factual[r]));
    bad += worst > tau_cf ? 1 : 0;
  }
  return static_cast<double>(bad) / static_cast<double>(factual.size());
}

/// Groups from categorical columns given as (name, per-row values).
inline phiml::Groups make_groups(const std::vector<std::pair<std::string, std::vector<std::string>>>& columns) {
  phiml::Dataset d;
  std::size_t n = columns.empty() ? 0 : columns.front().second.size();
  d.features = Matrix(n, 1);
  d.labels.assign(n, 0.0);
  for (const auto& [name, values] : columns) {
    phiml::CategoricalColumn c;
    c.name = name;
    for (const auto& v : values) {
      auto it = std::find(c.levels.begin(), c.levels.end(), v);
      if (it == c.levels.end()) {
        c.levels.push_back(v);
        it = c.levels.end() - 1;
      }
      c.codes.push_back(static_cast<int>(it - c.levels.begin()));
    }
    std::vector<std::string> sorted = c.levels;
    std::sort(sorted.begin(), sorted.end());
    for (int& code : c.codes) {
      code = static_cast<int>(std::find(sorted.begin(), sorted.end(), c.levels[code]) - sorted.begin());
    }
    c.levels = sorted;
    d.sensitive.push_back(std::move(c));
  }
  return phiml::Groups::marginal(d);
}

struct Calibration {
  std::vector<int> worst;
  bool infeasible = true;
  double threshold = 0.5;
  double accuracy = 0.0;
};

/// Exhaustive search over every shared worst-off threshold on the grid.
inline Calibration enumerate_calibration(const std::vector<double>& p, const std::vector<double>& y,
                                         const phiml::Groups& g, const phiml::CalibrationConfig& cfg) {
  const std::size_t n = p.size(), k = g.count();
  auto in_group = [&](std::size_t r, std::size_t j) {
    for (int m : g.of(r)) {
      if (m == static_cast<int>(j)) return true;
    }
    return false;
  };
  std::vector<double> hits(k, 0.0), sizes(k, 0.0);
  double base_correct = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    double ok = ((p[r] > 0.5) == (y[r] == 1.0)) ? 1.0 : 0.0;
    base_correct += ok;
    for (std::size_t j = 0; j < k; ++j) {
      if (in_group(r, j)) {
        sizes[j] += 1.0;
        hits[j] += ok;
      }
    }
  }
  std::vector<std::pair<double, int>> ranked;
  for (std::size_t j = 0; j < k; ++j) {
    if (sizes[j] >= static_cast<double>(cfg.min_group_size)) ranked.emplace_back(hits[j] / sizes[j], static_cast<int>(j));
  }
  std::sort(ranked.begin(), ranked.end());
  Calibration out;
  if (ranked.empty()) return out;
  std::size_t want = 1;
  while (static_cast<double>(want) < cfg.worst_off_fraction * static_cast<double>(ranked.size()) - 1e-9) ++want;
  want = std::min({want, cfg.max_worst_off_groups, ranked.size()});
  for (std::size_t i = 0; i < want; ++i) out.worst.push_back(ranked[i].second);

  const double base_acc = base_correct / static_cast<double>(n);
  const int steps = static_cast<int>(std::lround(1.0 / cfg.threshold_step));
  struct Candidate {
    int i;
    double objective, accuracy;
  };
  std::vector<Candidate> feasible;
  for (int i = 1; i < steps; ++i) {
    const double t = static_cast<double>(i) / steps;
    std::vector<double> wh(want, 0.0), ws(want, 0.0);
    double correct = 0.0;
    for (std::size_t r = 0; r < n; ++r) {
      bool in_worst = false;
      for (int w : out.worst) in_worst = in_worst || in_group(r, static_cast<std::size_t>(w));
      double ok = ((p[r] > (in_worst ? t : 0.5)) == (y[r] == 1.0)) ? 1.0 : 0.0;
      correct += ok;
      for (std::size_t w = 0; w < want; ++w) {
        if (in_group(r, static_cast<std::size_t>(out.worst[w]))) {
          ws[w] += 1.0;
          wh[w] += ok;
        }
      }
    }
    const double acc = correct / static_cast<double>(n);
    if (acc < cfg.min_accuracy_retention * base_acc) continue;
    double lo = 1.0, mean = 0.0;
    for (std::size_t w = 0; w < want; ++w) {
      lo = std::min(lo, wh[w] / ws[w]);
      mean += wh[w] / ws[w] / static_cast<double>(want);
    }
    feasible.push_back({i, cfg.minimax_weight * lo + cfg.average_weight * mean, acc});
  }
  if (feasible.empty()) return out;
  double best = -1.0;
  for (const auto& c : feasible) best = std::max(best, c.objective);
  const Candidate* pick = nullptr;
  for (const auto& c : feasible) {
    if (c.objective < best - 1e-12) continue;
    if (!pick || std::abs(2 * c.i - steps) < std::abs(2 * pick->i - steps)) pick = &c;
  }
  out.infeasible = false;
  out.threshold = static_cast<double>(pick->i) / steps;
  out.accuracy = pick->accuracy;
  return out;
}

/// Largest relative error between the analytic parameter gradient of a
/// small random network and central finite differences of its loss.
inline double network_gradient_error(phiml::Rng& rng, const phiml::BatchLoss& loss, std::size_t rows = 12,
                                     std::size_t dims = 3) {
  phiml::MlpNetwork net(dims, 5, 2);
  net.initialize(rng);
  for (double& w : net.parameters()) w += rng.normal(0.0, 0.1);
  Matrix x(rows, dims);
  for (double& v : x.data()) v = rng.normal();
  std::vector<double> y(rows);
  for (std::size_t r = 0; r < rows; ++r) y[r] = r % 2 == 0 ? 1.0 : 0.0;
  std::vector<std::size_t> idx(rows);
  std::iota(idx.begin(), idx.end(), 0);

  std::vector<double> grad, scratch;
  net.loss_and_gradient(x, y, idx, loss, 0.0, nullptr, grad);
  double worst = 0.0;
  const double h = 1e-6;
  for (std::size_t i = 0; i < net.parameters().size(); ++i) {
    const double keep = net.parameters()[i];
    net.parameters()[i] = keep + h;
    double up = net.loss_and_gradient(x, y, idx, loss, 0.0, nullptr, scratch);
    net.parameters()[i] = keep - h;
    double down = net.loss_and_gradient(x, y, idx, loss, 0.0, nullptr, scratch);
    net.parameters()[i] = keep;
    const double numeric = (up - down) / (2.0 * h);
    const double scale = std::max(std::abs(numeric), std::abs(grad[i]));
    if (scale < 1e-7) continue;
    worst = std::max(worst, std::abs(numeric - grad[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
