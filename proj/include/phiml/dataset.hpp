#pragma once

#include <cstddef>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "phiml/matrix.hpp"

namespace phiml {

/// A categorical column stored as codes into an ordered level list.
struct CategoricalColumn {
  std::string name;
  std::vector<std::string> levels;
  std::vector<int> codes;

  const std::string& value(std::size_t row) const { return levels.at(codes.at(row)); }
  friend bool operator==(const CategoricalColumn&, const CategoricalColumn&) = default;
};

/// Tabular record set. Labels hold class indices (as doubles) for
/// classification data and real outcomes for regression data.
struct Dataset {
  Matrix features;
  std::vector<double> labels;
  std::optional<std::vector<int>> treatment;
  std::optional<std::vector<int>> environment;
  std::vector<CategoricalColumn> sensitive;

  std::size_t size() const { return features.rows(); }
  std::size_t dims() const { return features.cols(); }
  bool empty() const { return size() == 0; }

  /// Throws DataError if any invariant is broken.
  void validate() const;
  Dataset subset(std::span<const std::size_t> rows) const;
  const CategoricalColumn* find_sensitive(const std::string& name) const;

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

/// Number of classes implied by integer labels (max label + 1, at least 1).
std::size_t count_classes(std::span<const double> labels);
std::vector<int> class_labels(std::span<const double> labels);

/// Marginal group membership: one group per (sensitive feature, value) pair.
/// Every row belongs to exactly one group per sensitive feature.
struct Groups {
  std::vector<std::string> keys;  // "feature=value", ordered by column then level
  std::vector<std::string> features;  // feature name of each key
  std::size_t per_row = 0;
  std::vector<int> membership;  // rows x per_row, row-major

  std::size_t rows() const { return per_row == 0 ? 0 : membership.size() / per_row; }
  std::size_t count() const { return keys.size(); }
  std::span<const int> of(std::size_t row) const {
    return {membership.data() + row * per_row, per_row};
  }
  bool contains(std::size_t row, int group) const;
  std::vector<std::size_t> sizes() const;
  Groups subset(std::span<const std::size_t> rows) const;

  static Groups marginal(const Dataset& data);
};

/// CSV export: f0..f{d-1}, then label, treatment, env and sensitive columns.
void write_csv(std::ostream& out, const Dataset& data);
/// Parses the export format back. Throws DataError on malformed input.
Dataset read_csv(std::istream& in);

/// Decimal text with 17 significant digits; parses back to the same double.
std::string format_double(double x);

}  // namespace phiml
