#include "phiml/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

#include "phiml/errors.hpp"

namespace phiml {

namespace {

template <class T>
std::vector<T> pick(const std::vector<T>& v, std::span<const std::size_t> rows) {
  std::vector<T> out;
  out.reserve(rows.size());
  for (auto r : rows) out.push_back(v[r]);
  return out;
}

// Canonical level order for the sensitive columns the generators emit.
const std::map<std::string, std::vector<std::string>>& known_levels() {
  static const std::map<std::string, std::vector<std::string>> table = {
      {"gender", {"male", "female", "nonbinary"}},
      {"ethnicity", {"A", "B", "C", "D"}},
      {"ses", {"low", "mid", "high"}},
  };
  return table;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) cells.push_back(cell);
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

double parse_double(const std::string& text, std::size_t line_no) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last || !std::isfinite(value)) {
    throw DataError("line " + std::to_string(line_no) + ": invalid number '" + text + "'");
  }
  return value;
}

int parse_int(const std::string& text, std::size_t line_no) {
  int value = 0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size()) {
    throw DataError("line " + std::to_string(line_no) + ": invalid integer '" + text + "'");
  }
  return value;
}

}  // namespace

void Dataset::validate() const {
  const std::size_t n = size();
  for (double v : features.data()) {
    if (!std::isfinite(v)) throw DataError("non-finite feature value");
  }
  if (labels.size() != n) throw DataError("label count does not match feature rows");
  if (treatment && treatment->size() != n) throw DataError("treatment column length mismatch");
  if (environment && environment->size() != n) throw DataError("environment column length mismatch");
  for (const auto& col : sensitive) {
    if (col.codes.size() != n) throw DataError("sensitive column '" + col.name + "' length mismatch");
    for (int c : col.codes) {
      if (c < 0 || static_cast<std::size_t>(c) >= col.levels.size()) {
        throw DataError("sensitive column '" + col.name + "' has an invalid code");
      }
    }
  }
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out;
  out.features = features.select_rows(rows);
  out.labels = pick(labels, rows);
  if (treatment) out.treatment = pick(*treatment, rows);
  if (environment) out.environment = pick(*environment, rows);
  for (const auto& col : sensitive) {
    out.sensitive.push_back({col.name, col.levels, pick(col.codes, rows)});
  }
  return out;
}

const CategoricalColumn* Dataset::find_sensitive(const std::string& name) const {
  for (const auto& col : sensitive) {
    if (col.name == name) return &col;
  }
  return nullptr;
}

std::size_t count_classes(std::span<const double> labels) {
  double top = 0.0;
  for (double y : labels) top = std::max(top, y);
  return static_cast<std::size_t>(top) + 1;
}

std::vector<int> class_labels(std::span<const double> labels) {
  std::vector<int> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    double y = labels[i];
    if (y < 0.0 || y != std::floor(y)) throw UsageError("class labels must be non-negative integers");
    out[i] = static_cast<int>(y);
  }
  return out;
}

bool Groups::contains(std::size_t row, int group) const {
  auto m = of(row);
  return std::find(m.begin(), m.end(), group) != m.end();
}

std::vector<std::size_t> Groups::sizes() const {
  std::vector<std::size_t> out(keys.size(), 0);
  for (int g : membership) ++out[g];
  return out;
}

Groups Groups::subset(std::span<const std::size_t> rows) const {
  Groups out;
  out.keys = keys;
  out.features = features;
  out.per_row = per_row;
  out.membership.reserve(rows.size() * per_row);
  for (auto r : rows) {
    auto m = of(r);
    out.membership.insert(out.membership.end(), m.begin(), m.end());
  }
  return out;
}

Groups Groups::marginal(const Dataset& data) {
  if (data.sensitive.empty()) throw UsageError("dataset has no sensitive columns");
  Groups g;
  std::vector<int> offset;
  for (const auto& col : data.sensitive) {
    offset.push_back(static_cast<int>(g.keys.size()));
    for (const auto& level : col.levels) {
      g.keys.push_back(col.name + "=" + level);
      g.features.push_back(col.name);
    }
  }
  g.per_row = data.sensitive.size();
  g.membership.resize(data.size() * g.per_row);
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < g.per_row; ++c) {
      g.membership[r * g.per_row + c] = offset[c] + data.sensitive[c].codes[r];
    }
  }
  return g;
}

std::string format_double(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

void write_csv(std::ostream& out, const Dataset& data) {
  std::vector<std::string> header;
  for (std::size_t c = 0; c < data.dims(); ++c) header.push_back("f" + std::to_string(c));
  header.emplace_back("label");
  if (data.treatment) header.emplace_back("treatment");
  if (data.environment) header.emplace_back("env");
  for (const auto& col : data.sensitive) header.push_back(col.name);
  for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
  out << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.dims(); ++c) out << format_double(data.features(r, c)) << ',';
    out << format_double(data.labels[r]);
    if (data.treatment) out << ',' << (*data.treatment)[r];
    if (data.environment) out << ',' << (*data.environment)[r];
    for (const auto& col : data.sensitive) out << ',' << col.value(r);
    out << '\n';
  }
}

Dataset read_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("missing CSV header");
  auto header = split_csv_line(line);

  std::size_t d = 0;
  while (d < header.size() && header[d] == "f" + std::to_string(d)) ++d;
  std::ptrdiff_t label_col = -1, treatment_col = -1, env_col = -1;
  std::vector<std::size_t> cat_cols;
  for (std::size_t c = d; c < header.size(); ++c) {
    const auto& name = header[c];
    if (name == "label") label_col = static_cast<std::ptrdiff_t>(c);
    else if (name == "treatment") treatment_col = static_cast<std::ptrdiff_t>(c);
    else if (name == "env") env_col = static_cast<std::ptrdiff_t>(c);
    else if (!name.empty() && name[0] == 'f' && name.find_first_not_of("0123456789", 1) == std::string::npos)
      throw DataError("feature columns must be contiguous f0..f{d-1}");
    else cat_cols.push_back(c);
  }
  if (label_col < 0) throw DataError("CSV has no label column");

  std::vector<double> feats;
  Dataset data;
  std::vector<int> treatment, env;
  std::vector<std::vector<std::string>> raw(cat_cols.size());
  std::size_t n = 0;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("line " + std::to_string(line_no) + ": expected " + std::to_string(header.size()) +
                      " cells, got " + std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < d; ++c) feats.push_back(parse_double(cells[c], line_no));
    data.labels.push_back(parse_double(cells[label_col], line_no));
    if (treatment_col >= 0) treatment.push_back(parse_int(cells[treatment_col], line_no));
    if (env_col >= 0) env.push_back(parse_int(cells[env_col], line_no));
    for (std::size_t k = 0; k < cat_cols.size(); ++k) raw[k].push_back(cells[cat_cols[k]]);
    ++n;
  }
  data.features = Matrix(n, d, std::move(feats));
  if (treatment_col >= 0) data.treatment = std::move(treatment);
  if (env_col >= 0) data.environment = std::move(env);

  for (std::size_t k = 0; k < cat_cols.size(); ++k) {
    CategoricalColumn col;
    col.name = header[cat_cols[k]];
    auto known = known_levels().find(col.name);
    if (known != known_levels().end()) {
      col.levels = known->second;
    }
    for (const auto& v : raw[k]) {
      if (std::find(col.levels.begin(), col.levels.end(), v) == col.levels.end()) {
        if (known != known_levels().end()) {
          throw DataError("column '" + col.name + "' has unknown value '" + v + "'");
        }
        col.levels.push_back(v);
      }
    }
    for (const auto& v : raw[k]) {
      auto it = std::find(col.levels.begin(), col.levels.end(), v);
      col.codes.push_back(static_cast<int>(it - col.levels.begin()));
    }
    data.sensitive.push_back(std::move(col));
  }
  data.validate();
  return data;
}

}  // namespace phiml
