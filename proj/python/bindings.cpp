#include <map>
#include <string>
#include <vector>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "phiml/constraints.hpp"
#include "phiml/dataset.hpp"
#include "phiml/enforcers.hpp"
#include "phiml/errors.hpp"
#include "phiml/experiment.hpp"

namespace py = pybind11;
using namespace phiml;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Matrix to_matrix(const Array& a) {
  if (a.ndim() != 2) throw UsageError("expected a 2-D array");
  const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
  return Matrix(rows, cols, std::vector<double>(a.data(), a.data() + rows * cols));
}

std::vector<double> to_vector(const Array& a) {
  if (a.ndim() != 1) throw UsageError("expected a 1-D array");
  return {a.data(), a.data() + a.shape(0)};
}

Array to_array(const Matrix& m) {
  Array out({m.rows(), m.cols()});
  std::copy(m.data().begin(), m.data().end(), out.mutable_data());
  return out;
}

Array to_array(const std::vector<double>& v) {
  Array out(static_cast<py::ssize_t>(v.size()));
  std::copy(v.begin(), v.end(), out.mutable_data());
  return out;
}

ConstraintSet make_set(const std::vector<std::pair<std::size_t, std::size_t>>& exclusions,
                       const std::vector<std::pair<std::size_t, std::size_t>>& implications, double tau, double rho) {
  ConstraintSet cs;
  for (auto [a, b] : exclusions) cs.exclusions.push_back({a, b});
  for (auto [a, b] : implications) cs.implications.push_back({a, b});
  cs.tau = tau;
  cs.rho = rho;
  return cs;
}

py::dict dataset_dict(const Dataset& d) {
  py::dict out;
  out["features"] = to_array(d.features);
  out["labels"] = to_array(d.labels);
  if (d.treatment) out["treatment"] = *d.treatment;
  if (d.environment) out["environment"] = *d.environment;
  py::dict sensitive;
  for (const auto& c : d.sensitive) {
    std::vector<std::string> values;
    for (std::size_t r = 0; r < d.size(); ++r) values.push_back(c.value(r));
    sensitive[py::str(c.name)] = values;
  }
  out["sensitive"] = sensitive;
  return out;
}

std::string run_report(const std::string& scenario, const std::string& model, const std::string& mode,
                       std::uint64_t seed, const std::map<std::string, std::string>& params) {
  RunConfig config{scenario, model, mode, seed, params};
  config.validate();
  py::gil_scoped_release release;
  return dump_json(run_experiment(config).report);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Constraint enforcement, fairness calibration and experiment runs";

  py::register_exception<UsageError>(m, "UsageError", PyExc_ValueError);
  py::register_exception<DataError>(m, "DataError", PyExc_RuntimeError);

  m.def("scenarios", &scenario_names);
  m.def("valid_combinations", &valid_combinations);
  m.def(
      "generate",
      [](const std::string& scenario, std::uint64_t seed, std::int64_t n) {
        return dataset_dict(generate_scenario(scenario, seed, n));
      },
      py::arg("scenario"), py::arg("seed") = 42, py::arg("n") = 0);
  m.def("run_report", &run_report, py::arg("scenario"), py::arg("model"), py::arg("mode"), py::arg("seed"),
        py::arg("params"));

  m.def(
      "exclusion_violation_rate",
      [](const Array& scores, const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double tau) {
        return exclusion_violation_rate(to_matrix(scores), make_set(pairs, {}, tau, 0.3));
      },
      py::arg("scores"), py::arg("pairs"), py::arg("tau") = 0.4);
  m.def(
      "implication_violation_rate",
      [](const Array& scores, const std::vector<std::pair<std::size_t, std::size_t>>& edges, double tau) {
        return implication_violation_rate(to_matrix(scores), make_set({}, edges, tau, 0.3));
      },
      py::arg("scores"), py::arg("edges"), py::arg("tau") = 0.4);
  m.def(
      "apply_mutual_exclusion",
      [](const Array& scores, const std::vector<std::pair<std::size_t, std::size_t>>& pairs, double tau, double rho) {
        return to_array(apply_mutual_exclusion(to_matrix(scores), make_set(pairs, {}, tau, rho)));
      },
      py::arg("scores"), py::arg("pairs"), py::arg("tau") = 0.4, py::arg("rho") = 0.3);
  m.def(
      "apply_implication_transfer",
      [](const Array& scores, const std::vector<std::pair<std::size_t, std::size_t>>& edges, double tau, double rho) {
        return to_array(apply_implication_transfer(to_matrix(scores), make_set({}, edges, tau, rho)));
      },
      py::arg("scores"), py::arg("edges"), py::arg("tau") = 0.4, py::arg("rho") = 0.3);
  m.def(
      "counterfactual_violation_rate",
      [](const Array& factual, const Array& counterfactual, double tau_cf) {
        return counterfactual_violation_rate(to_vector(factual), to_matrix(counterfactual), RepairConfig{tau_cf});
      },
      py::arg("factual"), py::arg("counterfactual"), py::arg("tau_cf") = 1.5);
  m.def(
      "repair_counterfactuals",
      [](const Array& factual, const Array& counterfactual, double tau_cf) {
        return to_array(repair_counterfactuals(to_vector(factual), to_matrix(counterfactual), RepairConfig{tau_cf}));
      },
      py::arg("factual"), py::arg("counterfactual"), py::arg("tau_cf") = 1.5);
}
