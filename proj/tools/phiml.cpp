#include <charconv>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "phiml/dataset.hpp"
#include "phiml/errors.hpp"
#include "phiml/experiment.hpp"

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2 };

// key=value lines; blank lines and lines starting with '#' are skipped.
std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw phiml::UsageError("cannot open config file " + path);
  std::map<std::string, std::string> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw phiml::UsageError(path + ":" + std::to_string(lineno) + ": expected key=value");
    }
    auto trim = [](std::string s) {
      s.erase(0, s.find_first_not_of(" \t\r"));
      s.erase(s.find_last_not_of(" \t\r") + 1);
      return s;
    };
    out[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  return out;
}

std::pair<std::string, std::string> split_param(const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos || eq == 0) throw phiml::UsageError("--param expects key=value, got '" + kv + "'");
  return {kv.substr(0, eq), kv.substr(eq + 1)};
}

std::uint64_t parse_seed(const std::string& s) {
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
    throw phiml::UsageError("seed must be a non-negative integer, got '" + s + "'");
  }
  return v;
}

void write_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw phiml::UsageError("cannot write " + path);
  out << text;
  if (!out) throw phiml::UsageError("failed writing " + path);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw phiml::DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct GenArgs {
  std::string scenario;
  std::uint64_t seed = 42;
  std::int64_t n = 0;
  std::string out;
};

struct RunArgs {
  std::optional<std::string> scenario, model, mode, seed, out, data, save_model, config;
  std::vector<std::string> params;
};

struct ReportArgs {
  std::vector<std::string> inputs;
  std::string out;
};

int cmd_gen(const GenArgs& a) {
  phiml::Dataset data = phiml::generate_scenario(a.scenario, a.seed, a.n);
  std::ostringstream csv;
  phiml::write_csv(csv, data);
  write_file(a.out, csv.str());
  return kOk;
}

int cmd_run(const RunArgs& a) {
  std::map<std::string, std::string> settings;
  if (a.config) settings = read_config(*a.config);
  auto take = [&](const char* key, const std::optional<std::string>& flag) -> std::optional<std::string> {
    std::optional<std::string> v;
    if (auto it = settings.find(key); it != settings.end()) {
      v = it->second;
      settings.erase(it);
    }
    if (flag) v = flag;
    return v;
  };
  phiml::RunConfig config;
  auto scenario = take("scenario", a.scenario);
  if (!scenario) throw phiml::UsageError("--scenario is required\n" + phiml::valid_combinations());
  config.scenario = *scenario;
  if (auto v = take("model", a.model)) config.model = *v;
  if (auto v = take("mode", a.mode)) config.mode = *v;
  if (auto v = take("seed", a.seed)) config.seed = parse_seed(*v);
  auto out = take("out", a.out);
  auto data_path = take("data", a.data);
  auto save_model = take("save-model", a.save_model);
  config.params = settings;  // remaining config keys are parameters
  for (const auto& kv : a.params) {
    auto [k, v] = split_param(kv);
    config.params[k] = v;
  }
  config.validate();

  std::optional<phiml::Dataset> data;
  if (data_path) {
    std::ifstream in(*data_path);
    if (!in) throw phiml::DataError("cannot read " + *data_path);
    data = phiml::read_csv(in);
  }
  auto result = phiml::run_experiment(config, data ? &*data : nullptr);
  const std::string text = phiml::dump_json(result.report);
  if (out) {
    write_file(*out, text);
  } else {
    std::cout << text;
  }
  if (save_model) write_file(*save_model, phiml::dump_json(result.model.to_json()));
  return kOk;
}

int cmd_report(const ReportArgs& a) {
  std::vector<nlohmann::json> reports;
  for (const auto& path : a.inputs) {
    try {
      reports.push_back(nlohmann::json::parse(read_file(path)));
    } catch (const nlohmann::json::parse_error& e) {
      throw phiml::DataError(path + ": " + e.what());
    }
  }
  std::ostringstream csv;
  phiml::write_summary_csv(csv, reports);
  if (a.out.empty()) {
    std::cout << csv.str();
  } else {
    write_file(a.out, csv.str());
  }
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Philosophy-informed ML experiments: generate data, run scenarios, summarise reports"};
  app.require_subcommand(1);

  GenArgs gen;
  auto* g = app.add_subcommand("gen", "Write a scenario dataset as CSV");
  g->add_option("--scenario", gen.scenario, "Scenario name")->required();
  g->add_option("--seed", gen.seed, "Random seed");
  g->add_option("--n", gen.n, "Rows (rows per environment for env-ensemble); 0 uses the scenario default");
  g->add_option("--out", gen.out, "Output CSV path")->required();

  RunArgs run;
  auto* r = app.add_subcommand("run", "Run one scenario and write a JSON report");
  r->add_option("--scenario", run.scenario, "Scenario name");
  r->add_option("--model", run.model, "forest, linear or mlp");
  r->add_option("--mode", run.mode, "baseline, posthoc or intrinsic");
  r->add_option("--seed", run.seed, "Random seed");
  r->add_option("--param", run.params, "Parameter override key=value (repeatable)");
  r->add_option("--config", run.config, "key=value file with the same keys as the flags; flags win");
  r->add_option("--data", run.data, "Use this CSV instead of generating the scenario data");
  r->add_option("--out", run.out, "Report path (stdout when omitted)");
  r->add_option("--save-model", run.save_model, "Write the fitted model as JSON");

  ReportArgs rep;
  auto* s = app.add_subcommand("report", "Summarise JSON reports into a CSV table");
  s->add_option("inputs", rep.inputs, "Report files");
  s->add_option("--out", rep.out, "Output CSV path (stdout when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kUsage;
  }

  try {
    if (*g) return cmd_gen(gen);
    if (*r) return cmd_run(run);
    return cmd_report(rep);
  } catch (const phiml::UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const phiml::DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kData;
  }
}
