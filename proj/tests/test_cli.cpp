#include <doctest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

namespace fs = std::filesystem;

namespace {

struct Workdir {
  fs::path path;
  Workdir() : path(fs::temp_directory_path() / ("phiml-cli-" + std::to_string(::getpid()))) {
    fs::create_directories(path);
  }
  ~Workdir() { fs::remove_all(path); }
  std::string operator/(const std::string& name) const { return (path / name).string(); }
};

int cli(const std::string& args) {
  const std::string cmd = std::string("\"") + PHIML_CLI + "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void spit(const std::string& path, const std::string& text) { std::ofstream(path, std::ios::binary) << text; }

long lines(const std::string& text) { return std::count(text.begin(), text.end(), '\n'); }

}  // namespace

TEST_CASE("gen writes header plus rows and is repeatable") {
  Workdir dir;
  CHECK(cli("gen --scenario hiring --seed 42 --n 1500 --out " + (dir / "a.csv")) == 0);
  CHECK(cli("gen --scenario hiring --seed 42 --n 1500 --out " + (dir / "b.csv")) == 0);
  const std::string a = slurp(dir / "a.csv");
  CHECK(lines(a) == 1501);
  CHECK(a == slurp(dir / "b.csv"));
}

TEST_CASE("usage errors exit with 1") {
  Workdir dir;
  CHECK(cli("gen --scenario hiring") == 1);
  CHECK(cli("gen --scenario nope --out " + (dir / "x.csv")) == 1);
  CHECK(cli("") == 1);
  CHECK(cli("run --scenario hierarchy --model mlp --mode posthoc") == 1);
  CHECK(cli("run --scenario exclusion --model forest --mode posthoc --param bogus=1") == 1);
  CHECK(cli("run --scenario exclusion --model forest --mode posthoc --param tau") == 1);
  CHECK(cli("run --scenario exclusion --seed -3") == 1);
  CHECK(cli("run --model forest") == 1);
  CHECK(cli("gen --scenario hiring --seed -3 --out " + (dir / "x.csv")) == 1);
}

TEST_CASE("data errors exit with 2") {
  Workdir dir;
  spit(dir / "bad.csv", "f0,f1,label\n1.0,oops,0\n");
  CHECK(cli("run --scenario exclusion --model linear --mode posthoc --data " + (dir / "bad.csv")) == 2);
  CHECK(cli("run --scenario exclusion --model linear --mode posthoc --data " + (dir / "missing.csv")) == 2);
  spit(dir / "bad.json", "{not json");
  CHECK(cli("report " + (dir / "bad.json")) == 2);
}

TEST_CASE("run reports are byte-identical across invocations") {
  Workdir dir;
  const std::string base = "run --scenario exclusion --model forest --mode posthoc --seed 42 --out ";
  CHECK(cli(base + (dir / "a.json")) == 0);
  CHECK(cli(base + (dir / "b.json")) == 0);
  const std::string a = slurp(dir / "a.json");
  CHECK_FALSE(a.empty());
  CHECK(a == slurp(dir / "b.json"));
  CHECK(a.find("\"violation_rate_after\": 0.0") != std::string::npos);
}

TEST_CASE("run accepts generated data and config files") {
  Workdir dir;
  CHECK(cli("gen --scenario exclusion --seed 42 --n 500 --out " + (dir / "ex.csv")) == 0);
  CHECK(cli("run --scenario exclusion --model linear --mode posthoc --data " + (dir / "ex.csv") + " --out " +
            (dir / "from_csv.json")) == 0);
  CHECK(cli("run --scenario exclusion --model linear --mode posthoc --out " + (dir / "direct.json")) == 0);
  const auto from_csv = nlohmann::json::parse(slurp(dir / "from_csv.json"));
  const auto direct = nlohmann::json::parse(slurp(dir / "direct.json"));
  CHECK(from_csv["metrics"] == direct["metrics"]);

  spit(dir / "run.cfg", "# exclusion run\nscenario = exclusion\nmodel = linear\nmode = baseline\ntau = 0.35\n");
  CHECK(cli("run --config " + (dir / "run.cfg") + " --mode posthoc --out " + (dir / "cfg.json")) == 0);
  const std::string cfg = slurp(dir / "cfg.json");
  CHECK(cfg.find("\"mode\": \"posthoc\"") != std::string::npos);
  CHECK(cfg.find("\"tau\": 0.34999999999999998") != std::string::npos);
}

TEST_CASE("saved models reload as JSON") {
  Workdir dir;
  CHECK(cli("run --scenario hierarchy --model linear --mode posthoc --out " + (dir / "r.json") + " --save-model " +
            (dir / "m.json")) == 0);
  const std::string model = slurp(dir / "m.json");
  CHECK(model.find("\"format_version\"") != std::string::npos);
}

TEST_CASE("infeasible calibration still exits 0") {
  Workdir dir;
  CHECK(cli("run --scenario hiring --model linear --mode posthoc --param min_group_size=100000 --out " +
            (dir / "r.json")) == 0);
  CHECK(slurp(dir / "r.json").find("\"infeasible\": true") != std::string::npos);
}

TEST_CASE("report summarises any mix of reports") {
  Workdir dir;
  CHECK(cli("report --out " + (dir / "empty.csv")) == 0);
  CHECK(lines(slurp(dir / "empty.csv")) == 1);
  CHECK(cli("run --scenario exclusion --model linear --mode posthoc --out " + (dir / "a.json")) == 0);
  CHECK(cli("run --scenario counterfactual --model linear --mode posthoc --out " + (dir / "b.json")) == 0);
  CHECK(cli("report " + (dir / "a.json") + " " + (dir / "b.json") + " --out " + (dir / "sum.csv")) == 0);
  const std::string csv = slurp(dir / "sum.csv");
  CHECK(lines(csv) == 3);
  CHECK(csv.find("\nexclusion,linear,posthoc,42,") != std::string::npos);
  CHECK(csv.find("\ncounterfactual,linear,posthoc,42,") != std::string::npos);
}
