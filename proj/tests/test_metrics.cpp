#include <doctest.h>

#include <vector>

#include "oracles.hpp"
#include "phiml/errors.hpp"
#include "phiml/metrics.hpp"

using namespace phiml;

namespace {

GroupReport rates(std::vector<std::pair<std::string, double>> values) {
  GroupReport report;
  for (auto& [key, rate] : values) {
    GroupStat g;
    g.feature = key.substr(0, key.find('='));
    g.value = key.substr(key.find('=') + 1);
    g.size = 100;
    g.positive_rate = rate;
    report.groups.push_back(g);
  }
  return report;
}

}  // namespace

TEST_CASE("accuracy and mean squared error") {
  const std::vector<double> p{1, 0, 1, 1}, y{1, 1, 1, 0};
  CHECK(accuracy(p, y) == 0.5);
  CHECK(mean_squared_error(std::vector<double>{1.0, 3.0}, std::vector<double>{2.0, 5.0}) == 2.5);
  CHECK(evaluate(std::vector<double>{}, std::vector<double>{}, Task::classification) == 0.0);
  CHECK_THROWS_AS(accuracy(std::vector<double>{1.0}, y), UsageError);
}

TEST_CASE("group report counts sizes, accuracy and positive rates") {
  auto groups = oracle::make_groups({{"sex", {"f", "f", "f", "m", "m"}}, {"age", {"o", "y", "y", "o", "y"}}});
  const std::vector<double> d{1, 0, 1, 1, 0}, y{1, 0, 0, 1, 1};
  auto report = group_report(d, y, groups, 1);
  CHECK(report.accuracy == 0.6);
  CHECK(report.positive_rate == 0.6);
  const GroupStat* f = report.find("sex=f");
  REQUIRE(f);
  CHECK(f->size == 3);
  CHECK(f->accuracy == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(f->positive_rate == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  const GroupStat* m = report.find("sex=m");
  REQUIRE(m);
  CHECK(m->accuracy == 0.5);
  CHECK(report.disparities.size() == 2);
  CHECK(report.disparities[0].feature == "sex");
  CHECK(report.disparities[0].value == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("small groups are reported but left out of disparities") {
  auto groups = oracle::make_groups({{"g", {"a", "a", "a", "b"}}});
  const std::vector<double> d{1, 1, 1, 0}, y{1, 1, 1, 1};
  auto report = group_report(d, y, groups, 2);
  CHECK(report.find("g=b")->small);
  CHECK(report.find("g=b")->accuracy == 0.0);
  CHECK(report.disparities[0].value == 0.0);
}

TEST_CASE("equity deltas on the worked example") {
  auto base = rates({{"g=w", 0.225}, {"g=b", 0.235}});
  auto treated = rates({{"g=w", 0.334}, {"g=b", 0.329}});
  auto e = equity_deltas(base, treated, {"g=w"}, {"g=b"});
  REQUIRE(e.worst_off_rate_improvement_pct);
  CHECK(*e.worst_off_rate_improvement_pct == doctest::Approx(48.4444444444).epsilon(1e-9));
  REQUIRE(e.gap_reduction_pct);
  CHECK(*e.gap_reduction_pct == doctest::Approx(150.0).epsilon(1e-9));
}

TEST_CASE("equity deltas are undefined for zero baselines") {
  auto base = rates({{"g=w", 0.0}, {"g=b", 0.0}});
  auto treated = rates({{"g=w", 0.1}, {"g=b", 0.1}});
  auto e = equity_deltas(base, treated, {"g=w"}, {"g=b"});
  CHECK_FALSE(e.worst_off_rate_improvement_pct);
  CHECK_FALSE(e.gap_reduction_pct);
  CHECK(e.to_json()["gap_reduction_pct"].is_null());
}

TEST_CASE("best-off groups exclude the worst-off and small groups") {
  auto base = rates({{"g=a", 0.1}, {"g=b", 0.2}, {"g=c", 0.3}, {"h=x", 0.4}});
  base.groups[0].accuracy = 0.5;
  base.groups[1].accuracy = 0.9;
  base.groups[2].accuracy = 0.8;
  base.groups[3].accuracy = 0.95;
  base.groups[3].size = 5;
  CHECK(best_off_groups(base, {"g=a"}, 20) == std::vector<std::string>{"g=b"});
  CHECK(best_off_groups(base, {"g=a", "g=c"}, 20) == std::vector<std::string>{"g=b"});
  CHECK(best_off_groups(base, {"g=a"}, 1) == std::vector<std::string>{"h=x"});
}
